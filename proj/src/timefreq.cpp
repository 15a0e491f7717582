#include "wavemodal/timefreq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <tuple>

#include "wavemodal/error.hpp"
#include "wavemodal/fft.hpp"

namespace wavemodal {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Padding covers four envelope standard deviations at the lowest frequency.
std::size_t transform_length(std::size_t n_time, double f_min, double dt, const WaveletSpec& spec) {
    const double sigma_t = spec.center_frequency() / (kTwoPi * f_min);
    const auto pad = static_cast<std::size_t>(std::ceil(4.0 * sigma_t / dt));
    return next_pow2(n_time + pad);
}

double scale_of(double f_hz, const WaveletSpec& spec) {
    return spec.center_frequency() / (kTwoPi * f_hz);
}

// Trapezoid weights over angular frequency.
std::vector<double> trapezoid_weights(const FrequencyGrid& grid) {
    const std::size_t n = grid.size();
    std::vector<double> w(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double h = kTwoPi * (grid[i + 1] - grid[i]);
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    return w;
}

std::vector<double> icwt_unscaled(const Spectrogram& s) {
    const std::size_t n = s.n_time();
    const std::size_t len = transform_length(n, s.grid.min(), s.dt, s.wavelet);
    Fft fft(len);
    const auto xi = fft_angular_frequencies(len, s.dt);
    const auto weights = trapezoid_weights(s.grid);
    const double wc = s.wavelet.center_frequency();

    std::vector<cplx> row(len), row_hat(len), acc(len, cplx{});
    for (std::size_t r = 0; r < s.n_freq(); ++r) {
        if (weights[r] == 0.0) continue;
        std::fill(row.begin(), row.end(), cplx{});
        for (std::size_t c = 0; c < n; ++c) row[c] = s.values(static_cast<Eigen::Index>(r),
                                                              static_cast<Eigen::Index>(c));
        fft.forward(row, row_hat);
        const double a = scale_of(s.grid[r], s.wavelet);
        const double root_a = std::sqrt(a);
        for (std::size_t k = 0; k < len; ++k) {
            const double psi = morlet_spectrum(a * xi[k], wc);
            if (psi != 0.0) acc[k] += weights[r] * root_a * psi * row_hat[k];
        }
    }
    const auto y = fft.inverse(acc);
    const double norm = 2.0 / (wc * s.wavelet.admissibility_constant());
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = norm * y[i].real();
    return out;
}

struct GainKey {
    std::vector<double> grid;
    double dt;
    double center;
    bool operator<(const GainKey& o) const {
        return std::tie(dt, center, grid) < std::tie(o.dt, o.center, o.grid);
    }
};

}  // namespace

FrequencyGrid::FrequencyGrid(std::vector<double> hz, GridSpacing spacing)
    : hz_(std::move(hz)), spacing_(spacing) {
    if (hz_.empty()) throw ValidationError("frequency grid is empty");
    for (std::size_t i = 0; i < hz_.size(); ++i) {
        if (!std::isfinite(hz_[i]) || hz_[i] <= 0.0)
            throw ValidationError("frequency grid values must be positive and finite");
        if (i > 0 && hz_[i] <= hz_[i - 1])
            throw ValidationError("frequency grid must be strictly increasing");
    }
}

FrequencyGrid FrequencyGrid::linear(double lo_hz, double hi_hz, std::size_t count) {
    if (count < 2 || !(lo_hz > 0.0) || !(hi_hz > lo_hz))
        throw ValidationError("linear grid needs 0 < lo < hi and at least two points");
    std::vector<double> hz(count);
    const double step = (hi_hz - lo_hz) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) hz[i] = lo_hz + step * static_cast<double>(i);
    hz.back() = hi_hz;
    return FrequencyGrid(std::move(hz), GridSpacing::linear);
}

FrequencyGrid FrequencyGrid::logarithmic(double lo_hz, double hi_hz, std::size_t count) {
    if (count < 2 || !(lo_hz > 0.0) || !(hi_hz > lo_hz))
        throw ValidationError("logarithmic grid needs 0 < lo < hi and at least two points");
    std::vector<double> hz(count);
    const double ratio = std::log(hi_hz / lo_hz) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) hz[i] = lo_hz * std::exp(ratio * static_cast<double>(i));
    hz.back() = hi_hz;
    return FrequencyGrid(std::move(hz), GridSpacing::logarithmic);
}

double FrequencyGrid::resolution() const {
    double res = 0.0;
    for (std::size_t i = 0; i + 1 < hz_.size(); ++i) res = std::max(res, hz_[i + 1] - hz_[i]);
    return res;
}

double coi_half_width(double f_hz, const WaveletSpec& spec) {
    return 3.0 * spec.center_frequency() / (kTwoPi * f_hz);
}

std::vector<double> cone_of_influence(std::size_t n_time, double dt, const WaveletSpec& spec) {
    std::vector<double> coi(n_time);
    for (std::size_t i = 0; i < n_time; ++i) {
        const double edge = static_cast<double>(std::min(i, n_time - 1 - i)) * dt;
        coi[i] = edge > 0.0 ? 3.0 * spec.center_frequency() / (kTwoPi * edge)
                            : std::numeric_limits<double>::infinity();
    }
    return coi;
}

Polyline::Polyline(std::vector<std::pair<double, double>> vertices) : vertices_(std::move(vertices)) {
    if (vertices_.empty()) throw ValidationError("polyline needs at least one vertex");
    std::stable_sort(vertices_.begin(), vertices_.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [t, f] : vertices_) {
        if (!std::isfinite(t) || !std::isfinite(f))
            throw ValidationError("polyline vertices must be finite");
    }
}

Polyline Polyline::constant(double f_hz) { return Polyline({{0.0, f_hz}}); }

double Polyline::at(double t) const {
    if (vertices_.empty()) throw ValidationError("evaluating an empty polyline");
    if (t <= vertices_.front().first) return vertices_.front().second;
    if (t >= vertices_.back().first) return vertices_.back().second;
    const auto it = std::upper_bound(vertices_.begin(), vertices_.end(), t,
                                     [](double v, const auto& p) { return v < p.first; });
    const auto& [t1, f1] = *it;
    const auto& [t0, f0] = *(it - 1);
    if (t1 == t0) return f1;
    return f0 + (f1 - f0) * (t - t0) / (t1 - t0);
}

Spectrogram cwt(const TimeSeries& x, const FrequencyGrid& grid, const WaveletSpec& spec) {
    const std::size_t n = x.size();
    if (n < 8) throw ValidationError("cwt: signal '" + x.label() + "' needs at least 8 samples");
    if (grid.max() >= x.nyquist()) {
        std::ostringstream msg;
        msg << "cwt: grid frequency " << grid.max() << " Hz is not below the Nyquist frequency "
            << x.nyquist() << " Hz";
        throw ValidationError(msg.str());
    }
    const std::size_t len = transform_length(n, grid.min(), x.dt(), spec);
    Fft fft(len);
    const auto x_hat = fft.forward_real(x.samples());
    const auto xi = fft_angular_frequencies(len, x.dt());
    const double wc = spec.center_frequency();

    Spectrogram s{SpectrumMatrix(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(n)),
                  grid, x.dt(), spec, cone_of_influence(n, x.dt(), spec)};
    std::vector<cplx> product(len), row(len);
    for (std::size_t r = 0; r < grid.size(); ++r) {
        const double a = scale_of(grid[r], spec);
        const double root_a = std::sqrt(a);
        for (std::size_t k = 0; k < len; ++k) product[k] = x_hat[k] * (root_a * morlet_spectrum(a * xi[k], wc));
        fft.inverse(product, row);
        for (std::size_t c = 0; c < n; ++c)
            s.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
    }
    return s;
}

double reconstruction_gain(const FrequencyGrid& grid, double dt, const WaveletSpec& spec) {
    static std::mutex cache_mutex;
    static std::map<GainKey, double> cache;
    GainKey key{grid.hz(), dt, spec.center_frequency()};
    {
        std::lock_guard lock(cache_mutex);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
    }

    const double f_lo = 1.2 * grid.min();
    const double f_hi = 0.8 * grid.max();
    const double edge = coi_half_width(grid.min(), spec);
    const double duration = 4.0 * edge + 20.0 / grid.min();
    const auto n = static_cast<std::size_t>(std::ceil(duration / dt));
    std::vector<double> chirp(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt;
        const double phase = f_hi > f_lo
                                 ? kTwoPi * (f_lo * t + 0.5 * (f_hi - f_lo) * t * t / duration)
                                 : kTwoPi * std::sqrt(grid.min() * grid.max()) * t;
        chirp[i] = std::cos(phase);
    }
    const TimeSeries reference(chirp, dt, "reference_chirp");
    const auto recon = icwt_unscaled(cwt(reference, grid, spec));
    double xy = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt;
        if (t < edge || t > duration - edge) continue;
        xy += chirp[i] * recon[i];
        yy += recon[i] * recon[i];
    }
    if (!(yy > 0.0)) throw NumericalError("icwt calibration: reference round trip vanished");
    const double gain = xy / yy;

    std::lock_guard lock(cache_mutex);
    cache.emplace(std::move(key), gain);
    return gain;
}

TimeSeries icwt(const Spectrogram& s, std::string label, SignalKind kind) {
    if (s.n_freq() < 2) throw ValidationError("icwt: empty frequency span");
    auto out = icwt_unscaled(s);
    const double gain = reconstruction_gain(s.grid, s.dt, s.wavelet);
    for (auto& v : out) v *= gain;
    return TimeSeries(std::move(out), s.dt, std::move(label), kind);
}

Spectrogram mask_region(const Spectrogram& s, const HarmonicRegion& region) {
    Spectrogram out = s;
    std::size_t kept = 0;
    for (std::size_t c = 0; c < s.n_time(); ++c) {
        const double t = static_cast<double>(c) * s.dt;
        const double lo = region.lower.at(t);
        const double hi = region.upper.at(t);
        if (!(lo < hi)) {
            std::ostringstream msg;
            msg << "region " << region.id << ": lower boundary " << lo
                << " Hz is not below upper boundary " << hi << " Hz at t = " << t << " s";
            throw ValidationError(msg.str());
        }
        for (std::size_t r = 0; r < s.n_freq(); ++r) {
            const double f = s.grid[r];
            if (f >= lo && f < hi) {
                ++kept;
            } else {
                out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = cplx{};
            }
        }
    }
    if (kept == 0) {
        throw ValidationError("region " + std::to_string(region.id) +
                              " lies entirely outside the frequency grid");
    }
    return out;
}

std::optional<RegionIssue> check_regions(const std::vector<HarmonicRegion>& regions, std::size_t n_time,
                                         double dt, const FrequencyGrid* grid) {
    auto issue = [](std::string kind, std::vector<int> ids, double t, const std::string& msg) {
        return std::optional<RegionIssue>(RegionIssue{std::move(kind), std::move(ids), t, msg});
    };
    for (std::size_t c = 0; c < n_time; ++c) {
        const double t = static_cast<double>(c) * dt;
        for (const auto& r : regions) {
            if (!(r.lower.at(t) < r.upper.at(t))) {
                std::ostringstream msg;
                msg << "region " << r.id << ": boundaries cross at t = " << t << " s";
                return issue("crossing", {r.id}, t, msg.str());
            }
        }
    }
    for (std::size_t i = 0; i < regions.size(); ++i) {
        for (std::size_t j = i + 1; j < regions.size(); ++j) {
            if (regions[i].id == regions[j].id)
                return issue("duplicate_id", {regions[i].id, regions[j].id}, 0.0,
                             "duplicate region id " + std::to_string(regions[i].id));
            for (std::size_t c = 0; c < n_time; ++c) {
                const double t = static_cast<double>(c) * dt;
                const double lo = std::max(regions[i].lower.at(t), regions[j].lower.at(t));
                const double hi = std::min(regions[i].upper.at(t), regions[j].upper.at(t));
                if (lo < hi) {
                    std::ostringstream msg;
                    msg << "regions " << regions[i].id << " and " << regions[j].id
                        << " overlap starting at t = " << t << " s";
                    return issue("overlap", {regions[i].id, regions[j].id}, t, msg.str());
                }
            }
        }
    }
    if (grid) {
        for (const auto& r : regions) {
            bool inside = false;
            for (std::size_t c = 0; c < n_time && !inside; ++c) {
                const double t = static_cast<double>(c) * dt;
                const double lo = r.lower.at(t);
                const double hi = r.upper.at(t);
                const auto it = std::lower_bound(grid->hz().begin(), grid->hz().end(), lo);
                inside = it != grid->hz().end() && *it < hi;
            }
            if (!inside)
                return issue("out_of_bounds", {r.id}, 0.0,
                             "region " + std::to_string(r.id) + " lies entirely outside the frequency grid");
        }
    }
    return std::nullopt;
}

void validate_regions(const std::vector<HarmonicRegion>& regions, std::size_t n_time, double dt) {
    if (auto problem = check_regions(regions, n_time, dt)) throw ValidationError(problem->message);
}

std::vector<TimeSeries> decompose_regions(const Spectrogram& s,
                                          const std::vector<HarmonicRegion>& regions,
                                          const std::string& label, SignalKind kind) {
    validate_regions(regions, s.n_time(), s.dt);
    std::vector<const HarmonicRegion*> ordered;
    for (const auto& r : regions) ordered.push_back(&r);
    std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->id < b->id; });
    std::vector<TimeSeries> out;
    out.reserve(ordered.size());
    for (const auto* r : ordered)
        out.push_back(icwt(mask_region(s, *r), label + "_r" + std::to_string(r->id), kind));
    return out;
}

std::vector<TimeSeries> decompose_regions(const TimeSeries& x,
                                          const std::vector<HarmonicRegion>& regions,
                                          const FrequencyGrid& grid, const WaveletSpec& spec) {
    validate_regions(regions, x.size(), x.dt());
    return decompose_regions(cwt(x, grid, spec), regions, x.label(), x.kind());
}

std::vector<double> time_averaged_power(const Spectrogram& s) {
    std::vector<double> power(s.n_freq(), 0.0);
    for (std::size_t r = 0; r < s.n_freq(); ++r) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t c = 0; c < s.n_time(); ++c) {
            if (!s.coi_valid(r, c)) continue;
            sum += std::norm(s.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
            ++count;
        }
        power[r] = count > 0 ? sum / static_cast<double>(count) : 0.0;
    }
    return power;
}

}  // namespace wavemodal
