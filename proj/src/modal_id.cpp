#include "wavemodal/modal_id.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "wavemodal/error.hpp"

namespace wavemodal {

using nlohmann::json;

namespace {

// Weakest chosen peak prominence over the strongest one left out.
constexpr double kPeakSeparation = 2.0;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::size_t sample_index(double t, double dt) { return static_cast<std::size_t>(std::llround(t / dt)); }

std::vector<EnvelopePhase> mode_envelopes(const ComponentSet& cs, std::size_t mode) {
    std::vector<EnvelopePhase> out;
    out.reserve(cs.n_dof());
    for (std::size_t i = 0; i < cs.n_dof(); ++i)
        out.push_back(envelope_and_phase(analytic_signal(cs.components[i][mode])));
    return out;
}

double span_peak(const EnvelopePhase& env, std::pair<std::size_t, std::size_t> span) {
    double peak = 0.0;
    for (std::size_t i = span.first; i < span.second; ++i) peak = std::max(peak, env.amplitude[i]);
    return peak;
}

bool smooth_at(const std::vector<double>& a, std::size_t i, double threshold) {
    if (i == 0 || i + 1 >= a.size() || !(a[i] > 0.0)) return false;
    return std::abs(a[i + 1] - 2.0 * a[i] + a[i - 1]) < threshold * a[i];
}

std::vector<double> moduli_from(const std::vector<EnvelopePhase>& envs, const PhaseWindow& w, std::size_t mode) {
    std::vector<double> m(envs.size(), 0.0);
    const double dt = envs.front().dt;
    const std::size_t i0 = sample_index(w.start, dt), i1 = sample_index(w.end, dt);
    double norm = 0.0;
    for (std::size_t d = 0; d < envs.size(); ++d) {
        double sum = 0.0;
        for (std::size_t i = i0; i <= i1 && i < envs[d].amplitude.size(); ++i) sum += envs[d].amplitude[i];
        m[d] = sum / static_cast<double>(i1 - i0 + 1);
        norm += m[d] * m[d];
    }
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) throw ValidationError("mode " + std::to_string(mode) + " is zero at every DOF");
    for (double& v : m) v /= norm;
    return m;
}

PhaseWindowSelection windows_from(const std::vector<EnvelopePhase>& envs, std::size_t reference_dof, double f_hz,
                                  const WaveletSpec& spec, const IdentifyOptions& opt) {
    PhaseWindowSelection sel;
    const std::size_t n = envs.front().amplitude.size();
    const double dt = envs.front().dt;
    const auto span = trusted_span(n, dt, f_hz, spec, opt);
    const auto min_len = static_cast<std::size_t>(std::ceil(opt.min_periods / (f_hz * dt)));
    const EnvelopePhase& ref = envs[reference_dof];
    const double ref_peak = span_peak(ref, span);
    for (std::size_t k = 0; k < envs.size(); ++k) {
        if (k == reference_dof) continue;
        const double peak = span_peak(envs[k], span);
        if (!(peak > 0.0) || !(ref_peak > 0.0)) {
            sel.failures.push_back({k, reference_dof, "component vanishes inside the trusted span"});
            continue;
        }
        std::vector<std::pair<std::size_t, std::size_t>> runs;
        std::size_t run_start = 0;
        bool in_run = false;
        for (std::size_t i = span.first; i <= span.second; ++i) {
            const bool ok = i < span.second && envs[k].amplitude[i] >= opt.envelope_fraction * peak &&
                            ref.amplitude[i] >= opt.envelope_fraction * ref_peak &&
                            smooth_at(envs[k].amplitude, i, opt.smoothness) &&
                            smooth_at(ref.amplitude, i, opt.smoothness);
            if (ok && !in_run) {
                run_start = i;
                in_run = true;
            } else if (!ok && in_run) {
                if (i - run_start >= min_len) runs.emplace_back(run_start, i - 1);
                in_run = false;
            }
        }
        if (runs.empty()) {
            std::ostringstream msg;
            msg << "no interval of " << opt.min_periods << " periods where both envelopes exceed "
                << opt.envelope_fraction << " of their peak and stay smooth";
            sel.failures.push_back({k, reference_dof, msg.str()});
            continue;
        }
        sel.windows.push_back({static_cast<double>(runs.front().first) * dt,
                               static_cast<double>(runs.front().second) * dt, k, reference_dof});
        sel.alternatives.push_back(runs.size() - 1);
    }
    return sel;
}

PhaseEstimate phases_from(const std::vector<EnvelopePhase>& envs, std::size_t reference_dof,
                          const PhaseWindowSelection& sel, const PhaseWindow& fallback, const IdentifyOptions& opt) {
    PhaseEstimate est;
    const std::size_t n_dof = envs.size();
    est.theta_deg.assign(n_dof, 0.0);
    est.circular_variance.assign(n_dof, 0.0);
    est.low_confidence.assign(n_dof, false);
    const double dt = envs.front().dt;
    for (std::size_t k = 0; k < n_dof; ++k) {
        if (k == reference_dof) continue;
        PhaseWindow w = fallback;
        bool from_fallback = true;
        for (const auto& cand : sel.windows) {
            if (cand.dof == k) {
                w = cand;
                from_fallback = false;
            }
        }
        const std::size_t i0 = sample_index(w.start, dt);
        const std::size_t i1 = std::min(sample_index(w.end, dt), envs[k].phase.size() - 1);
        cplx acc{0.0, 0.0};
        for (std::size_t i = i0; i <= i1; ++i)
            acc += std::polar(1.0, envs[k].phase[i] - envs[reference_dof].phase[i]);
        acc /= static_cast<double>(i1 - i0 + 1);
        est.theta_deg[k] = wrap_degrees(std::arg(acc) * 180.0 / std::numbers::pi);
        est.circular_variance[k] = 1.0 - std::abs(acc);
        est.low_confidence[k] = from_fallback || est.circular_variance[k] > opt.max_circular_variance;
    }
    return est;
}

}  // namespace

void ComponentSet::validate() const {
    if (components.empty() || components.front().empty()) throw ValidationError("component set is empty");
    const std::size_t modes = components.front().size();
    const auto& first = components.front().front();
    for (const auto& row : components) {
        if (row.size() != modes) throw ValidationError("component set: DOFs carry different mode counts");
        for (const auto& c : row) {
            if (c.size() != first.size() || c.dt() != first.dt())
                throw ValidationError("component set: components differ in length or sampling");
        }
    }
    if (drive_dof >= components.size()) throw ValidationError("component set: drive DOF out of range");
}

std::vector<PeakInfo> spectral_peaks(const Spectrogram& s) {
    const auto p = time_averaged_power(s);
    const double top = *std::max_element(p.begin(), p.end());
    std::vector<PeakInfo> peaks;
    if (!(top > 0.0)) return peaks;
    const std::size_t n = p.size();
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!(p[i] > p[i - 1] && p[i] >= p[i + 1])) continue;
        // Prominence: height above the higher of the two bases, each base
        // being the minimum up to the next higher sample on that side.
        double left_min = p[i];
        for (std::size_t j = i; j-- > 0;) {
            if (p[j] > p[i]) break;
            left_min = std::min(left_min, p[j]);
        }
        double right_min = p[i];
        for (std::size_t j = i + 1; j < n; ++j) {
            if (p[j] > p[i]) break;
            right_min = std::min(right_min, p[j]);
        }
        peaks.push_back({s.grid[i], p[i], (p[i] - std::max(left_min, right_min)) / top});
    }
    return peaks;
}

std::vector<HarmonicRegion> suggest_regions(const Spectrogram& s, std::size_t n_modes, double min_prominence) {
    if (n_modes == 0) throw ValidationError("suggest_regions: n_modes must be at least 1");
    if (s.n_freq() < 2) throw ValidationError("suggest_regions: grid needs two or more frequencies");
    const auto p = time_averaged_power(s);
    if (!(*std::max_element(p.begin(), p.end()) > 0.0))
        throw ValidationError("suggest_regions: no energy inside the cone of influence");

    auto peaks = spectral_peaks(s);
    std::erase_if(peaks, [&](const PeakInfo& pk) { return pk.prominence < min_prominence; });
    if (peaks.size() < n_modes && n_modes == 1) {
        // A lone tone at the grid edge has no interior maximum.
        return {HarmonicRegion{1, Polyline::constant(s.grid.min()),
                               Polyline::constant(s.grid.max() + 0.5 * (s.grid[s.n_freq() - 1] - s.grid[s.n_freq() - 2]))}};
    }
    if (peaks.size() < n_modes) {
        std::ostringstream msg;
        msg << "suggest_regions: found " << peaks.size() << " peak(s) with prominence >= " << min_prominence
            << " of the maximum, need " << n_modes;
        throw ValidationError(msg.str());
    }
    // Strongest first. The choice must stand clear of the rest: noise gives
    // a continuum of similar peaks rather than a gap after the n-th.
    std::stable_sort(peaks.begin(), peaks.end(), [](const auto& a, const auto& b) { return a.prominence > b.prominence; });
    if (peaks.size() > n_modes && peaks[n_modes - 1].prominence < kPeakSeparation * peaks[n_modes].prominence) {
        std::ostringstream msg;
        msg << "suggest_regions: found " << peaks.size() << " peak(s) with prominence >= " << min_prominence
            << "; the weakest of the " << n_modes << " strongest (" << peaks[n_modes - 1].prominence
            << ") is not " << kPeakSeparation << "x the next (" << peaks[n_modes].prominence
            << "), so the choice is ambiguous";
        throw ValidationError(msg.str());
    }
    peaks.resize(n_modes);
    std::sort(peaks.begin(), peaks.end(), [](const auto& a, const auto& b) { return a.f_hz < b.f_hz; });

    auto index_of = [&](double f) {
        return static_cast<std::size_t>(std::lower_bound(s.grid.hz().begin(), s.grid.hz().end(), f) -
                                        s.grid.hz().begin());
    };
    std::vector<double> edges{s.grid.min()};
    for (std::size_t q = 0; q + 1 < peaks.size(); ++q) {
        const std::size_t a = index_of(peaks[q].f_hz), b = index_of(peaks[q + 1].f_hz);
        const auto it = std::min_element(p.begin() + static_cast<std::ptrdiff_t>(a),
                                         p.begin() + static_cast<std::ptrdiff_t>(b) + 1);
        edges.push_back(s.grid[static_cast<std::size_t>(it - p.begin())]);
    }
    const std::size_t last = s.n_freq() - 1;
    edges.push_back(s.grid.max() + 0.5 * (s.grid[last] - s.grid[last - 1]));

    std::vector<HarmonicRegion> regions;
    for (std::size_t j = 0; j < n_modes; ++j)
        regions.push_back({static_cast<int>(j + 1), Polyline::constant(edges[j]), Polyline::constant(edges[j + 1])});
    return regions;
}

std::vector<HarmonicRegion> suggest_regions(const std::vector<Spectrogram>& channels, std::size_t n_modes,
                                            double min_prominence) {
    if (channels.empty()) throw ValidationError("suggest_regions: no channels");
    std::size_t best = 0;
    for (const auto& s : channels) {
        try {
            return suggest_regions(s, n_modes, min_prominence);
        } catch (const ValidationError&) {
            std::size_t count = 0;
            for (const auto& pk : spectral_peaks(s)) count += pk.prominence >= min_prominence ? 1 : 0;
            best = std::max(best, count);
        }
    }
    std::ostringstream msg;
    msg << "suggest_regions: no channel shows " << n_modes << " prominent peaks (best: " << best << ")";
    throw ValidationError(msg.str());
}

FrequencyEstimate estimate_frequency(const std::vector<Spectrogram>& region_spectra) {
    if (region_spectra.empty()) throw ValidationError("estimate_frequency: no spectra");
    const FrequencyGrid& grid = region_spectra.front().grid;
    std::vector<double> p(grid.size(), 0.0);
    for (const auto& s : region_spectra) {
        const auto ps = time_averaged_power(s);
        for (std::size_t i = 0; i < p.size(); ++i) p[i] += ps[i];
    }
    const auto peak_it = std::max_element(p.begin(), p.end());
    if (!(*peak_it > 0.0)) throw ValidationError("estimate_frequency: region carries no energy");
    const auto peak = static_cast<std::size_t>(peak_it - p.begin());
    if (peak == 0 || peak + 1 == p.size() || !(p[peak - 1] > 0.0) || !(p[peak + 1] > 0.0))
        return {grid[peak], grid.resolution()};
    // The scaled Morlet response is Gaussian in frequency, so a parabola
    // through the log power locates the ridge between grid points.
    const double a = std::log(p[peak - 1]), b = std::log(p[peak]), c = std::log(p[peak + 1]);
    const double curvature = a - 2.0 * b + c;
    double offset = curvature < 0.0 ? 0.5 * (a - c) / curvature : 0.0;
    offset = std::clamp(offset, -0.5, 0.5);
    const double step = offset >= 0.0 ? grid[peak + 1] - grid[peak] : grid[peak] - grid[peak - 1];
    return {grid[peak] + offset * step, grid.resolution()};
}

FrequencyEstimate estimate_frequency(const TimeSeries& component, const Spectrogram& region_spectrum) {
    if (component.size() != region_spectrum.n_time())
        throw ValidationError("estimate_frequency: component and spectrum lengths differ");
    return estimate_frequency(std::vector<Spectrogram>{region_spectrum});
}

std::pair<std::size_t, std::size_t> trusted_span(std::size_t n, double dt, double f_hz, const WaveletSpec& spec,
                                                 const IdentifyOptions& opt) {
    const double guard = std::max(coi_half_width(f_hz, spec), opt.edge_fraction * static_cast<double>(n) * dt);
    const auto first = static_cast<std::size_t>(std::ceil(guard / dt));
    if (2 * first >= n) return {0, 0};
    return {first, n - first};
}

PhaseWindow select_decay_window(const EnvelopePhase& env, double /*f_hz*/, std::pair<std::size_t, std::size_t> span,
                                const IdentifyOptions& opt) {
    const double peak = span_peak(env, span);
    if (span.first >= span.second || !(peak > 0.0))
        throw NumericalError("select_decay_window: envelope vanishes inside the trusted span");
    std::size_t i = span.first;
    while (i < span.second && env.amplitude[i] < opt.envelope_fraction * peak) ++i;
    std::size_t j = i;
    while (j + 1 < span.second && env.amplitude[j + 1] >= opt.envelope_fraction * peak) ++j;
    return {static_cast<double>(i) * env.dt, static_cast<double>(j) * env.dt, 0, 0};
}

DampingFit fit_damping(const EnvelopePhase& env, double f_hz, const PhaseWindow& window, const IdentifyOptions& opt) {
    if (!(f_hz > 0.0)) throw ValidationError("fit_damping: frequency must be positive");
    const std::size_t i0 = sample_index(window.start, env.dt);
    const std::size_t i1 = std::min(sample_index(window.end, env.dt), env.amplitude.size() - 1);
    if (i1 < i0 + 2) throw ValidationError("fit_damping: window holds fewer than three samples");
    std::vector<double> t, log_a;
    for (std::size_t i = i0; i <= i1; ++i) {
        if (!(env.amplitude[i] > 0.0)) throw ValidationError("fit_damping: envelope is not positive in the window");
        t.push_back(static_cast<double>(i) * env.dt);
        log_a.push_back(std::log(env.amplitude[i]));
    }
    const LineFit fit = fit_line(t, log_a);
    DampingFit out;
    out.zeta = -fit.slope / (kTwoPi * f_hz);
    out.r_squared = fit.r_squared;
    if (out.zeta >= 1.0) {
        std::ostringstream msg;
        msg << "fit_damping: envelope decay implies zeta = " << out.zeta << " (not underdamped)";
        throw NumericalError(msg.str());
    }
    out.zeta = std::max(out.zeta, 0.0);
    const bool short_window = (window.end - window.start) * f_hz < opt.min_periods;
    out.low_confidence = fit.r_squared < opt.min_r_squared || short_window;
    return out;
}

std::vector<double> normalized_moduli(const ComponentSet& cs, std::size_t mode, const PhaseWindow& window) {
    cs.validate();
    if (mode >= cs.n_modes()) throw ValidationError("normalized_moduli: mode out of range");
    return moduli_from(mode_envelopes(cs, mode), window, mode);
}

PhaseWindowSelection select_phase_windows(const ComponentSet& cs, std::size_t mode, std::size_t reference_dof,
                                          double f_hz, const WaveletSpec& spec, const IdentifyOptions& opt) {
    cs.validate();
    if (mode >= cs.n_modes() || reference_dof >= cs.n_dof())
        throw ValidationError("select_phase_windows: mode or reference DOF out of range");
    return windows_from(mode_envelopes(cs, mode), reference_dof, f_hz, spec, opt);
}

PhaseEstimate estimate_phase_offsets(const ComponentSet& cs, std::size_t mode, std::size_t reference_dof,
                                     const PhaseWindowSelection& windows, const PhaseWindow& fallback,
                                     const IdentifyOptions& opt) {
    cs.validate();
    if (mode >= cs.n_modes() || reference_dof >= cs.n_dof())
        throw ValidationError("estimate_phase_offsets: mode or reference DOF out of range");
    return phases_from(mode_envelopes(cs, mode), reference_dof, windows, fallback, opt);
}

ComponentSet decompose_channels(const std::vector<Spectrogram>& channels, const std::vector<HarmonicRegion>& regions,
                                std::size_t drive_dof) {
    if (channels.empty()) throw ValidationError("decompose_channels: no channels");
    if (regions.empty()) throw ValidationError("decompose_channels: no regions");
    ComponentSet cs;
    cs.drive_dof = drive_dof;
    for (std::size_t i = 0; i < channels.size(); ++i)
        cs.components.push_back(decompose_regions(channels[i], regions, "dof" + std::to_string(i)));
    cs.validate();
    return cs;
}

Identification identify_modes(const std::vector<Spectrogram>& channels, const std::vector<HarmonicRegion>& regions,
                              std::size_t drive_dof, std::size_t reference_dof, const IdentifyOptions& opt) {
    Identification out;
    out.components = decompose_channels(channels, regions, drive_dof);
    const ComponentSet& cs = out.components;
    if (reference_dof >= cs.n_dof()) throw ValidationError("identify_modes: reference DOF out of range");

    std::vector<const HarmonicRegion*> ordered;
    for (const auto& r : regions) ordered.push_back(&r);
    std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->id < b->id; });

    const std::size_t n_dof = cs.n_dof(), n_modes = cs.n_modes();
    const std::size_t n = channels.front().n_time();
    const double dt = channels.front().dt;
    const WaveletSpec& spec = channels.front().wavelet;
    std::vector<double> freqs, zetas;
    Eigen::MatrixXd moduli(static_cast<Eigen::Index>(n_dof), static_cast<Eigen::Index>(n_modes));
    Eigen::MatrixXd phases(static_cast<Eigen::Index>(n_dof), static_cast<Eigen::Index>(n_modes));
    json diag = json::array();

    for (std::size_t j = 0; j < n_modes; ++j) {
        std::vector<Spectrogram> masked;
        for (const auto& s : channels) masked.push_back(mask_region(s, *ordered[j]));
        const FrequencyEstimate fe = estimate_frequency(masked);
        const double f = fe.f_hz;

        const auto envs = mode_envelopes(cs, j);
        const auto span = trusted_span(n, dt, f, spec, opt);
        std::size_t strongest = 0;
        for (std::size_t i = 1; i < n_dof; ++i)
            if (span_peak(envs[i], span) > span_peak(envs[strongest], span)) strongest = i;

        PhaseWindow decay = select_decay_window(envs[strongest], f, span, opt);
        decay.dof = strongest;
        decay.reference = strongest;
        const DampingFit damping = fit_damping(envs[strongest], f, decay, opt);
        const auto mods = moduli_from(envs, decay, j);
        const auto sel = windows_from(envs, reference_dof, f, spec, opt);
        const auto ph = phases_from(envs, reference_dof, sel, decay, opt);

        freqs.push_back(f);
        zetas.push_back(damping.zeta);
        for (std::size_t i = 0; i < n_dof; ++i) {
            moduli(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = mods[i];
            phases(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ph.theta_deg[i];
        }

        json windows = json::array();
        for (std::size_t w = 0; w < sel.windows.size(); ++w)
            windows.push_back({{"dof", sel.windows[w].dof},
                               {"reference", sel.windows[w].reference},
                               {"start_s", sel.windows[w].start},
                               {"end_s", sel.windows[w].end},
                               {"alternatives", sel.alternatives[w]}});
        json failures = json::array();
        for (const auto& fl : sel.failures)
            failures.push_back({{"dof", fl.dof}, {"reference", fl.reference}, {"reason", fl.reason}});
        diag.push_back({{"region_id", ordered[j]->id},
                        {"f_hz", f},
                        {"f_uncertainty_hz", fe.uncertainty_hz},
                        {"zeta", damping.zeta},
                        {"r_squared", damping.r_squared},
                        {"damping_low_confidence", damping.low_confidence},
                        {"decay_dof", strongest},
                        {"decay_window_s", {decay.start, decay.end}},
                        {"phase_windows", std::move(windows)},
                        {"phase_failures", std::move(failures)},
                        {"circular_variance", ph.circular_variance},
                        {"phase_low_confidence", ph.low_confidence}});
    }

    out.modal = assemble_modes(freqs, zetas, moduli, phases, reference_dof);
    out.modal.provenance = {{"source", "wavelet_identification"}, {"drive_dof", drive_dof}};
    out.diagnostics = std::move(diag);
    return out;
}

}  // namespace wavemodal
