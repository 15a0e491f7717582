#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <random>

#include "test_support.hpp"
#include "wavemodal/error.hpp"
#include "wavemodal/fft.hpp"
#include "wavemodal/timefreq.hpp"

using namespace wavemodal;
using namespace testing_support;

namespace {

constexpr double kDt = 0.02;
constexpr std::size_t kN = 3000;  // 60 s at 50 Hz

const WaveletSpec& spec50() {
    static const WaveletSpec s(50.0);
    return s;
}

const FrequencyGrid& band_grid() {
    static const FrequencyGrid g = FrequencyGrid::linear(1.0, 6.0, 400);
    return g;
}

// Time-domain Morlet: pi^{-1/4} (e^{i wc t} - e^{-wc^2/2}) e^{-t^2/2}.
std::complex<double> morlet_time(double t, double wc) {
    const std::complex<double> osc = std::exp(std::complex<double>(0.0, wc * t)) - std::exp(-0.5 * wc * wc);
    return std::pow(kPi, -0.25) * osc * std::exp(-0.5 * t * t);
}

// Riemann sum of the defining integral (1/sqrt a) int x(t) conj(psi((t - b)/a)) dt.
std::complex<double> direct_cwt(const std::vector<double>& x, double dt, double f_hz, double b, double wc) {
    const double a = wc / (2.0 * kPi * f_hz);
    std::complex<double> acc = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double u = (static_cast<double>(n) * dt - b) / a;
        if (std::abs(u) > 40.0) continue;
        acc += x[n] * std::conj(morlet_time(u, wc));
    }
    return acc * dt / std::sqrt(a);
}

double spectrogram_rel_diff(const SpectrumMatrix& a, const SpectrumMatrix& b) {
    return (a - b).norm() / b.norm();
}

// Interior of the coi at the grid's lowest frequency.
std::pair<std::size_t, std::size_t> interior(std::size_t n, double dt, const FrequencyGrid& g) {
    const auto edge = static_cast<std::size_t>(std::ceil(coi_half_width(g.min(), spec50()) / dt));
    return {edge, n - edge};
}

double fft_mag_at(const std::vector<double>& x, double dt, double f_hz) {
    std::complex<double> acc = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n)
        acc += x[n] * std::exp(std::complex<double>(0.0, -2.0 * kPi * f_hz * static_cast<double>(n) * dt));
    return std::abs(acc);
}

HarmonicRegion band_region(int id, double lo, double hi) {
    return HarmonicRegion{id, Polyline::constant(lo), Polyline::constant(hi)};
}

}  // namespace

TEST_CASE("frequency grid construction") {
    const auto g = FrequencyGrid::linear(1.0, 6.0, 11);
    CHECK(g.size() == 11);
    CHECK(g.min() == 1.0);
    CHECK(g.max() == 6.0);
    CHECK(g.resolution() == Catch::Approx(0.5));
    const auto lg = FrequencyGrid::logarithmic(1.0, 8.0, 4);
    CHECK(lg[1] == Catch::Approx(2.0));
    CHECK(lg[2] == Catch::Approx(4.0));
    CHECK_THROWS_AS(FrequencyGrid({1.0, 1.0, 2.0}, GridSpacing::linear), ValidationError);
    CHECK_THROWS_AS(FrequencyGrid({-1.0, 2.0}, GridSpacing::linear), ValidationError);
}

TEST_CASE("cwt of zero signal is zero") {
    const TimeSeries x(std::vector<double>(kN, 0.0), kDt);
    const auto s = cwt(x, band_grid(), spec50());
    CHECK(s.values.cwiseAbs().maxCoeff() == 0.0);
    const auto y = icwt(s);
    CHECK(max_abs(y.values()) == 0.0);
}

TEST_CASE("cwt rejects a grid above Nyquist and short signals") {
    const TimeSeries x(tone(2.3, 1.0, 0.0, kN, kDt), kDt);
    CHECK_THROWS_AS(cwt(x, FrequencyGrid::linear(1.0, 30.0, 50), spec50()), ValidationError);
    const TimeSeries short_x(std::vector<double>(7, 1.0), kDt);
    CHECK_THROWS_AS(cwt(short_x, band_grid(), spec50()), ValidationError);
}

TEST_CASE("cwt of a 2.30 Hz tone peaks at the nearest grid bin") {
    const auto x = tone(2.30, 1.0, 0.0, kN, kDt);
    const auto s = cwt(TimeSeries(x, kDt), band_grid(), spec50());
    std::vector<double> mean_abs(s.n_freq(), 0.0);
    for (std::size_t r = 0; r < s.n_freq(); ++r)
        for (std::size_t c = 0; c < s.n_time(); ++c) mean_abs[r] += std::abs(s.values(r, c));
    const auto peak = static_cast<std::size_t>(std::max_element(mean_abs.begin(), mean_abs.end()) - mean_abs.begin());
    std::size_t nearest = 0;
    for (std::size_t r = 0; r < s.n_freq(); ++r)
        if (std::abs(s.grid[r] - 2.30) < std::abs(s.grid[nearest] - 2.30)) nearest = r;
    CHECK(peak == nearest);
}

TEST_CASE("cwt agrees with direct integration of the defining integral") {
    const auto x = tone(2.30, 1.0, 0.3, kN, kDt);
    const auto s = cwt(TimeSeries(x, kDt), band_grid(), spec50());
    std::mt19937 rng(7);
    const auto [first, last] = interior(kN, kDt, band_grid());
    std::uniform_int_distribution<std::size_t> col(first, last - 1);
    std::uniform_int_distribution<std::size_t> row(85, 125);  // 2.07 .. 2.57 Hz
    for (int k = 0; k < 5; ++k) {
        const std::size_t r = row(rng);
        const std::size_t c = col(rng);
        const auto oracle = direct_cwt(x, kDt, s.grid[r], static_cast<double>(c) * kDt, 50.0);
        const auto got = s.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        INFO("f = " << s.grid[r] << " Hz, t = " << c * kDt << " s");
        CHECK(std::abs(got - oracle) / std::abs(oracle) <= 1e-4);
    }
}

TEST_CASE("cwt and icwt are linear") {
    std::mt19937 rng(11);
    std::normal_distribution<double> g;
    std::vector<double> x(1024), y(1024);
    for (auto& v : x) v = g(rng);
    for (auto& v : y) v = g(rng);
    const double a = 1.7, b = -0.4;
    std::vector<double> z(1024);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = a * x[i] + b * y[i];
    const auto sx = cwt(TimeSeries(x, kDt), band_grid(), spec50());
    const auto sy = cwt(TimeSeries(y, kDt), band_grid(), spec50());
    const auto sz = cwt(TimeSeries(z, kDt), band_grid(), spec50());
    const SpectrumMatrix combo = a * sx.values + b * sy.values;
    CHECK(spectrogram_rel_diff(sz.values, combo) < 1e-10);

    const auto rx = icwt(sx).values();
    const auto ry = icwt(sy).values();
    const auto rz = icwt(sz).values();
    std::vector<double> rcombo(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) rcombo[i] = a * rx[i] + b * ry[i];
    CHECK(relative_l2(rz, rcombo, 0, z.size()) < 1e-10);

    const auto region = band_region(1, 2.0, 3.5);
    const auto mz = mask_region(sz, region).values;
    const SpectrumMatrix mcombo = a * mask_region(sx, region).values + b * mask_region(sy, region).values;
    CHECK(spectrogram_rel_diff(mz, mcombo) < 1e-10);
}

TEST_CASE("round trip reproduces a band-limited two-tone signal") {
    const auto x = add(tone(2.30, 1.0, 0.2, kN, kDt), tone(4.17, 0.6, 1.1, kN, kDt));
    const auto y = icwt(cwt(TimeSeries(x, kDt), band_grid(), spec50())).values();
    const auto [first, last] = interior(kN, kDt, band_grid());
    CHECK(relative_l2(y, x, first, last) < 0.02);
}

TEST_CASE("round trip holds for random band-limited signals") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> f(1.2, 4.8), ph(0.0, 2.0 * kPi), amp(0.2, 1.0);
    for (int trial = 0; trial < 3; ++trial) {
        std::vector<double> x(kN, 0.0);
        for (int k = 0; k < 6; ++k) x = add(x, tone(f(rng), amp(rng), ph(rng), kN, kDt));
        const auto y = icwt(cwt(TimeSeries(x, kDt), band_grid(), spec50())).values();
        const auto [first, last] = interior(kN, kDt, band_grid());
        CHECK(relative_l2(y, x, first, last) < 0.02);
    }
}

TEST_CASE("region reconstructions partition the full reconstruction") {
    const auto x = add(tone(2.30, 1.0, 0.0, kN, kDt), damped_cosine(4.17, 0.02, 1.0, 0.5, kN, kDt));
    const auto s = cwt(TimeSeries(x, kDt), band_grid(), spec50());
    const auto full = icwt(s).values();
    std::vector<HarmonicRegion> parts = {
        band_region(1, 0.5, 2.7),
        HarmonicRegion{2, Polyline::constant(2.7), Polyline({{0.0, 3.5}, {30.0, 4.0}, {60.0, 3.2}})},
        HarmonicRegion{3, Polyline({{0.0, 3.5}, {30.0, 4.0}, {60.0, 3.2}}), Polyline::constant(7.0)},
    };
    std::vector<double> sum(kN, 0.0);
    for (const auto& r : parts) sum = add(sum, icwt(mask_region(s, r)).values());
    CHECK(relative_l2(sum, full, 0, kN) < 1e-8);

    const auto comps = decompose_regions(s, parts);
    REQUIRE(comps.size() == 3);
    std::vector<double> csum(kN, 0.0);
    for (const auto& c : comps) csum = add(csum, c.values());
    CHECK(relative_l2(csum, full, 0, kN) < 1e-8);
}

TEST_CASE("cwt is covariant under integer time shifts") {
    // Gaussian burst well inside the record so the delay loses nothing.
    const std::size_t n = 4096, m = 37;
    std::vector<double> x(n, 0.0), xs(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * kDt - 35.0;
        x[i] = std::exp(-t * t / 50.0) * std::cos(2.0 * kPi * 3.0 * t);
    }
    for (std::size_t i = m; i < n; ++i) xs[i] = x[i - m];
    const auto s = cwt(TimeSeries(x, kDt), band_grid(), spec50());
    const auto ss = cwt(TimeSeries(xs, kDt), band_grid(), spec50());
    const auto [first, last] = interior(n, kDt, band_grid());
    const auto width = static_cast<Eigen::Index>(last - first - m);
    const SpectrumMatrix ref = s.values.middleCols(static_cast<Eigen::Index>(first), width);
    const SpectrumMatrix got = ss.values.middleCols(static_cast<Eigen::Index>(first + m), width);
    CHECK(spectrogram_rel_diff(got, ref) < 1e-6);
}

TEST_CASE("tones 4/wc apart give two maxima in the time-averaged spectrum") {
    const double f = 3.92, g = f * (1.0 + 4.0 / 50.0);
    const auto x = add(tone(f, 1.0, 0.0, kN, kDt), tone(g, 1.0, 0.4, kN, kDt));
    const auto grid = FrequencyGrid::linear(3.0, 5.5, 400);
    const auto p = time_averaged_power(cwt(TimeSeries(x, kDt), grid, spec50()));
    std::vector<double> maxima;
    for (std::size_t r = 1; r + 1 < p.size(); ++r)
        if (p[r] > p[r - 1] && p[r] >= p[r + 1] && p[r] > 0.1 * *std::max_element(p.begin(), p.end()))
            maxima.push_back(grid[r]);
    REQUIRE(maxima.size() == 2);
    CHECK(std::abs(maxima[0] - f) < 2.0 * grid.resolution());
    CHECK(std::abs(maxima[1] - g) < 2.0 * grid.resolution());
}

TEST_CASE("mask covering the full grid is the identity") {
    const auto s = cwt(TimeSeries(tone(2.3, 1.0, 0.0, 1024, kDt), kDt), band_grid(), spec50());
    const auto m = mask_region(s, band_region(1, 0.5, 10.0));
    CHECK(m.values == s.values);
}

TEST_CASE("two complementary masks sum to the original") {
    const auto s = cwt(TimeSeries(tone(2.3, 1.0, 0.0, 1024, kDt), kDt), band_grid(), spec50());
    const Polyline split({{0.0, 2.0}, {10.0, 4.5}, {20.0, 3.0}});
    const auto lo = mask_region(s, HarmonicRegion{1, Polyline::constant(0.5), split});
    const auto hi = mask_region(s, HarmonicRegion{2, split, Polyline::constant(10.0)});
    CHECK((lo.values + hi.values - s.values).cwiseAbs().maxCoeff() == 0.0);
    // Every cell is kept by exactly one mask.
    for (Eigen::Index r = 0; r < s.values.rows(); ++r)
        for (Eigen::Index c = 0; c < s.values.cols(); c += 50)
            CHECK(((lo.values(r, c) == 0.0) != (hi.values(r, c) == 0.0)));
}

TEST_CASE("region above a single tone keeps almost nothing") {
    const auto s = cwt(TimeSeries(tone(2.30, 1.0, 0.0, kN, kDt), kDt), band_grid(), spec50());
    const auto m = mask_region(s, band_region(1, 4.0, 6.5));
    // Edge cells hold the truncation transient, which is broadband; inside the
    // cone of influence the wavelet at 4 Hz barely sees a 2.3 Hz tone and only
    // the tail of the edge transient remains.
    double inside = 0.0;
    for (Eigen::Index r = 0; r < m.values.rows(); ++r)
        for (Eigen::Index c = 0; c < m.values.cols(); ++c)
            if (s.coi_valid(static_cast<std::size_t>(r), static_cast<std::size_t>(c)))
                inside = std::max(inside, std::abs(m.values(r, c)));
    CAPTURE(inside);
    CHECK(inside < 1e-3 * s.values.cwiseAbs().maxCoeff());
    CHECK(m.values.cwiseAbs().maxCoeff() < 0.05 * s.values.cwiseAbs().maxCoeff());
}

TEST_CASE("region entirely outside the grid is rejected") {
    const auto s = cwt(TimeSeries(tone(2.3, 1.0, 0.0, 1024, kDt), kDt), band_grid(), spec50());
    CHECK_THROWS_AS(mask_region(s, band_region(9, 7.0, 8.0)), ValidationError);
    CHECK_THROWS_WITH(mask_region(s, band_region(9, 7.0, 8.0)), Catch::Matchers::ContainsSubstring("9"));
}

TEST_CASE("decomposing two tones at 3.2 Hz separates them") {
    const auto x = add(tone(2.30, 1.0, 0.0, kN, kDt), tone(4.17, 1.0, 0.7, kN, kDt));
    const std::vector<HarmonicRegion> regions = {band_region(2, 3.2, 7.0), band_region(1, 0.5, 3.2)};
    const auto comps = decompose_regions(TimeSeries(x, kDt), regions, band_grid(), spec50());
    REQUIRE(comps.size() == 2);
    // Ordered by id: component 0 is the low band.
    const auto& lo = comps[0].values();
    const auto& hi = comps[1].values();

    auto dominant = [&](const std::vector<double>& v) {
        double best = 0.0, best_f = 0.0;
        for (double f = 0.5; f < 7.0; f += 1.0 / 60.0) {
            const double m = fft_mag_at(v, kDt, f);
            if (m > best) best = m, best_f = f;
        }
        return best_f;
    };
    CHECK(std::abs(dominant(lo) - 2.30) < 1.0 / 60.0);
    CHECK(std::abs(dominant(hi) - 4.17) < 1.0 / 60.0);
    const double leak_lo = 20.0 * std::log10(fft_mag_at(lo, kDt, 4.17) / fft_mag_at(lo, kDt, 2.30));
    const double leak_hi = 20.0 * std::log10(fft_mag_at(hi, kDt, 2.30) / fft_mag_at(hi, kDt, 4.17));
    CHECK(leak_lo <= -30.0);
    CHECK(leak_hi <= -30.0);
}

TEST_CASE("single covering region returns the full round trip") {
    const auto x = add(tone(2.30, 1.0, 0.0, kN, kDt), tone(4.17, 1.0, 0.7, kN, kDt));
    const auto s = cwt(TimeSeries(x, kDt), band_grid(), spec50());
    const auto comps = decompose_regions(s, {band_region(1, 0.5, 7.0)});
    REQUIRE(comps.size() == 1);
    CHECK(relative_l2(comps[0].values(), icwt(s).values(), 0, kN) < 1e-12);
}

TEST_CASE("overlapping regions are reported with the pair and first time") {
    const std::vector<HarmonicRegion> regions = {
        band_region(1, 1.0, 3.0),
        HarmonicRegion{2, Polyline({{0.0, 3.5}, {10.0, 3.5}, {20.0, 2.5}}), Polyline::constant(5.0)},
    };
    const auto issue = check_regions(regions, 1001, kDt);
    REQUIRE(issue.has_value());
    CHECK(issue->kind == "overlap");
    CHECK(issue->region_ids == std::vector<int>{1, 2});
    // Boundary 3.5 - 0.1 (t - 10) drops below 3.0 after t = 15 s.
    CHECK(issue->time_s == Catch::Approx(15.02).margin(kDt));
    CHECK_THROWS_AS(validate_regions(regions, 1001, kDt), ValidationError);
    const TimeSeries x(tone(2.3, 1.0, 0.0, 1001, kDt), kDt);
    CHECK_THROWS_WITH(decompose_regions(x, regions, band_grid(), spec50()),
                      Catch::Matchers::ContainsSubstring("1") && Catch::Matchers::ContainsSubstring("2"));
}

TEST_CASE("region checks catch crossing boundaries and duplicate ids") {
    const HarmonicRegion crossing{4, Polyline({{0.0, 2.0}, {10.0, 4.0}}), Polyline::constant(3.0)};
    auto issue = check_regions({crossing}, 1000, kDt);
    REQUIRE(issue.has_value());
    CHECK(issue->kind == "crossing");
    CHECK(issue->region_ids == std::vector<int>{4});

    issue = check_regions({band_region(1, 1.0, 2.0), band_region(1, 3.0, 4.0)}, 1000, kDt);
    REQUIRE(issue.has_value());
    CHECK(issue->kind == "duplicate_id");

    issue = check_regions({band_region(1, 7.0, 8.0)}, 1000, kDt, &band_grid());
    REQUIRE(issue.has_value());
    CHECK(issue->kind == "out_of_bounds");

    CHECK_FALSE(check_regions({band_region(1, 1.0, 2.0), band_region(2, 2.0, 4.0)}, 1000, kDt, &band_grid()));
}

TEST_CASE("polyline interpolation and extension") {
    const Polyline p({{10.0, 3.0}, {0.0, 1.0}, {20.0, 2.0}});
    CHECK(p.at(-5.0) == 1.0);
    CHECK(p.at(5.0) == Catch::Approx(2.0));
    CHECK(p.at(15.0) == Catch::Approx(2.5));
    CHECK(p.at(100.0) == 2.0);
    CHECK(Polyline::constant(3.2).at(1e6) == 3.2);
}

TEST_CASE("cone of influence is infinite at the edges and shrinks inward") {
    const auto coi = cone_of_influence(101, kDt, spec50());
    CHECK(std::isinf(coi.front()));
    CHECK(std::isinf(coi.back()));
    CHECK(coi[1] > coi[10]);
    CHECK(coi[50] == Catch::Approx(3.0 * 50.0 / (2.0 * kPi * 50 * kDt)));
    CHECK(coi_half_width(2.0, spec50()) == Catch::Approx(3.0 * 50.0 / (2.0 * kPi * 2.0)));
}

TEST_CASE("icwt rejects an empty frequency span") {
    const auto s = cwt(TimeSeries(tone(2.3, 1.0, 0.0, 256, kDt), kDt), FrequencyGrid({2.0}, GridSpacing::linear), spec50());
    CHECK_THROWS_AS(icwt(s), ValidationError);
}
