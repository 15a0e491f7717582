#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <random>

#include "test_support.hpp"
#include "wavemodal/analytic.hpp"
#include "wavemodal/error.hpp"

using namespace wavemodal;
using namespace testing_support;

namespace {

constexpr double kDt = 0.01;  // 100 Hz
constexpr std::size_t kN = 3000;

}  // namespace

TEST_CASE("unit cosine has unit envelope in the interior") {
    const auto z = analytic_signal(TimeSeries(tone(2.0, 1.0, 0.0, kN, kDt), kDt));
    const auto env = envelope_and_phase(z);
    const auto [first, last] = trusted_range(kN);
    for (std::size_t i = first; i < last; ++i) CHECK(std::abs(env.amplitude[i] - 1.0) < 0.01);
}

TEST_CASE("zero signal gives zero analytic signal and degenerate envelope") {
    const auto z = analytic_signal(TimeSeries(std::vector<double>(256, 0.0), kDt));
    for (const auto& v : z.values) CHECK(v == std::complex<double>(0.0, 0.0));
    const auto env = envelope_and_phase(z);
    CHECK(env.degenerate);
    CHECK(max_abs(env.amplitude) == 0.0);
    CHECK(max_abs(env.phase) == 0.0);
}

TEST_CASE("analytic signal of a sine is -i e^{i w t}") {
    std::vector<double> x(kN);
    for (std::size_t i = 0; i < kN; ++i) x[i] = std::sin(2.0 * kPi * 2.0 * static_cast<double>(i) * kDt);
    const auto z = analytic_signal(TimeSeries(x, kDt));
    const auto [first, last] = trusted_range(kN);
    for (std::size_t i = first; i < last; ++i) {
        const double t = static_cast<double>(i) * kDt;
        const auto expected = std::complex<double>(0.0, -1.0) * std::exp(std::complex<double>(0.0, 2.0 * kPi * 2.0 * t));
        CHECK(std::abs(z.values[i] - expected) < 0.01);
    }
}

TEST_CASE("log envelope slope recovers the decay rate") {
    std::vector<double> x(kN);
    for (std::size_t i = 0; i < kN; ++i) {
        const double t = static_cast<double>(i) * kDt;
        x[i] = std::exp(-0.1 * t) * std::cos(2.0 * kPi * 3.0 * t);
    }
    const auto env = envelope_and_phase(analytic_signal(TimeSeries(x, kDt)));
    const auto [first, last] = trusted_range(kN);
    std::vector<double> t, la;
    for (std::size_t i = first; i < last; ++i) {
        t.push_back(static_cast<double>(i) * kDt);
        la.push_back(std::log(env.amplitude[i]));
    }
    const auto fit = fit_line(t, la);
    CHECK(std::abs(fit.slope + 0.1) <= 0.001);
}

TEST_CASE("mean phase rate of a tone is its angular frequency") {
    const auto env = envelope_and_phase(analytic_signal(TimeSeries(tone(3.0, 1.0, 0.4, kN, kDt), kDt)));
    const auto [first, last] = trusted_range(kN);
    const double rate = (env.phase[last - 1] - env.phase[first]) / (static_cast<double>(last - 1 - first) * kDt);
    CHECK(std::abs(rate - 2.0 * kPi * 3.0) <= 0.005 * 2.0 * kPi * 3.0);
    for (std::size_t i = 1; i < env.phase.size(); ++i) CHECK(std::abs(env.phase[i] - env.phase[i - 1]) <= kPi);
}

TEST_CASE("real part is the source signal and envelope ignores sign") {
    std::mt19937 rng(5);
    std::normal_distribution<double> g;
    std::vector<double> x(1000), neg(1000);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = g(rng), neg[i] = -x[i];
    const auto z = analytic_signal(TimeSeries(x, kDt));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(z.values[i].real() == Catch::Approx(x[i]).margin(1e-12));
    const auto a = envelope_and_phase(z).amplitude;
    const auto b = envelope_and_phase(analytic_signal(TimeSeries(neg, kDt))).amplitude;
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == Catch::Approx(b[i]).margin(1e-12));
}

TEST_CASE("phase difference of identical signals is zero") {
    const TimeSeries x(damped_cosine(2.3, 0.01, 1.0, 0.2, kN, kDt), kDt);
    const auto p1 = envelope_and_phase(analytic_signal(x)).phase;
    const auto p2 = envelope_and_phase(analytic_signal(x)).phase;
    for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i] - p2[i] == 0.0);
}

TEST_CASE("integrating acceleration recovers velocity") {
    const double w = 2.0 * kPi * 5.0;
    std::vector<double> a(kN), v(kN);
    for (std::size_t i = 0; i < kN; ++i) {
        const double t = static_cast<double>(i) * kDt;
        a[i] = -w * w * std::sin(w * t);
        v[i] = w * std::cos(w * t);
    }
    const auto vel = integrate_acceleration(TimeSeries(a, kDt, "a", SignalKind::acceleration), 1.0, 20.0);
    CHECK(vel.kind() == SignalKind::velocity);
    const auto [first, last] = trusted_range(kN);
    CHECK(relative_l2(vel.values(), v, first, last) < 0.01);
}

TEST_CASE("integrating zero acceleration gives zero") {
    const auto vel = integrate_acceleration(TimeSeries(std::vector<double>(512, 0.0), kDt), 1.0, 20.0);
    CHECK(max_abs(vel.values()) == 0.0);
}

TEST_CASE("DC offset in acceleration is discarded") {
    const double w = 2.0 * kPi * 5.0;
    std::vector<double> a(kN), b(kN);
    for (std::size_t i = 0; i < kN; ++i) {
        a[i] = -w * w * std::sin(w * static_cast<double>(i) * kDt);
        b[i] = a[i] + 9.81;
    }
    const auto va = integrate_acceleration(TimeSeries(a, kDt), 1.0, 20.0).values();
    const auto vb = integrate_acceleration(TimeSeries(b, kDt), 1.0, 20.0).values();
    CHECK(relative_l2(vb, va, 0, kN) < 1e-6);
}

TEST_CASE("integration band must sit below Nyquist") {
    const TimeSeries a(std::vector<double>(512, 1.0), kDt);
    CHECK_THROWS_AS(integrate_acceleration(a, 1.0, 60.0), ValidationError);
    CHECK_THROWS_AS(integrate_acceleration(a, 5.0, 2.0), ValidationError);
    CHECK_THROWS_AS(integrate_acceleration(a, 0.0, 2.0), ValidationError);
}

TEST_CASE("line fit is exact on a line") {
    const std::vector<double> x{0.0, 1.0, 2.0, 3.0};
    const std::vector<double> y{1.0, 3.0, 5.0, 7.0};
    const auto fit = fit_line(x, y);
    CHECK(fit.slope == Catch::Approx(2.0));
    CHECK(fit.intercept == Catch::Approx(1.0));
    CHECK(fit.r_squared == Catch::Approx(1.0));
}

TEST_CASE("trusted range drops five percent at each edge") {
    const auto [first, last] = trusted_range(1000);
    CHECK(first == 50);
    CHECK(last == 950);
}
