#include "wavemodal/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "wavemodal/error.hpp"

namespace wavemodal {

AnalyticSeries analytic_signal(const TimeSeries& x) {
    const std::size_t n = x.size();
    if (n < 8) throw ValidationError("analytic_signal: '" + x.label() + "' needs at least 8 samples");
    Fft fft(n);
    auto spectrum = fft.forward_real(x.samples());
    // Bin 0 and, for even n, the Nyquist bin keep unit weight.
    const std::size_t positive_end = (n + 1) / 2;
    for (std::size_t k = 1; k < positive_end; ++k) spectrum[k] *= 2.0;
    for (std::size_t k = n / 2 + 1; k < n; ++k) spectrum[k] = 0.0;
    AnalyticSeries z{fft.inverse(spectrum), x.dt()};
    for (std::size_t i = 0; i < n; ++i) z.values[i].real(x[i]);
    return z;
}

EnvelopePhase envelope_and_phase(const AnalyticSeries& z) {
    const std::size_t n = z.values.size();
    EnvelopePhase out{std::vector<double>(n), std::vector<double>(n, 0.0), z.dt, false};
    double peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out.amplitude[i] = std::abs(z.values[i]);
        peak = std::max(peak, out.amplitude[i]);
    }
    if (peak == 0.0) {
        out.degenerate = true;
        return out;
    }
    const double floor = std::numeric_limits<double>::epsilon() * peak;
    bool have_last = false;
    double last = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (out.amplitude[i] < floor) {
            out.phase[i] = last;
            continue;
        }
        double p = std::arg(z.values[i]);
        if (have_last) {
            // Shift by whole turns so the step stays within (-pi, pi].
            const double turn = 2.0 * std::numbers::pi;
            p += turn * std::round((last - p) / turn);
        }
        out.phase[i] = p;
        last = p;
        have_last = true;
    }
    // Leading low-amplitude samples take the first valid phase.
    std::size_t first_valid = 0;
    while (first_valid < n && out.amplitude[first_valid] < floor) ++first_valid;
    for (std::size_t i = 0; i < first_valid; ++i) out.phase[i] = out.phase[first_valid];
    return out;
}

TimeSeries integrate_acceleration(const TimeSeries& a, double f_lo, double f_hi) {
    if (!(f_lo > 0.0) || !(f_hi > f_lo) || f_hi >= a.nyquist()) {
        std::ostringstream msg;
        msg << "integrate_acceleration: band [" << f_lo << ", " << f_hi
            << "] Hz must satisfy 0 < f_lo < f_hi < Nyquist (" << a.nyquist() << " Hz)";
        throw ValidationError(msg.str());
    }
    const std::size_t n = a.size();
    Fft fft(n);
    auto spectrum = fft.forward_real(a.samples());
    const auto w = fft_angular_frequencies(n, a.dt());
    const double w_lo = 2.0 * std::numbers::pi * f_lo;
    const double w_hi = 2.0 * std::numbers::pi * f_hi;
    for (std::size_t k = 0; k < n; ++k) {
        const double aw = std::abs(w[k]);
        if (aw < w_lo || aw > w_hi) {
            spectrum[k] = 0.0;
        } else {
            spectrum[k] /= cplx(0.0, w[k]);
        }
    }
    // Nyquist bin of an even-length record has no sign partner; it is above
    // f_hi by construction, so it was zeroed above.
    const auto v = fft.inverse(spectrum);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = v[i].real();
    return TimeSeries(std::move(out), a.dt(), a.label(), SignalKind::velocity);
}

std::pair<std::size_t, std::size_t> trusted_range(std::size_t n, double fraction) {
    const auto guard = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    if (2 * guard >= n) return {0, 0};
    return {guard, n - guard};
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        throw ValidationError("fit_line: need two or more matched samples");
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx == 0.0) throw NumericalError("fit_line: abscissa is constant");
    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    // A perfectly flat response is a perfect fit.
    fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return fit;
}

}  // namespace wavemodal
