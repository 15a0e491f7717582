#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "wavemodal/fft.hpp"
#include "wavemodal/series.hpp"

namespace wavemodal {

/// z(t) = x(t) + i H{x}(t). The real part is the source signal verbatim.
struct AnalyticSeries {
    std::vector<cplx> values;
    double dt = 0.0;
};

struct EnvelopePhase {
    std::vector<double> amplitude;
    std::vector<double> phase;  // unwrapped, radians
    double dt = 0.0;
    // Set when the input was identically zero.
    bool degenerate = false;
};

/// Spectral Hilbert transform: negative frequencies zeroed, positive doubled.
AnalyticSeries analytic_signal(const TimeSeries& x);

/// A = |z|, unwrapped arg z. Below eps * max(A) the phase is held at its last
/// valid value.
EnvelopePhase envelope_and_phase(const AnalyticSeries& z);

/// Velocity from acceleration by division with i 2 pi f inside [f_lo, f_hi];
/// everything outside the band is discarded.
TimeSeries integrate_acceleration(const TimeSeries& a, double f_lo, double f_hi);

/// Sample index range [first, last) outside the leading and trailing edge
/// guards (each `fraction` of the record).
std::pair<std::size_t, std::size_t> trusted_range(std::size_t n, double fraction = 0.05);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace wavemodal
