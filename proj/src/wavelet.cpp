#include "wavemodal/wavelet.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

#include "wavemodal/error.hpp"

namespace wavemodal {

namespace {
const double kMorletGain = std::pow(std::numbers::pi, -0.25) * std::sqrt(2.0 * std::numbers::pi);
// |Psi| is below 1e-300 beyond this many units above the center.
constexpr double kUpperReach = 40.0;
}  // namespace

double morlet_spectrum(double w, double center) {
    const double shifted = w - center;
    const double envelope = std::exp(-0.5 * shifted * shifted);
    if (w >= 0.0) {
        // e^{-(w-wc)^2/2} (1 - e^{-w wc}) avoids cancellation near w = 0.
        return kMorletGain * envelope * -std::expm1(-w * center);
    }
    return kMorletGain * (envelope - std::exp(-0.5 * (w * w + center * center)));
}

QuadratureResult admissibility_integral(double center, double relative_tolerance) {
    using boost::math::quadrature::gauss_kronrod;
    auto integrand = [center](double w) {
        if (w <= 0.0) return 0.0;
        const double psi = morlet_spectrum(w, center);
        return psi * psi / w;
    };
    QuadratureResult total;
    const double breaks[] = {0.0, center, center + kUpperReach};
    for (int i = 0; i < 2; ++i) {
        double error = 0.0;
        const double value = gauss_kronrod<double, 61>::integrate(
            integrand, breaks[i], breaks[i + 1], 20, relative_tolerance, &error);
        total.value += value;
        total.error_estimate += error;
    }
    if (!(total.value > 0.0) || !std::isfinite(total.value) ||
        total.error_estimate > relative_tolerance * total.value) {
        std::ostringstream msg;
        msg << "admissibility quadrature did not converge for center frequency " << center
            << ": achieved relative error " << total.error_estimate / total.value
            << ", requested " << relative_tolerance;
        throw NumericalError(msg.str());
    }
    return total;
}

WaveletSpec::WaveletSpec(double center_frequency) : center_(center_frequency) {
    if (!std::isfinite(center_) || center_ < kMinimumCenter) {
        std::ostringstream msg;
        msg << "wavelet center frequency must be >= " << kMinimumCenter << ", got " << center_;
        throw ValidationError(msg.str());
    }
    admissibility_ = admissibility_integral(center_).value;
}

}  // namespace wavemodal
