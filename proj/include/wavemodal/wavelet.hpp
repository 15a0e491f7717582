#pragma once

namespace wavemodal {

struct QuadratureResult {
    double value = 0.0;
    double error_estimate = 0.0;
};

/// C = \int_0^\infty |Psi(w)|^2 / w dw for the Morlet wavelet with center
/// frequency `center`, by adaptive Gauss-Kronrod quadrature. Throws
/// NumericalError when the requested relative tolerance is not reached.
QuadratureResult admissibility_integral(double center, double relative_tolerance = 1e-10);

/// Morlet mother wavelet parameters. The admissibility constant is computed
/// once on construction and cached.
class WaveletSpec {
public:
    static constexpr double kDefaultCenter = 50.0;
    static constexpr double kMinimumCenter = 5.0;

    explicit WaveletSpec(double center_frequency = kDefaultCenter);

    double center_frequency() const { return center_; }
    double admissibility_constant() const { return admissibility_; }

    friend bool operator==(const WaveletSpec& a, const WaveletSpec& b) {
        return a.center_ == b.center_;
    }

private:
    double center_;
    double admissibility_;
};

/// Fourier transform of the Morlet wavelet including the zero-mean
/// correction term:
///   pi^{-1/4} sqrt(2 pi) (e^{-(w - wc)^2 / 2} - e^{-wc^2 / 2} e^{-w^2 / 2}).
/// The transform is real-valued.
double morlet_spectrum(double w, double center);
inline double morlet_spectrum(double w, const WaveletSpec& spec) {
    return morlet_spectrum(w, spec.center_frequency());
}

}  // namespace wavemodal
