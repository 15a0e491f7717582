#include "wavemodal/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace wavemodal {

namespace {
// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace

Fft::Fft(std::size_t n) : n_(n) {
    if (n == 0) throw std::invalid_argument("Fft: length must be positive");
    std::lock_guard lock(planner_mutex());
    auto* in = fftw_alloc_complex(n);
    auto* out = fftw_alloc_complex(n);
    in_ = in;
    out_ = out;
    forward_plan_ = fftw_plan_dft_1d(static_cast<int>(n), in, out, FFTW_FORWARD, FFTW_ESTIMATE);
    inverse_plan_ = fftw_plan_dft_1d(static_cast<int>(n), in, out, FFTW_BACKWARD, FFTW_ESTIMATE);
}

Fft::~Fft() { release(); }

Fft::Fft(Fft&& other) noexcept
    : n_(other.n_), in_(other.in_), out_(other.out_),
      forward_plan_(other.forward_plan_), inverse_plan_(other.inverse_plan_) {
    other.in_ = other.out_ = other.forward_plan_ = other.inverse_plan_ = nullptr;
    other.n_ = 0;
}

Fft& Fft::operator=(Fft&& other) noexcept {
    if (this != &other) {
        release();
        n_ = other.n_;
        in_ = other.in_;
        out_ = other.out_;
        forward_plan_ = other.forward_plan_;
        inverse_plan_ = other.inverse_plan_;
        other.in_ = other.out_ = other.forward_plan_ = other.inverse_plan_ = nullptr;
        other.n_ = 0;
    }
    return *this;
}

void Fft::release() {
    if (!in_) return;
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
    fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
    fftw_free(in_);
    fftw_free(out_);
    in_ = out_ = forward_plan_ = inverse_plan_ = nullptr;
}

void Fft::forward(std::span<const cplx> in, std::span<cplx> out) {
    if (in.size() != n_ || out.size() != n_) throw std::invalid_argument("Fft: size mismatch");
    auto* buf = static_cast<cplx*>(in_);
    std::copy(in.begin(), in.end(), buf);
    fftw_execute(static_cast<fftw_plan>(forward_plan_));
    const auto* res = static_cast<const cplx*>(out_);
    std::copy(res, res + n_, out.begin());
}

void Fft::inverse(std::span<const cplx> in, std::span<cplx> out) {
    if (in.size() != n_ || out.size() != n_) throw std::invalid_argument("Fft: size mismatch");
    auto* buf = static_cast<cplx*>(in_);
    std::copy(in.begin(), in.end(), buf);
    fftw_execute(static_cast<fftw_plan>(inverse_plan_));
    const auto* res = static_cast<const cplx*>(out_);
    const double scale = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = res[i] * scale;
}

std::vector<cplx> Fft::forward(std::span<const cplx> in) {
    std::vector<cplx> out(n_);
    forward(in, out);
    return out;
}

std::vector<cplx> Fft::inverse(std::span<const cplx> in) {
    std::vector<cplx> out(n_);
    inverse(in, out);
    return out;
}

std::vector<cplx> Fft::forward_real(std::span<const double> in) {
    std::vector<cplx> padded(n_, cplx{});
    const std::size_t m = std::min(n_, in.size());
    for (std::size_t i = 0; i < m; ++i) padded[i] = in[i];
    return forward(padded);
}

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

std::vector<double> fft_angular_frequencies(std::size_t n, double dt) {
    std::vector<double> w(n);
    const double step = 2.0 * std::numbers::pi / (static_cast<double>(n) * dt);
    // Even lengths put the Nyquist bin on the negative side (numpy ordering).
    for (std::size_t k = 0; k < n; ++k) {
        const auto kk = static_cast<double>(k);
        w[k] = k <= (n - 1) / 2 ? kk * step : (kk - static_cast<double>(n)) * step;
    }
    return w;
}

}  // namespace wavemodal
