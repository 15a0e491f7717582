#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace wavemodal {

using cplx = std::complex<double>;

/// Complex-to-complex FFT of a fixed length backed by FFTW. Plans are created
/// once per instance; the instance is not safe for concurrent use.
class Fft {
public:
    explicit Fft(std::size_t n);
    ~Fft();
    Fft(const Fft&) = delete;
    Fft& operator=(const Fft&) = delete;
    Fft(Fft&& other) noexcept;
    Fft& operator=(Fft&& other) noexcept;

    std::size_t size() const { return n_; }

    // Unnormalized forward transform, sum_n x[n] e^{-2 pi i k n / N}.
    void forward(std::span<const cplx> in, std::span<cplx> out);
    // Inverse transform including the 1/N factor.
    void inverse(std::span<const cplx> in, std::span<cplx> out);

    std::vector<cplx> forward(std::span<const cplx> in);
    std::vector<cplx> inverse(std::span<const cplx> in);
    // Real input zero-padded (or truncated) to the transform length.
    std::vector<cplx> forward_real(std::span<const double> in);

private:
    void release();

    std::size_t n_ = 0;
    void* in_ = nullptr;
    void* out_ = nullptr;
    void* forward_plan_ = nullptr;
    void* inverse_plan_ = nullptr;
};

std::size_t next_pow2(std::size_t n);

/// Angular frequency (rad/s) of each FFT bin in standard order:
/// non-negative bins first, then negative.
std::vector<double> fft_angular_frequencies(std::size_t n, double dt);

}  // namespace wavemodal
