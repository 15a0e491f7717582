#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "wavemodal/series.hpp"

namespace testing_support {

inline constexpr double kPi = std::numbers::pi;

// Bench reference values: frequencies (Hz), damping ratios (%), relative
// phases (deg, [dof][mode]) and moduli ([dof][mode]) of the exact modes.
inline constexpr double kRefFreqHz[3] = {2.30, 3.92, 4.17};
inline constexpr double kRefZetaPct[3] = {0.91, 1.54, 2.00};
inline constexpr double kRefPhaseDeg[3][3] = {
    {0.000, 0.000, 0.000}, {1.002, 178.743, -164.275}, {18.977, 138.048, 51.900}};
inline constexpr double kRefModuli[3][3] = {
    {0.720, 0.621, 0.143}, {0.689, 0.625, 0.163}, {0.077, 0.473, 0.976}};

// a e^{-zeta w t} cos(w_d t + phi)
inline std::vector<double> damped_cosine(double f_hz, double zeta, double amp, double phi, std::size_t n,
                                         double dt) {
    const double w = 2.0 * kPi * f_hz;
    const double wd = w * std::sqrt(1.0 - zeta * zeta);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt;
        x[i] = amp * std::exp(-zeta * w * t) * std::cos(wd * t + phi);
    }
    return x;
}

inline std::vector<double> tone(double f_hz, double amp, double phi, std::size_t n, double dt) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::cos(2.0 * kPi * f_hz * static_cast<double>(i) * dt + phi);
    return x;
}

inline std::vector<double> add(std::vector<double> a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

// ||a - b|| / ||b|| over [first, last).
inline double relative_l2(const std::vector<double>& a, const std::vector<double>& b, std::size_t first,
                          std::size_t last) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = first; i < last; ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num / den);
}

inline double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// Zeros in [lo_hz, hi_hz] of the (out, in) cofactor of the undamped dynamic
// stiffness K - w^2 M, i.e. the undamped anti-resonances of H[out][in].
inline std::vector<double> antiresonances(const Eigen::MatrixXd& K, const Eigen::MatrixXd& M, std::size_t out,
                                          std::size_t in, double lo_hz, double hi_hz) {
    const auto n = K.rows();
    auto cofactor = [&](double f) {
        const double w = 2.0 * kPi * f;
        const Eigen::MatrixXd D = K - w * w * M;
        Eigen::MatrixXd minor(n - 1, n - 1);
        for (Eigen::Index r = 0, rr = 0; r < n; ++r) {
            if (r == static_cast<Eigen::Index>(in)) continue;
            for (Eigen::Index c = 0, cc = 0; c < n; ++c) {
                if (c == static_cast<Eigen::Index>(out)) continue;
                minor(rr, cc++) = D(r, c);
            }
            ++rr;
        }
        return minor.determinant();
    };
    std::vector<double> zeros;
    const int steps = 20000;
    double f0 = lo_hz, c0 = cofactor(f0);
    for (int s = 1; s <= steps; ++s) {
        const double f1 = lo_hz + (hi_hz - lo_hz) * s / steps;
        const double c1 = cofactor(f1);
        if (c0 == 0.0) zeros.push_back(f0);
        else if (c0 * c1 < 0.0) {
            double a = f0, b = f1, ca = c0;
            for (int it = 0; it < 60; ++it) {
                const double m = 0.5 * (a + b), cm = cofactor(m);
                if (ca * cm <= 0.0) b = m;
                else a = m, ca = cm;
            }
            zeros.push_back(0.5 * (a + b));
        }
        f0 = f1, c0 = c1;
    }
    return zeros;
}

inline bool near_any(double f, const std::vector<double>& centers, double rel) {
    for (double c : centers)
        if (std::abs(f - c) <= rel * c) return true;
    return false;
}

// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
public:
    explicit ScratchDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("wavemodal_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace testing_support
