#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "wavemodal/fft.hpp"
#include "wavemodal/modal_set.hpp"
#include "wavemodal/series.hpp"

namespace wavemodal {

enum class FrfKind { receptance, mobility, accelerance };

std::string_view to_string(FrfKind kind);
FrfKind frf_kind_from_string(std::string_view name);

struct SystemModel {
    Eigen::MatrixXd M;
    Eigen::MatrixXd C;
    Eigen::MatrixXd K;

    std::size_t n() const { return static_cast<std::size_t>(M.rows()); }
    // Square, matching, symmetric; M positive definite.
    void validate() const;
};

/// Complex FRF samples; values[f] is n_out x n_in, rows and columns labelled
/// by out_dofs / in_dofs.
struct FrfMatrix {
    std::vector<double> freqs_hz;
    std::vector<Eigen::MatrixXcd> values;
    FrfKind kind = FrfKind::receptance;
    std::vector<std::size_t> out_dofs;
    std::vector<std::size_t> in_dofs;
    // Ordinary coherence per entry, only for spectral estimates.
    std::vector<Eigen::MatrixXd> coherence;

    std::size_t n_freq() const { return freqs_hz.size(); }
    std::size_t n_out() const { return out_dofs.size(); }
    std::size_t n_in() const { return in_dofs.size(); }
    // Restrict to f_lo <= f <= f_hi.
    FrfMatrix band(double f_lo, double f_hi) const;
    // Keep the columns belonging to the listed input DOFs.
    FrfMatrix select_inputs(const std::vector<std::size_t>& dofs) const;
};

std::vector<double> linear_frequencies(double lo_hz, double hi_hz, std::size_t count);

/// Receptance [K - w^2 M + i w C]^{-1} per frequency by LU solves.
FrfMatrix direct_frf(const SystemModel& model, const std::vector<double>& freqs_hz);

enum class FrfEstimator { h1, h2 };
enum class SpectralWindow { hann, rectangular };

struct SpectralOptions {
    // Samples per block; zero selects the smallest power of two holding 20
    // periods of `lowest_hz`, capped at the record length.
    std::size_t block_length = 0;
    double overlap = 0.5;
    SpectralWindow window = SpectralWindow::hann;
    double lowest_hz = 1.0;
    // Reported band; non-positive bounds keep every non-zero bin.
    double band_lo_hz = 0.0;
    double band_hi_hz = 0.0;
};

/// Welch-averaged H1 (any number of inputs) or H2 (single input). The kind
/// follows from the output signal kind.
FrfMatrix estimate_frf(const std::vector<TimeSeries>& inputs, const std::vector<TimeSeries>& outputs,
                       FrfEstimator method, const SpectralOptions& options = {},
                       const std::vector<std::size_t>& in_dofs = {},
                       const std::vector<std::size_t>& out_dofs = {});

/// Modal synthesis of the receptance with conjugate pole pairs. Empty DOF
/// lists mean every DOF of the set.
FrfMatrix reconstruct_frf(const ModalSet& modal, const std::vector<double>& freqs_hz,
                          const std::vector<std::size_t>& out_dofs = {},
                          const std::vector<std::size_t>& in_dofs = {});

FrfMatrix convert_frf(const FrfMatrix& h, FrfKind target);

/// Sum over frequencies and entries of |measured - reconstructed|^2.
double reconstruction_error(const FrfMatrix& measured, const FrfMatrix& reconstructed);

/// Replaces every Q_k by the real linear least-squares fit of the modal
/// receptance to the measured FRFs (converted to receptance). Mode vectors,
/// poles and the reference stay fixed.
ModalSet fit_modal_scaling(const ModalSet& modal, const std::vector<FrfMatrix>& measured);

}  // namespace wavemodal
