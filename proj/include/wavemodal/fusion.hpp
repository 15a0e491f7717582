#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "wavemodal/frf.hpp"
#include "wavemodal/modal_set.hpp"

namespace wavemodal {

/// Modal estimate from one excitation point together with the FRF measured
/// there (one input column, any FRF kind).
struct DriveEstimate {
    std::size_t drive_dof = 0;
    ModalSet modal;
    FrfMatrix measured;
};

struct FusionOptions {
    double band_lo_hz = 1.5;
    double band_hi_hz = 5.5;
    std::size_t random_starts = 8;
    std::uint64_t seed = 20240611;
    std::size_t max_iterations = 100;
    // Relative decrease of E below which a descent run stops.
    double tolerance = 1e-9;
    // When false only the first estimate's measured FRF enters the objective.
    bool use_all_drive_frfs = true;
};

struct FusionResult {
    ModalSet modal;
    Eigen::MatrixXd weights;  // n_modes x n_estimates, estimates ordered by drive DOF
    std::vector<std::size_t> drive_order;
    std::vector<double> e_initial_per_drive;
    double e_final = 0.0;
    std::size_t iterations = 0;

    nlohmann::json report() const;
};

/// Chooses per-mode simplex weights over the drive-point estimates that
/// minimize the FRF reconstruction error. Mode vectors are phase-aligned to
/// the first estimate before combining; frequencies and damping ratios are
/// combined with the same weights, and modal scaling is refitted to the
/// measured FRFs at every evaluation.
FusionResult fuse_mode_estimates(std::vector<DriveEstimate> estimates, const FusionOptions& options = {});

/// Objective value at the given weights (rows: modes, columns: estimates in
/// drive-DOF order). Exposed for verification.
double fusion_objective(std::vector<DriveEstimate> estimates, const Eigen::MatrixXd& weights,
                        const FusionOptions& options = {});

/// Euclidean projection of v onto the probability simplex.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v);

}  // namespace wavemodal
