#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "wavemodal/fft.hpp"

namespace wavemodal {

struct Mode {
    double f_hz = 0.0;
    double zeta = 0.0;
    Eigen::VectorXcd psi;
    cplx q{0.0, 0.0};

    double omega() const;
    // Decaying pole -zeta w + i w sqrt(1 - zeta^2).
    cplx pole() const;
    Eigen::VectorXd moduli() const;
    // Relative phases in degrees, (-180, 180].
    Eigen::VectorXd phases_deg() const;
};

struct ModalSet {
    std::vector<Mode> modes;
    std::size_t reference_dof = 0;
    nlohmann::json provenance = nlohmann::json::object();

    std::size_t n_modes() const { return modes.size(); }
    std::size_t n_dof() const;
    // Throws ValidationError on inconsistent dimensions, non-finite values,
    // zeta outside [0, 1) or non-positive frequencies.
    void validate() const;
};

cplx stable_pole(double f_hz, double zeta);

/// Scaling that turns a real unit-modal-mass mode into the classical SDOF
/// receptance: 1 / (2 i w sqrt(1 - zeta^2)).
cplx default_scaling(double f_hz, double zeta);

/// Rotate so psi[reference] is real and non-negative, then scale to unit norm.
Eigen::VectorXcd normalize_mode_vector(const Eigen::VectorXcd& psi, std::size_t reference_dof);

/// Wraps an angle in degrees to (-180, 180].
double wrap_degrees(double deg);

/// Builds psi_k[i] = moduli(i,k) exp(i phases(i,k)) with moduli columns
/// renormalized to unit length and Q at its default. moduli and phases are
/// n_dof x n_modes.
ModalSet assemble_modes(const std::vector<double>& f_hz, const std::vector<double>& zeta,
                        const Eigen::MatrixXd& moduli, const Eigen::MatrixXd& phases_deg,
                        std::size_t reference_dof);

nlohmann::json to_json(const ModalSet& set);
ModalSet modal_set_from_json(const nlohmann::json& j);

/// Reads a tabulated modal parameter file (see data/airplane_modes.json).
/// Moduli columns are renormalized; the printed values and their norms are
/// kept under provenance.
ModalSet load_tabulated_modes(const std::filesystem::path& path);

/// SHA-256 hex digest of the canonical JSON dump.
std::string content_hash(const ModalSet& set);

}  // namespace wavemodal
