#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "wavemodal/frf.hpp"
#include "wavemodal/modal_set.hpp"
#include "wavemodal/series.hpp"

namespace wavemodal {

enum class RomOutput { displacement, velocity };

/// Real modal state-space model x' = A x + B u, y = C x + D u with one 2x2
/// block per conjugate pole pair.
struct ReducedModel {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    Eigen::MatrixXd C;
    Eigen::MatrixXd D;
    std::vector<std::size_t> input_dofs;
    std::vector<std::size_t> output_dofs;
    RomOutput output_kind = RomOutput::displacement;
    std::size_t mode_count = 0;
    double max_mode_hz = 0.0;
    std::string modal_provenance_hash;
    std::string realization_note;
};

ReducedModel build_rom(const ModalSet& modal, const std::vector<std::size_t>& input_dofs,
                       const std::vector<std::size_t>& output_dofs, RomOutput output_kind);

/// C (i 2 pi f - A)^{-1} B + D.
Eigen::MatrixXcd rom_transfer(const ReducedModel& rom, double f_hz);

/// The ROM frequency response as receptance or mobility, per output kind.
FrfMatrix rom_frf(const ReducedModel& rom, const std::vector<double>& freqs_hz);

struct SimulationResult {
    std::vector<double> t;
    Eigen::MatrixXd y;        // n_out x n_t
    Eigen::MatrixXd x_state;  // 2r x n_t when requested, else empty
    std::vector<TimeSeries> outputs;
};

/// Zero-order-hold exact discretization from zero initial state. Each force
/// channel feeds the matching entry of rom.input_dofs.
SimulationResult simulate_rom(const ReducedModel& rom, const std::vector<TimeSeries>& forces, double dt,
                              bool keep_state = false);

nlohmann::json to_json(const ReducedModel& rom);

}  // namespace wavemodal
