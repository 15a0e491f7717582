#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "wavemodal/frf.hpp"
#include "wavemodal/modal_set.hpp"
#include "wavemodal/series.hpp"

namespace wavemodal {

/// Three coupled oscillators with non-proportional damping and two closely
/// spaced modes near 3.9 and 4.2 Hz.
struct BenchConfig {
    double m = 1.0;
    double k = 100.0;
    double epsilon = 0.1;
    double k3 = 100.0 * (3.0 - 1.7320508075688772);
    double c1 = 0.01;
    double c2 = 0.02;
    double c3 = 0.01;
    double c2a = 0.01;
    double c3a = 0.08;
    // Multiplies the damping matrix built from c1..c3a. The value 3 makes the
    // system match the reference modal tables (see README).
    double damping_scale = 3.0;
    double f0 = 10.0;     // pulse amplitude, N/kg
    double t_d = 0.001;   // pulse length, s
    double fs = 50.0;     // output rate, Hz
    double duration = 60.0;
    std::size_t drive_dof = 0;

    void validate() const;
    std::size_t n_samples() const;
};

nlohmann::json to_json(const BenchConfig& cfg);
BenchConfig bench_config_from_json(const nlohmann::json& j);
BenchConfig load_bench_config(const std::filesystem::path& path);

/// Damping matrix exactly as tabulated from c1..c3a, before damping_scale.
Eigen::MatrixXd printed_damping_matrix(const BenchConfig& cfg);

SystemModel build_three_dof(const BenchConfig& cfg);

/// The pulse f0 sin(pi t / t_d) on [0, t_d] sampled at `rate`, as force per
/// unit mass. Rejects rates that put fewer than two samples in the pulse.
TimeSeries half_sine_impulse(const BenchConfig& cfg, double rate);

struct BenchResponse {
    std::vector<TimeSeries> velocity;
    std::vector<TimeSeries> displacement;
    // Physical force on the driven DOF at the output rate, as a single
    // first-sample impulse carrying the pulse's momentum.
    TimeSeries force;
    std::vector<double> energy;
};

/// Exact response to the half-sine pulse: the pulse is generated by an
/// oscillator state appended to the system and propagated by the matrix
/// exponential, after which the free response is stepped at 1/fs.
BenchResponse simulate_full(const SystemModel& model, const BenchConfig& cfg);

/// Response to a sampled physical force on `drive_dof`, with the force held
/// constant across each sample interval.
BenchResponse simulate_sampled(const SystemModel& model, const TimeSeries& force, std::size_t drive_dof);

/// 0.5 v'Mv + 0.5 x'Kx per sample.
std::vector<double> mechanical_energy(const SystemModel& model, const std::vector<TimeSeries>& displacement,
                                      const std::vector<TimeSeries>& velocity);

struct ExactModal {
    std::vector<double> f_hz;
    std::vector<double> zeta;
    std::vector<cplx> poles;
    // Columns are unit-norm mode vectors with DOF 0 real and non-negative.
    Eigen::MatrixXcd modes;
    // Modal scaling that makes the modal synthesis equal the direct receptance.
    std::vector<cplx> q;

    ModalSet to_modal_set() const;
};

/// Companion linearization of (l^2 M + l C + K) v = 0; keeps the decaying
/// upper-half-plane poles in ascending |l|.
ExactModal exact_modal_oracle(const SystemModel& model);

}  // namespace wavemodal
