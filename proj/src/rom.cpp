#include "wavemodal/rom.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "wavemodal/error.hpp"

namespace wavemodal {

using nlohmann::json;

namespace {

constexpr char kRealizationNote[] =
    "Each mode is realized by a real 2x2 block for the conjugate pole pair: the complex modal "
    "coordinate eta' = lambda eta + psi_in^T u is split into real and imaginary parts, and the "
    "displacement output is 2 Re(Q psi_out eta). Its transfer function equals the conjugate-pair "
    "modal synthesis; the transposed (not conjugated) mode vector is used on the input side.";

json matrix_rows(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

ReducedModel build_rom(const ModalSet& modal, const std::vector<std::size_t>& input_dofs,
                       const std::vector<std::size_t>& output_dofs, RomOutput output_kind) {
    modal.validate();
    if (input_dofs.empty() || output_dofs.empty()) throw ValidationError("build_rom: empty input or output DOF list");
    for (std::size_t d : input_dofs)
        if (d >= modal.n_dof()) throw ValidationError("build_rom: input DOF out of range");
    for (std::size_t d : output_dofs)
        if (d >= modal.n_dof()) throw ValidationError("build_rom: output DOF out of range");

    const auto r = static_cast<Eigen::Index>(modal.n_modes());
    const auto n_in = static_cast<Eigen::Index>(input_dofs.size());
    const auto n_out = static_cast<Eigen::Index>(output_dofs.size());
    ReducedModel rom;
    rom.A = Eigen::MatrixXd::Zero(2 * r, 2 * r);
    rom.B = Eigen::MatrixXd::Zero(2 * r, n_in);
    rom.C = Eigen::MatrixXd::Zero(n_out, 2 * r);
    rom.input_dofs = input_dofs;
    rom.output_dofs = output_dofs;
    rom.output_kind = output_kind;
    rom.mode_count = modal.n_modes();

    for (Eigen::Index k = 0; k < r; ++k) {
        const Mode& m = modal.modes[static_cast<std::size_t>(k)];
        if (!(m.zeta > 0.0 && m.zeta < 1.0) || !(m.f_hz > 0.0))
            throw ValidationError("build_rom: mode " + std::to_string(k) + " needs f > 0 and 0 < zeta < 1");
        rom.max_mode_hz = std::max(rom.max_mode_hz, m.f_hz);
        const cplx lambda = m.pole();
        const Eigen::Index s = 2 * k;
        rom.A(s, s) = lambda.real();
        rom.A(s, s + 1) = -lambda.imag();
        rom.A(s + 1, s) = lambda.imag();
        rom.A(s + 1, s + 1) = lambda.real();
        for (Eigen::Index i = 0; i < n_in; ++i) {
            const cplx b = m.psi[static_cast<Eigen::Index>(input_dofs[static_cast<std::size_t>(i)])];
            rom.B(s, i) = b.real();
            rom.B(s + 1, i) = b.imag();
        }
        for (Eigen::Index o = 0; o < n_out; ++o) {
            const cplx c = m.q * m.psi[static_cast<Eigen::Index>(output_dofs[static_cast<std::size_t>(o)])];
            rom.C(o, s) = 2.0 * c.real();
            rom.C(o, s + 1) = -2.0 * c.imag();
        }
    }
    if (output_kind == RomOutput::velocity) {
        rom.D = rom.C * rom.B;
        rom.C = rom.C * rom.A;
    } else {
        rom.D = Eigen::MatrixXd::Zero(n_out, n_in);
    }
    rom.modal_provenance_hash = content_hash(modal);
    rom.realization_note = kRealizationNote;
    return rom;
}

Eigen::MatrixXcd rom_transfer(const ReducedModel& rom, double f_hz) {
    const auto n = rom.A.rows();
    const cplx s(0.0, 2.0 * std::numbers::pi * f_hz);
    const Eigen::MatrixXcd pencil = s * Eigen::MatrixXcd::Identity(n, n) - rom.A.cast<cplx>();
    return rom.C.cast<cplx>() * pencil.partialPivLu().solve(rom.B.cast<cplx>()) + rom.D.cast<cplx>();
}

FrfMatrix rom_frf(const ReducedModel& rom, const std::vector<double>& freqs_hz) {
    FrfMatrix h{freqs_hz, {},
                rom.output_kind == RomOutput::velocity ? FrfKind::mobility : FrfKind::receptance,
                rom.output_dofs, rom.input_dofs, {}};
    h.values.reserve(freqs_hz.size());
    for (double f : freqs_hz) h.values.push_back(rom_transfer(rom, f));
    return h;
}

SimulationResult simulate_rom(const ReducedModel& rom, const std::vector<TimeSeries>& forces, double dt,
                              bool keep_state) {
    if (forces.size() != rom.input_dofs.size()) {
        std::ostringstream msg;
        msg << "simulate_rom: " << forces.size() << " force channels for " << rom.input_dofs.size() << " inputs";
        throw ValidationError(msg.str());
    }
    const double bound = 1.0 / (20.0 * rom.max_mode_hz);
    if (!(dt > 0.0) || dt > bound) {
        std::ostringstream msg;
        msg << "simulate_rom: dt = " << dt << " s is too coarse; need dt <= " << bound << " s";
        throw ValidationError(msg.str());
    }
    const std::size_t n_t = forces.front().size();
    for (const auto& f : forces) {
        if (f.size() != n_t) throw ValidationError("simulate_rom: force channels differ in length");
        if (std::abs(f.dt() - dt) > 1e-12 * dt) throw ValidationError("simulate_rom: force sampling differs from dt");
    }
    const auto n_x = rom.A.rows();
    const auto n_in = rom.B.cols();
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n_x + n_in, n_x + n_in);
    aug.topLeftCorner(n_x, n_x) = rom.A;
    aug.topRightCorner(n_x, n_in) = rom.B;
    const Eigen::MatrixXd phi = (aug * dt).exp();
    const Eigen::MatrixXd ad = phi.topLeftCorner(n_x, n_x);
    const Eigen::MatrixXd bd = phi.topRightCorner(n_x, n_in);

    SimulationResult res;
    res.t.resize(n_t);
    res.y.resize(rom.C.rows(), static_cast<Eigen::Index>(n_t));
    if (keep_state) res.x_state.resize(n_x, static_cast<Eigen::Index>(n_t));
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n_x);
    Eigen::VectorXd u(n_in);
    for (std::size_t i = 0; i < n_t; ++i) {
        for (Eigen::Index c = 0; c < n_in; ++c) u[c] = forces[static_cast<std::size_t>(c)][i];
        res.t[i] = static_cast<double>(i) * dt;
        res.y.col(static_cast<Eigen::Index>(i)) = rom.C * x + rom.D * u;
        if (keep_state) res.x_state.col(static_cast<Eigen::Index>(i)) = x;
        x = ad * x + bd * u;
    }
    const SignalKind kind =
        rom.output_kind == RomOutput::velocity ? SignalKind::velocity : SignalKind::displacement;
    for (Eigen::Index o = 0; o < res.y.rows(); ++o) {
        std::vector<double> samples(res.y.row(o).begin(), res.y.row(o).end());
        res.outputs.emplace_back(std::move(samples), dt,
                                 "dof" + std::to_string(rom.output_dofs[static_cast<std::size_t>(o)]), kind);
    }
    return res;
}

json to_json(const ReducedModel& rom) {
    return {{"A", matrix_rows(rom.A)},
            {"B", matrix_rows(rom.B)},
            {"C", matrix_rows(rom.C)},
            {"D", matrix_rows(rom.D)},
            {"inputs", rom.input_dofs},
            {"outputs", rom.output_dofs},
            {"output_kind", rom.output_kind == RomOutput::velocity ? "velocity" : "displacement"},
            {"mode_count", rom.mode_count},
            {"modal_provenance_hash", rom.modal_provenance_hash},
            {"realization_note", rom.realization_note}};
}

}  // namespace wavemodal
