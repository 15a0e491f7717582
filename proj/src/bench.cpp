#include "wavemodal/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "wavemodal/error.hpp"

namespace wavemodal {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::MatrixXd state_matrix(const SystemModel& model) {
    const auto n = static_cast<Eigen::Index>(model.n());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    a.topRightCorner(n, n).setIdentity();
    const Eigen::LLT<Eigen::MatrixXd> mass(model.M);
    a.bottomLeftCorner(n, n) = -mass.solve(model.K);
    a.bottomRightCorner(n, n) = -mass.solve(model.C);
    return a;
}

BenchResponse empty_response(std::size_t n_dof, std::size_t n_samples, double dt) {
    BenchResponse r{{}, {}, TimeSeries(std::vector<double>(n_samples, 0.0), dt, "force", SignalKind::force), {}};
    for (std::size_t i = 0; i < n_dof; ++i) {
        r.velocity.emplace_back(std::vector<double>(n_samples, 0.0), dt, "dof" + std::to_string(i),
                                SignalKind::velocity);
        r.displacement.emplace_back(std::vector<double>(n_samples, 0.0), dt, "dof" + std::to_string(i),
                                    SignalKind::displacement);
    }
    return r;
}

// Fills velocity/displacement series from a state history (n_state x n_samples).
void store_states(BenchResponse& r, const Eigen::MatrixXd& states, double dt) {
    const auto n = static_cast<Eigen::Index>(r.velocity.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<double> x(static_cast<std::size_t>(states.cols())), v(x.size());
        for (Eigen::Index c = 0; c < states.cols(); ++c) {
            x[static_cast<std::size_t>(c)] = states(i, c);
            v[static_cast<std::size_t>(c)] = states(n + i, c);
        }
        const std::string label = "dof" + std::to_string(i);
        r.displacement[static_cast<std::size_t>(i)] = TimeSeries(std::move(x), dt, label, SignalKind::displacement);
        r.velocity[static_cast<std::size_t>(i)] = TimeSeries(std::move(v), dt, label, SignalKind::velocity);
    }
}

// Integral of the unit-amplitude pulse from 0 to t.
double pulse_integral(double t, double t_d) {
    const double tc = std::clamp(t, 0.0, t_d);
    return t_d / kPi * (1.0 - std::cos(kPi * tc / t_d));
}

}  // namespace

void BenchConfig::validate() const {
    const double positives[] = {m, k, k3, c1, c2, c3, c2a, c3a, damping_scale, f0, t_d, fs, duration};
    for (double v : positives) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("bench config: physical constants must be positive");
    }
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ValidationError("bench config: epsilon must lie in (0, 1)");
    if (drive_dof > 2) throw ValidationError("bench config: drive_dof must be 0, 1 or 2");
    if (n_samples() < 16) throw ValidationError("bench config: duration too short for the sample rate");
}

std::size_t BenchConfig::n_samples() const {
    return static_cast<std::size_t>(std::llround(duration * fs));
}

json to_json(const BenchConfig& c) {
    return {{"m", c.m},           {"k", c.k},         {"epsilon", c.epsilon},
            {"k3", c.k3},         {"c1", c.c1},       {"c2", c.c2},
            {"c3", c.c3},         {"c2a", c.c2a},     {"c3a", c.c3a},
            {"damping_scale", c.damping_scale},       {"f0", c.f0},
            {"t_d", c.t_d},       {"fs", c.fs},       {"duration", c.duration},
            {"drive_dof", c.drive_dof}};
}

BenchConfig bench_config_from_json(const json& j) {
    BenchConfig c;
    try {
        c.m = j.value("m", c.m);
        c.k = j.value("k", c.k);
        c.epsilon = j.value("epsilon", c.epsilon);
        c.k3 = j.value("k3", c.k3);
        c.c1 = j.value("c1", c.c1);
        c.c2 = j.value("c2", c.c2);
        c.c3 = j.value("c3", c.c3);
        c.c2a = j.value("c2a", c.c2a);
        c.c3a = j.value("c3a", c.c3a);
        c.damping_scale = j.value("damping_scale", c.damping_scale);
        c.f0 = j.value("f0", c.f0);
        c.t_d = j.value("t_d", c.t_d);
        c.fs = j.value("fs", c.fs);
        c.duration = j.value("duration", c.duration);
        c.drive_dof = j.value("drive_dof", c.drive_dof);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bench config: ") + e.what());
    }
    c.validate();
    return c;
}

BenchConfig load_bench_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open bench config " + path.string());
    try {
        return bench_config_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw ValidationError("bench config " + path.string() + ": " + e.what());
    }
}

Eigen::MatrixXd printed_damping_matrix(const BenchConfig& c) {
    Eigen::MatrixXd d(3, 3);
    d << c.c2a + c.c3a + c.c1, -c.c2a, -c.c3a,
         -c.c2a, c.c2a + c.c2 / 2.0, 0.0,
         -c.c3a, 0.0, c.c3a + c.c3;
    return d;
}

SystemModel build_three_dof(const BenchConfig& c) {
    c.validate();
    SystemModel s;
    s.M = Eigen::Vector3d(c.m / 2.0, c.m / 2.0, c.m / 5.0).asDiagonal();
    s.C = c.damping_scale * printed_damping_matrix(c);
    s.K.resize(3, 3);
    s.K << 2.0 * c.k, -c.k, 0.0,
           -c.k, (2.0 + c.epsilon) * c.k, -c.epsilon * c.k,
           0.0, -c.epsilon * c.k, c.k3 + c.epsilon * c.k;
    return s;
}

TimeSeries half_sine_impulse(const BenchConfig& cfg, double rate) {
    if (!(rate > 0.0) || cfg.t_d < 2.0 / rate) {
        std::ostringstream msg;
        msg << "half_sine_impulse: pulse of " << cfg.t_d << " s is not resolved at " << rate
            << " Hz; sample at " << 2.0 / cfg.t_d << " Hz or faster";
        throw ValidationError(msg.str());
    }
    const double dt = 1.0 / rate;
    const auto n = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(cfg.duration * rate)));
    std::vector<double> f(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt;
        if (t > cfg.t_d) break;
        f[i] = cfg.f0 * std::sin(kPi * t / cfg.t_d);
    }
    return TimeSeries(std::move(f), dt, "pulse", SignalKind::force);
}

BenchResponse simulate_full(const SystemModel& model, const BenchConfig& cfg) {
    cfg.validate();
    model.validate();
    const auto n = static_cast<Eigen::Index>(model.n());
    if (cfg.drive_dof >= model.n()) throw ValidationError("simulate_full: drive DOF out of range");
    const std::size_t n_samples = cfg.n_samples();
    const double dt = 1.0 / cfg.fs;
    const Eigen::MatrixXd a = state_matrix(model);

    // State plus a (sin, cos) generator whose sine drives the forced DOF.
    const double wp = kPi / cfg.t_d;
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(2 * n + 2, 2 * n + 2);
    aug.topLeftCorner(2 * n, 2 * n) = a;
    aug(n + static_cast<Eigen::Index>(cfg.drive_dof), 2 * n) = cfg.f0;
    aug(2 * n, 2 * n + 1) = wp;
    aug(2 * n + 1, 2 * n) = -wp;

    Eigen::MatrixXd states = Eigen::MatrixXd::Zero(2 * n, static_cast<Eigen::Index>(n_samples));
    Eigen::VectorXd z = Eigen::VectorXd::Zero(2 * n + 2);
    z[2 * n + 1] = 1.0;
    const Eigen::MatrixXd free_step = (a * dt).exp();
    Eigen::MatrixXd forced_step;
    if (cfg.t_d >= dt) forced_step = (aug * dt).exp();
    double t_now = 0.0;
    bool pulse_done = false;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(2 * n);
    for (std::size_t i = 1; i < n_samples; ++i) {
        const double t_next = static_cast<double>(i) * dt;
        if (!pulse_done) {
            if (t_next <= cfg.t_d) {
                z = forced_step * z;
                t_now = t_next;
                if (t_next == cfg.t_d) pulse_done = true;
                x = z.head(2 * n);
            } else {
                z = (aug * (cfg.t_d - t_now)).exp() * z;
                x = (a * (t_next - cfg.t_d)).exp() * z.head(2 * n);
                pulse_done = true;
            }
        } else {
            x = free_step * x;
        }
        states.col(static_cast<Eigen::Index>(i)) = x;
    }

    BenchResponse r = empty_response(model.n(), n_samples, dt);
    store_states(r, states, dt);
    std::vector<double> force(n_samples, 0.0);
    const double mass = model.M(static_cast<Eigen::Index>(cfg.drive_dof), static_cast<Eigen::Index>(cfg.drive_dof));
    for (std::size_t i = 0; i < n_samples; ++i) {
        const double t0 = static_cast<double>(i) * dt;
        const double area = pulse_integral(t0 + dt, cfg.t_d) - pulse_integral(t0, cfg.t_d);
        force[i] = mass * cfg.f0 * area / dt;
        if (t0 > cfg.t_d) break;
    }
    r.force = TimeSeries(std::move(force), dt, "force" + std::to_string(cfg.drive_dof), SignalKind::force);
    r.energy = mechanical_energy(model, r.displacement, r.velocity);

    for (std::size_t i = 1; i < n_samples; ++i) {
        const double t_prev = static_cast<double>(i - 1) * dt;
        if (t_prev < cfg.t_d) continue;
        if (r.energy[i] > r.energy[i - 1] * (1.0 + 1e-9) + 1e-300) {
            std::ostringstream msg;
            msg << "simulate_full: mechanical energy grows in free decay at t = "
                << static_cast<double>(i) * dt << " s";
            throw NumericalError(msg.str());
        }
    }
    return r;
}

BenchResponse simulate_sampled(const SystemModel& model, const TimeSeries& force, std::size_t drive_dof) {
    model.validate();
    if (drive_dof >= model.n()) throw ValidationError("simulate_sampled: drive DOF out of range");
    const auto n = static_cast<Eigen::Index>(model.n());
    const double dt = force.dt();
    const Eigen::MatrixXd a = state_matrix(model);
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(2 * n + 1, 2 * n + 1);
    aug.topLeftCorner(2 * n, 2 * n) = a;
    aug(n + static_cast<Eigen::Index>(drive_dof), 2 * n) =
        1.0 / model.M(static_cast<Eigen::Index>(drive_dof), static_cast<Eigen::Index>(drive_dof));
    const Eigen::MatrixXd phi = (aug * dt).exp();
    const Eigen::MatrixXd ad = phi.topLeftCorner(2 * n, 2 * n);
    const Eigen::VectorXd bd = phi.topRightCorner(2 * n, 1);

    Eigen::MatrixXd states = Eigen::MatrixXd::Zero(2 * n, static_cast<Eigen::Index>(force.size()));
    Eigen::VectorXd x = Eigen::VectorXd::Zero(2 * n);
    for (std::size_t i = 1; i < force.size(); ++i) {
        x = ad * x + bd * force[i - 1];
        states.col(static_cast<Eigen::Index>(i)) = x;
    }
    BenchResponse r = empty_response(model.n(), force.size(), dt);
    store_states(r, states, dt);
    r.force = force;
    r.energy = mechanical_energy(model, r.displacement, r.velocity);
    return r;
}

std::vector<double> mechanical_energy(const SystemModel& model, const std::vector<TimeSeries>& displacement,
                                      const std::vector<TimeSeries>& velocity) {
    const auto n = static_cast<Eigen::Index>(model.n());
    if (displacement.size() != model.n() || velocity.size() != model.n())
        throw ValidationError("mechanical_energy: channel count differs from model size");
    const std::size_t len = displacement.front().size();
    std::vector<double> e(len);
    Eigen::VectorXd x(n), v(n);
    for (std::size_t s = 0; s < len; ++s) {
        for (Eigen::Index i = 0; i < n; ++i) {
            x[i] = displacement[static_cast<std::size_t>(i)][s];
            v[i] = velocity[static_cast<std::size_t>(i)][s];
        }
        e[s] = 0.5 * v.dot(model.M * v) + 0.5 * x.dot(model.K * x);
    }
    return e;
}

ModalSet ExactModal::to_modal_set() const {
    ModalSet set;
    set.reference_dof = 0;
    for (std::size_t k = 0; k < f_hz.size(); ++k) {
        Mode m;
        m.f_hz = f_hz[k];
        m.zeta = zeta[k];
        m.psi = modes.col(static_cast<Eigen::Index>(k));
        m.q = q[k];
        set.modes.push_back(std::move(m));
    }
    set.provenance = {{"source", "exact_modal_oracle"}};
    return set;
}

ExactModal exact_modal_oracle(const SystemModel& model) {
    model.validate();
    const auto n = static_cast<Eigen::Index>(model.n());
    const Eigen::MatrixXd a = state_matrix(model);
    const Eigen::EigenSolver<Eigen::MatrixXd> solver(a);
    if (solver.info() != Eigen::Success) throw NumericalError("exact_modal_oracle: eigen-solve failed");
    const Eigen::VectorXcd values = solver.eigenvalues();
    const Eigen::MatrixXcd vectors = solver.eigenvectors();

    const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(vectors);
    const auto sv = svd.singularValues();
    if (!(sv[sv.size() - 1] > 1e-10 * sv[0]))
        throw NumericalError("exact_modal_oracle: defective eigenstructure");
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (!(values[i].real() < 0.0)) throw ValidationError("exact_modal_oracle: model is not stable");
    }

    std::vector<Eigen::Index> upper;
    for (Eigen::Index i = 0; i < values.size(); ++i)
        if (values[i].imag() > 0.0) upper.push_back(i);
    if (static_cast<Eigen::Index>(upper.size()) != n)
        throw NumericalError("exact_modal_oracle: expected one oscillatory pole pair per DOF");
    std::sort(upper.begin(), upper.end(),
              [&](Eigen::Index l, Eigen::Index r) { return std::abs(values[l]) < std::abs(values[r]); });

    ExactModal out;
    out.modes.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const cplx lambda = values[upper[static_cast<std::size_t>(k)]];
        const Eigen::VectorXcd v = vectors.col(upper[static_cast<std::size_t>(k)]).head(n);
        const Eigen::MatrixXcd quad = lambda * lambda * model.M.cast<cplx>() + lambda * model.C.cast<cplx>() +
                                      model.K.cast<cplx>();
        const double residual = (quad * v).norm() / v.norm();
        if (!(residual < 1e-9)) {
            std::ostringstream msg;
            msg << "exact_modal_oracle: eigenpair residual " << residual << " too large";
            throw NumericalError(msg.str());
        }
        const Eigen::VectorXcd psi = normalize_mode_vector(v, 0);
        const cplx modal_a = psi.transpose() * (2.0 * lambda * model.M.cast<cplx>() + model.C.cast<cplx>()) * psi;
        out.f_hz.push_back(std::abs(lambda) / (2.0 * kPi));
        out.zeta.push_back(-lambda.real() / std::abs(lambda));
        out.poles.push_back(lambda);
        out.modes.col(k) = psi;
        out.q.push_back(1.0 / modal_a);
    }
    return out;
}

}  // namespace wavemodal
