#include "wavemodal/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "wavemodal/error.hpp"

namespace wavemodal {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Candidate {
    double f_hz;
    double zeta;
    Eigen::VectorXcd psi;
};

// Aligned estimates and band-limited receptances; evaluates E(w).
class Problem {
public:
    Problem(std::vector<DriveEstimate>& estimates, const FusionOptions& opt) : opt_(opt) {
        if (estimates.empty()) throw ValidationError("fusion: need at least one drive-point estimate");
        std::stable_sort(estimates.begin(), estimates.end(),
                         [](const auto& a, const auto& b) { return a.drive_dof < b.drive_dof; });
        for (const auto& e : estimates) {
            e.modal.validate();
            if (e.modal.n_dof() != estimates.front().modal.n_dof())
                throw ValidationError("fusion: estimates differ in DOF count");
            drive_order_.push_back(e.drive_dof);
        }
        reference_dof_ = estimates.front().modal.reference_dof;
        match_modes(estimates);
        std::vector<cplx> values;
        for (std::size_t k = 0; k < estimates.size(); ++k) {
            if (k > 0 && !opt.use_all_drive_frfs) break;
            auto h = convert_frf(estimates[k].measured, FrfKind::receptance).band(opt.band_lo_hz, opt.band_hi_hz);
            if (h.n_freq() == 0) throw ValidationError("fusion: measured FRF has no samples in the band");
            for (std::size_t f = 0; f < h.n_freq(); ++f) {
                const cplx sv(0.0, 2.0 * std::numbers::pi * h.freqs_hz[f]);
                for (std::size_t o = 0; o < h.n_out(); ++o) {
                    for (std::size_t i = 0; i < h.n_in(); ++i) {
                        samples_.push_back({sv, static_cast<Eigen::Index>(h.out_dofs[o]),
                                            static_cast<Eigen::Index>(h.in_dofs[i])});
                        values.push_back(h.values[f](static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i)));
                    }
                }
            }
        }
        target_.resize(2 * static_cast<Eigen::Index>(values.size()));
        for (std::size_t i = 0; i < values.size(); ++i) {
            target_[2 * static_cast<Eigen::Index>(i)] = values[i].real();
            target_[2 * static_cast<Eigen::Index>(i) + 1] = values[i].imag();
        }
        for (const auto& smp : samples_) {
            if (smp.out >= static_cast<Eigen::Index>(estimates.front().modal.n_dof()) ||
                smp.in >= static_cast<Eigen::Index>(estimates.front().modal.n_dof()))
                throw ValidationError("fusion: measured FRF refers to a DOF outside the modal sets");
        }
    }

    std::size_t n_modes() const { return candidates_.size(); }
    std::size_t n_estimates() const { return drive_order_.size(); }
    const std::vector<std::size_t>& drive_order() const { return drive_order_; }

    ModalSet combine_unscaled(const Eigen::MatrixXd& w) const {
        ModalSet set;
        set.reference_dof = reference_dof_;
        for (std::size_t j = 0; j < n_modes(); ++j) {
            Mode m;
            Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(candidates_[j].front().psi.size());
            for (std::size_t k = 0; k < n_estimates(); ++k) {
                const double wk = w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
                const Candidate& c = candidates_[j][k];
                m.f_hz += wk * c.f_hz;
                m.zeta += wk * c.zeta;
                psi += wk * c.psi;
            }
            m.psi = normalize_mode_vector(psi, reference_dof_);
            m.q = default_scaling(m.f_hz, m.zeta);
            set.modes.push_back(std::move(m));
        }
        return set;
    }

    // E with Q_k fitted by linear least squares, evaluated on the flattened
    // measured samples. Matches reconstruct_frf + reconstruction_error.
    double objective(const Eigen::MatrixXd& w, ModalSet* out = nullptr) const {
        ModalSet set;
        try {
            set = combine_unscaled(w);
        } catch (const ValidationError&) {
            // Weighted vectors cancelled out; such points are never optimal.
            return kInf;
        }
        const auto r = static_cast<Eigen::Index>(set.n_modes());
        const auto n = static_cast<Eigen::Index>(samples_.size());
        basis_.resize(2 * n, 2 * r);
        for (Eigen::Index m = 0; m < r; ++m) {
            const Mode& mode = set.modes[static_cast<std::size_t>(m)];
            const cplx lambda = mode.pole();
            for (Eigen::Index i = 0; i < n; ++i) {
                const Sample& smp = samples_[static_cast<std::size_t>(i)];
                const cplx pp = mode.psi[smp.out] * mode.psi[smp.in];
                const cplx ta = pp / (smp.s - lambda);
                const cplx tb = std::conj(pp) / (smp.s - std::conj(lambda));
                const cplx cx = ta + tb;
                const cplx cy = cplx(0.0, 1.0) * (ta - tb);
                basis_(2 * i, 2 * m) = cx.real();
                basis_(2 * i + 1, 2 * m) = cx.imag();
                basis_(2 * i, 2 * m + 1) = cy.real();
                basis_(2 * i + 1, 2 * m + 1) = cy.imag();
            }
        }
        const Eigen::VectorXd scale = basis_.colwise().norm().transpose().cwiseMax(1e-300);
        const Eigen::MatrixXd a = basis_ * scale.cwiseInverse().asDiagonal();
        const Eigen::VectorXd x = (a.transpose() * a).ldlt().solve(a.transpose() * target_).cwiseQuotient(scale);
        if (!x.allFinite()) return kInf;
        const double e = (target_ - basis_ * x).squaredNorm();
        if (out) {
            for (Eigen::Index m = 0; m < r; ++m) set.modes[static_cast<std::size_t>(m)].q = {x[2 * m], x[2 * m + 1]};
            *out = std::move(set);
        }
        return e;
    }

private:
    void match_modes(const std::vector<DriveEstimate>& estimates) {
        const ModalSet& ref = estimates.front().modal;
        double tol = kInf;
        for (std::size_t a = 0; a < ref.n_modes(); ++a)
            for (std::size_t b = a + 1; b < ref.n_modes(); ++b)
                tol = std::min(tol, 0.5 * std::abs(ref.modes[a].f_hz - ref.modes[b].f_hz));
        candidates_.assign(ref.n_modes(), {});
        for (std::size_t k = 0; k < estimates.size(); ++k) {
            const ModalSet& est = estimates[k].modal;
            std::vector<bool> used(est.n_modes(), false);
            for (std::size_t j = 0; j < ref.n_modes(); ++j) {
                const double f_ref = ref.modes[j].f_hz;
                std::vector<std::size_t> hits;
                for (std::size_t q = 0; q < est.n_modes(); ++q)
                    if (std::abs(est.modes[q].f_hz - f_ref) < tol) hits.push_back(q);
                if (hits.size() != 1 || used[hits.front()]) {
                    std::ostringstream msg;
                    msg << "fusion: cannot match the " << f_ref << " Hz mode of drive " << estimates.front().drive_dof
                        << " in drive " << estimates[k].drive_dof << " (candidates:";
                    for (std::size_t q : hits) msg << ' ' << est.modes[q].f_hz << " Hz";
                    if (hits.empty()) msg << " none";
                    msg << ")";
                    throw ValidationError(msg.str());
                }
                used[hits.front()] = true;
                const Mode& m = est.modes[hits.front()];
                // Rotate so the inner product with the reference estimate is
                // real and positive.
                const cplx ip = ref.modes[j].psi.dot(m.psi);
                Eigen::VectorXcd psi = m.psi;
                if (std::abs(ip) > 0.0) psi *= std::conj(ip) / std::abs(ip);
                candidates_[j].push_back({m.f_hz, m.zeta, std::move(psi)});
            }
        }
    }

    FusionOptions opt_;
    std::size_t reference_dof_ = 0;
    std::vector<std::size_t> drive_order_;
    std::vector<std::vector<Candidate>> candidates_;  // [mode][estimate]
    struct Sample {
        cplx s;
        Eigen::Index out;
        Eigen::Index in;
    };
    std::vector<Sample> samples_;
    Eigen::VectorXd target_;
    mutable Eigen::MatrixXd basis_;
};

Eigen::MatrixXd project_rows(const Eigen::MatrixXd& w) {
    Eigen::MatrixXd out(w.rows(), w.cols());
    for (Eigen::Index r = 0; r < w.rows(); ++r) out.row(r) = project_to_simplex(w.row(r).transpose()).transpose();
    return out;
}

struct Descent {
    Eigen::MatrixXd w;
    double e;
    std::size_t iterations;
};

Eigen::MatrixXd numeric_gradient(const Problem& p, const Eigen::MatrixXd& w) {
    const double h = 1e-7;
    Eigen::MatrixXd g(w.rows(), w.cols());
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
            Eigen::MatrixXd wp = w, wm = w;
            wp(r, c) += h;
            wm(r, c) -= h;
            g(r, c) = (p.objective(wp) - p.objective(wm)) / (2.0 * h);
        }
    }
    return g;
}

// Spectral projected gradient: Barzilai-Borwein step lengths with an Armijo
// search along the projected direction, so E never increases.
Descent projected_gradient(const Problem& p, Eigen::MatrixXd w, const FusionOptions& opt) {
    double e = p.objective(w);
    if (!std::isfinite(e)) return {w, e, 0};
    Eigen::MatrixXd g = numeric_gradient(p, w);
    double alpha = g.cwiseAbs().maxCoeff() > 0.0 ? 0.5 / g.cwiseAbs().maxCoeff() : 1.0;
    std::size_t it = 0;
    for (; it < opt.max_iterations; ++it) {
        if (!g.allFinite()) break;
        const Eigen::MatrixXd d = project_rows(w - alpha * g) - w;
        if (d.cwiseAbs().maxCoeff() < 1e-10) break;
        const double slope = (g.array() * d.array()).sum();
        if (slope >= 0.0) break;
        double lambda = 1.0;
        Eigen::MatrixXd trial;
        double et = e;
        bool accepted = false;
        for (int bt = 0; bt < 40; ++bt, lambda *= 0.5) {
            trial = w + lambda * d;
            et = p.objective(trial);
            if (et <= e + 1e-4 * lambda * slope) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        const Eigen::MatrixXd g_new = numeric_gradient(p, trial);
        const Eigen::MatrixXd s = trial - w;
        const Eigen::MatrixXd y = g_new - g;
        const double sy = (s.array() * y.array()).sum();
        const double gain = e - et;
        w = trial;
        e = et;
        g = g_new;
        if (gain <= opt.tolerance * std::abs(e)) {
            ++it;
            break;
        }
        alpha = sy > 0.0 ? s.squaredNorm() / sy : 0.5 / std::max(1e-300, g.cwiseAbs().maxCoeff());
    }
    return {w, e, it};
}

}  // namespace

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
    const auto n = v.size();
    std::vector<double> u(v.data(), v.data() + n);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumulative = 0.0, theta = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        cumulative += u[static_cast<std::size_t>(i)];
        const double t = (cumulative - 1.0) / static_cast<double>(i + 1);
        if (u[static_cast<std::size_t>(i)] - t > 0.0) theta = t;
    }
    Eigen::VectorXd out = (v.array() - theta).max(0.0);
    // Remove rounding drift so the weights sum to one.
    const double s = out.sum();
    if (s > 0.0) out /= s;
    return out;
}

json FusionResult::report() const {
    json w = json::array();
    for (Eigen::Index r = 0; r < weights.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < weights.cols(); ++c) row.push_back(weights(r, c));
        w.push_back(std::move(row));
    }
    return {{"weights", std::move(w)},
            {"drive_order", drive_order},
            {"E_initial_per_drive", e_initial_per_drive},
            {"E_final", e_final},
            {"iterations", iterations}};
}

double fusion_objective(std::vector<DriveEstimate> estimates, const Eigen::MatrixXd& weights,
                        const FusionOptions& options) {
    const Problem p(estimates, options);
    if (weights.rows() != static_cast<Eigen::Index>(p.n_modes()) ||
        weights.cols() != static_cast<Eigen::Index>(p.n_estimates()))
        throw ValidationError("fusion_objective: weight matrix has the wrong shape");
    return p.objective(weights);
}

FusionResult fuse_mode_estimates(std::vector<DriveEstimate> estimates, const FusionOptions& options) {
    const Problem p(estimates, options);
    const auto r = static_cast<Eigen::Index>(p.n_modes());
    const auto k = static_cast<Eigen::Index>(p.n_estimates());

    FusionResult res;
    res.drive_order = p.drive_order();
    std::vector<Eigen::MatrixXd> starts;
    starts.push_back(Eigen::MatrixXd::Constant(r, k, 1.0 / static_cast<double>(k)));
    for (Eigen::Index v = 0; v < k; ++v) {
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(r, k);
        w.col(v).setOnes();
        res.e_initial_per_drive.push_back(p.objective(w));
        if (k > 1) starts.push_back(std::move(w));
    }

    const double e_uniform = p.objective(starts.front());
    double spread = 0.0;
    for (double e : res.e_initial_per_drive) spread = std::max(spread, std::abs(e - e_uniform));
    const bool flat = k == 1 || spread <= 1e-12 * std::max(1.0, std::abs(e_uniform));
    if (flat) {
        res.weights = starts.front();
        res.e_final = p.objective(res.weights, &res.modal);
        res.modal.provenance = {{"source", "fusion"}, {"drive_order", res.drive_order}};
        return res;
    }

    std::mt19937_64 rng(options.seed);
    std::exponential_distribution<double> expo(1.0);
    for (std::size_t s = 0; s < options.random_starts; ++s) {
        Eigen::MatrixXd w(r, k);
        for (Eigen::Index i = 0; i < r; ++i) {
            for (Eigen::Index c = 0; c < k; ++c) w(i, c) = expo(rng);
            w.row(i) /= w.row(i).sum();
        }
        starts.push_back(std::move(w));
    }

    Descent best{starts.front(), kInf, 0};
    std::size_t total_iterations = 0;
    for (const auto& w0 : starts) {
        Descent d = projected_gradient(p, w0, options);
        total_iterations += d.iterations;
        if (d.e < best.e) best = std::move(d);
    }
    res.weights = best.w;
    res.iterations = total_iterations;
    res.e_final = p.objective(res.weights, &res.modal);
    res.modal.provenance = {{"source", "fusion"}, {"drive_order", res.drive_order}};
    return res;
}

}  // namespace wavemodal
