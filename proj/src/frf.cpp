#include "wavemodal/frf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "wavemodal/error.hpp"

namespace wavemodal {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<std::size_t> all_dofs(std::size_t n) {
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = i;
    return out;
}

int kind_order(FrfKind k) {
    switch (k) {
        case FrfKind::receptance: return 0;
        case FrfKind::mobility: return 1;
        case FrfKind::accelerance: return 2;
    }
    return 0;
}

FrfKind kind_for_output(SignalKind k) {
    switch (k) {
        case SignalKind::displacement: return FrfKind::receptance;
        case SignalKind::velocity: return FrfKind::mobility;
        case SignalKind::acceleration: return FrfKind::accelerance;
        case SignalKind::force: break;
    }
    throw ValidationError("estimate_frf: output channels must be motion signals, not force");
}

std::vector<double> make_window(std::size_t n, SpectralWindow kind) {
    std::vector<double> w(n, 1.0);
    if (kind == SpectralWindow::hann) {
        // Periodic Hann, the usual choice for Welch averaging.
        for (std::size_t i = 0; i < n; ++i)
            w[i] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(n));
    }
    return w;
}

}  // namespace

std::string_view to_string(FrfKind kind) {
    switch (kind) {
        case FrfKind::receptance: return "receptance";
        case FrfKind::mobility: return "mobility";
        case FrfKind::accelerance: return "accelerance";
    }
    return "receptance";
}

FrfKind frf_kind_from_string(std::string_view name) {
    if (name == "receptance") return FrfKind::receptance;
    if (name == "mobility") return FrfKind::mobility;
    if (name == "accelerance") return FrfKind::accelerance;
    throw ValidationError("unknown FRF kind '" + std::string(name) + "'");
}

void SystemModel::validate() const {
    const auto n = M.rows();
    if (n == 0 || M.cols() != n || C.rows() != n || C.cols() != n || K.rows() != n || K.cols() != n)
        throw ValidationError("system model matrices must be square and of equal size");
    auto symmetric = [](const Eigen::MatrixXd& a) {
        return (a - a.transpose()).norm() <= 1e-12 * std::max(1.0, a.norm());
    };
    if (!symmetric(M) || !symmetric(C) || !symmetric(K))
        throw ValidationError("system model matrices must be symmetric");
    if (Eigen::LLT<Eigen::MatrixXd>(M).info() != Eigen::Success)
        throw ValidationError("mass matrix must be positive definite");
}

FrfMatrix FrfMatrix::band(double f_lo, double f_hi) const {
    FrfMatrix out{{}, {}, kind, out_dofs, in_dofs, {}};
    for (std::size_t i = 0; i < freqs_hz.size(); ++i) {
        if (freqs_hz[i] < f_lo || freqs_hz[i] > f_hi) continue;
        out.freqs_hz.push_back(freqs_hz[i]);
        out.values.push_back(values[i]);
        if (!coherence.empty()) out.coherence.push_back(coherence[i]);
    }
    return out;
}

FrfMatrix FrfMatrix::select_inputs(const std::vector<std::size_t>& dofs) const {
    std::vector<Eigen::Index> cols;
    for (std::size_t d : dofs) {
        const auto it = std::find(in_dofs.begin(), in_dofs.end(), d);
        if (it == in_dofs.end()) throw ValidationError("FRF has no input DOF " + std::to_string(d));
        cols.push_back(it - in_dofs.begin());
    }
    FrfMatrix out{freqs_hz, {}, kind, out_dofs, dofs, {}};
    for (std::size_t f = 0; f < values.size(); ++f) {
        out.values.push_back(values[f](Eigen::all, cols));
        if (!coherence.empty()) out.coherence.push_back(coherence[f](Eigen::all, cols));
    }
    return out;
}

std::vector<double> linear_frequencies(double lo_hz, double hi_hz, std::size_t count) {
    if (count < 2 || !(hi_hz > lo_hz)) throw ValidationError("frequency list needs lo < hi and two points");
    std::vector<double> f(count);
    for (std::size_t i = 0; i < count; ++i)
        f[i] = lo_hz + (hi_hz - lo_hz) * static_cast<double>(i) / static_cast<double>(count - 1);
    return f;
}

FrfMatrix direct_frf(const SystemModel& model, const std::vector<double>& freqs_hz) {
    model.validate();
    const auto n = static_cast<Eigen::Index>(model.n());
    FrfMatrix h{freqs_hz, {}, FrfKind::receptance, all_dofs(model.n()), all_dofs(model.n()), {}};
    h.values.reserve(freqs_hz.size());
    const Eigen::MatrixXcd identity = Eigen::MatrixXcd::Identity(n, n);
    for (double f : freqs_hz) {
        const double w = kTwoPi * f;
        Eigen::MatrixXcd dyn = (model.K - w * w * model.M).cast<cplx>();
        dyn += cplx(0.0, w) * model.C.cast<cplx>();
        Eigen::FullPivLU<Eigen::MatrixXcd> lu(dyn);
        if (!lu.isInvertible()) {
            std::ostringstream msg;
            msg << "direct_frf: dynamic stiffness is singular at " << f << " Hz";
            throw NumericalError(msg.str());
        }
        h.values.push_back(lu.solve(identity));
    }
    return h;
}

FrfMatrix estimate_frf(const std::vector<TimeSeries>& inputs, const std::vector<TimeSeries>& outputs,
                       FrfEstimator method, const SpectralOptions& options,
                       const std::vector<std::size_t>& in_dofs, const std::vector<std::size_t>& out_dofs) {
    if (inputs.empty() || outputs.empty()) throw ValidationError("estimate_frf: need inputs and outputs");
    if (method == FrfEstimator::h2 && inputs.size() != 1)
        throw ValidationError("estimate_frf: H2 supports a single input only");
    const std::size_t n = inputs.front().size();
    const double dt = inputs.front().dt();
    const FrfKind kind = kind_for_output(outputs.front().kind());
    for (const auto& s : inputs) {
        if (s.size() != n || s.dt() != dt) throw ValidationError("estimate_frf: record lengths or rates differ");
    }
    for (const auto& s : outputs) {
        if (s.size() != n || s.dt() != dt) throw ValidationError("estimate_frf: record lengths or rates differ");
        if (kind_for_output(s.kind()) != kind) throw ValidationError("estimate_frf: mixed output kinds");
    }
    if (!(options.overlap >= 0.0 && options.overlap < 1.0))
        throw ValidationError("estimate_frf: overlap must lie in [0, 1)");

    std::size_t len = options.block_length;
    if (len == 0) {
        if (!(options.lowest_hz > 0.0)) throw ValidationError("estimate_frf: lowest_hz must be positive");
        len = std::min(n, next_pow2(static_cast<std::size_t>(std::ceil(20.0 / (options.lowest_hz * dt)))));
    }
    if (len < 2 || len > n) throw ValidationError("estimate_frf: block length must lie in [2, record length]");
    const auto step = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                  std::llround(static_cast<double>(len) * (1.0 - options.overlap))));

    const auto n_in = static_cast<Eigen::Index>(inputs.size());
    const auto n_out = static_cast<Eigen::Index>(outputs.size());
    const std::size_t n_bins = len / 2 + 1;
    std::vector<Eigen::MatrixXcd> gff(n_bins, Eigen::MatrixXcd::Zero(n_in, n_in));
    std::vector<Eigen::MatrixXcd> gxf(n_bins, Eigen::MatrixXcd::Zero(n_out, n_in));
    std::vector<Eigen::VectorXd> gxx(n_bins, Eigen::VectorXd::Zero(n_out));

    const auto window = make_window(len, options.window);
    Fft fft(len);
    std::vector<double> block(len);
    std::vector<std::vector<cplx>> fin(inputs.size()), fout(outputs.size());
    for (std::size_t start = 0; start + len <= n; start += step) {
        auto spectrum = [&](const TimeSeries& s) {
            for (std::size_t i = 0; i < len; ++i) block[i] = window[i] * s[start + i];
            return fft.forward_real(block);
        };
        for (std::size_t i = 0; i < inputs.size(); ++i) fin[i] = spectrum(inputs[i]);
        for (std::size_t o = 0; o < outputs.size(); ++o) fout[o] = spectrum(outputs[o]);
        for (std::size_t k = 0; k < n_bins; ++k) {
            for (Eigen::Index a = 0; a < n_in; ++a) {
                const cplx fa = fin[static_cast<std::size_t>(a)][k];
                for (Eigen::Index b = 0; b < n_in; ++b)
                    gff[k](a, b) += fa * std::conj(fin[static_cast<std::size_t>(b)][k]);
                for (Eigen::Index o = 0; o < n_out; ++o)
                    gxf[k](o, a) += fout[static_cast<std::size_t>(o)][k] * std::conj(fa);
            }
            for (Eigen::Index o = 0; o < n_out; ++o) gxx[k][o] += std::norm(fout[static_cast<std::size_t>(o)][k]);
        }
    }

    FrfMatrix h;
    h.kind = kind;
    h.in_dofs = in_dofs.empty() ? all_dofs(inputs.size()) : in_dofs;
    h.out_dofs = out_dofs.empty() ? all_dofs(outputs.size()) : out_dofs;
    if (h.in_dofs.size() != inputs.size() || h.out_dofs.size() != outputs.size())
        throw ValidationError("estimate_frf: DOF labels do not match channel counts");

    double gff_peak = 0.0;
    for (std::size_t k = 1; k < n_bins; ++k) gff_peak = std::max(gff_peak, gff[k].diagonal().real().maxCoeff());
    const double df = 1.0 / (static_cast<double>(len) * dt);
    const bool banded = options.band_lo_hz > 0.0 || options.band_hi_hz > 0.0;
    for (std::size_t k = 1; k < n_bins; ++k) {
        const double f = static_cast<double>(k) * df;
        if (banded && (f < options.band_lo_hz || (options.band_hi_hz > 0.0 && f > options.band_hi_hz))) continue;
        if (!(gff[k].diagonal().real().minCoeff() > 1e-14 * gff_peak)) {
            std::ostringstream msg;
            msg << "estimate_frf: input auto-spectrum vanishes at " << f << " Hz";
            throw NumericalError(msg.str());
        }
        Eigen::MatrixXcd hk(n_out, n_in);
        if (method == FrfEstimator::h1) {
            Eigen::FullPivLU<Eigen::MatrixXcd> lu(gff[k]);
            if (!lu.isInvertible()) {
                std::ostringstream msg;
                msg << "estimate_frf: input cross-spectral matrix is singular at " << f << " Hz";
                throw NumericalError(msg.str());
            }
            // H G_ff = G_xf with G_ff Hermitian, so G_ff H^H = G_xf^H.
            hk = lu.solve(gxf[k].adjoint()).adjoint();
        } else {
            for (Eigen::Index o = 0; o < n_out; ++o) {
                const cplx gfx = std::conj(gxf[k](o, 0));
                if (std::abs(gfx) == 0.0) {
                    std::ostringstream msg;
                    msg << "estimate_frf: cross-spectrum vanishes at " << f << " Hz";
                    throw NumericalError(msg.str());
                }
                hk(o, 0) = gxx[k][o] / gfx;
            }
        }
        Eigen::MatrixXd coh(n_out, n_in);
        for (Eigen::Index o = 0; o < n_out; ++o) {
            for (Eigen::Index i = 0; i < n_in; ++i) {
                const double denom = gff[k](i, i).real() * gxx[k][o];
                coh(o, i) = denom > 0.0 ? std::norm(gxf[k](o, i)) / denom : 0.0;
            }
        }
        h.freqs_hz.push_back(f);
        h.values.push_back(std::move(hk));
        h.coherence.push_back(std::move(coh));
    }
    return h;
}

FrfMatrix reconstruct_frf(const ModalSet& modal, const std::vector<double>& freqs_hz,
                          const std::vector<std::size_t>& out_dofs, const std::vector<std::size_t>& in_dofs) {
    modal.validate();
    for (std::size_t k = 0; k < modal.n_modes(); ++k) {
        if (!(modal.modes[k].zeta > 0.0))
            throw ValidationError("reconstruct_frf: mode " + std::to_string(k) + " needs 0 < zeta < 1");
    }
    FrfMatrix h{freqs_hz, {}, FrfKind::receptance,
                out_dofs.empty() ? all_dofs(modal.n_dof()) : out_dofs,
                in_dofs.empty() ? all_dofs(modal.n_dof()) : in_dofs, {}};
    for (std::size_t d : h.out_dofs)
        if (d >= modal.n_dof()) throw ValidationError("reconstruct_frf: output DOF out of range");
    for (std::size_t d : h.in_dofs)
        if (d >= modal.n_dof()) throw ValidationError("reconstruct_frf: input DOF out of range");

    const auto n_out = static_cast<Eigen::Index>(h.out_dofs.size());
    const auto n_in = static_cast<Eigen::Index>(h.in_dofs.size());
    h.values.reserve(freqs_hz.size());
    for (double f : freqs_hz) {
        const cplx s(0.0, kTwoPi * f);
        Eigen::MatrixXcd hk = Eigen::MatrixXcd::Zero(n_out, n_in);
        for (const Mode& m : modal.modes) {
            const cplx lambda = m.pole();
            const cplx r1 = m.q / (s - lambda);
            const cplx r2 = std::conj(m.q) / (s - std::conj(lambda));
            for (Eigen::Index o = 0; o < n_out; ++o) {
                const cplx po = m.psi[static_cast<Eigen::Index>(h.out_dofs[static_cast<std::size_t>(o)])];
                for (Eigen::Index i = 0; i < n_in; ++i) {
                    const cplx pi = m.psi[static_cast<Eigen::Index>(h.in_dofs[static_cast<std::size_t>(i)])];
                    const cplx pp = po * pi;
                    hk(o, i) += r1 * pp + r2 * std::conj(pp);
                }
            }
        }
        h.values.push_back(std::move(hk));
    }
    return h;
}

FrfMatrix convert_frf(const FrfMatrix& h, FrfKind target) {
    const int steps = kind_order(target) - kind_order(h.kind);
    FrfMatrix out = h;
    out.kind = target;
    if (steps == 0) return out;
    for (std::size_t k = 0; k < h.n_freq(); ++k) {
        const cplx s(0.0, kTwoPi * h.freqs_hz[k]);
        if (steps < 0 && s == 0.0)
            throw ValidationError("convert_frf: cannot divide by i*Omega at 0 Hz");
        const cplx factor = std::pow(s, steps);
        out.values[k] *= factor;
    }
    return out;
}

double reconstruction_error(const FrfMatrix& measured, const FrfMatrix& reconstructed) {
    if (measured.n_freq() != reconstructed.n_freq() || measured.out_dofs != reconstructed.out_dofs ||
        measured.in_dofs != reconstructed.in_dofs)
        throw ValidationError("reconstruction_error: FRFs are on different grids or DOF sets");
    if (measured.kind != reconstructed.kind)
        throw ValidationError("reconstruction_error: FRF kinds differ");
    double e = 0.0;
    for (std::size_t k = 0; k < measured.n_freq(); ++k) {
        const double fa = measured.freqs_hz[k], fb = reconstructed.freqs_hz[k];
        if (std::abs(fa - fb) > 1e-9 * std::max(1.0, std::abs(fa)))
            throw ValidationError("reconstruction_error: frequency grids differ");
        e += (measured.values[k] - reconstructed.values[k]).cwiseAbs2().sum();
    }
    return e;
}

ModalSet fit_modal_scaling(const ModalSet& modal, const std::vector<FrfMatrix>& measured) {
    modal.validate();
    const auto r = static_cast<Eigen::Index>(modal.n_modes());
    std::size_t n_eq = 0;
    for (const auto& h : measured) n_eq += h.n_freq() * h.n_out() * h.n_in();
    if (n_eq == 0) throw ValidationError("fit_modal_scaling: no measured FRF samples");

    Eigen::MatrixXd a(static_cast<Eigen::Index>(2 * n_eq), 2 * r);
    Eigen::VectorXd b(static_cast<Eigen::Index>(2 * n_eq));
    Eigen::Index row = 0;
    for (const auto& raw : measured) {
        const FrfMatrix h = convert_frf(raw, FrfKind::receptance);
        for (std::size_t d : h.out_dofs)
            if (d >= modal.n_dof()) throw ValidationError("fit_modal_scaling: output DOF out of range");
        for (std::size_t d : h.in_dofs)
            if (d >= modal.n_dof()) throw ValidationError("fit_modal_scaling: input DOF out of range");
        for (std::size_t k = 0; k < h.n_freq(); ++k) {
            const cplx s(0.0, kTwoPi * h.freqs_hz[k]);
            for (std::size_t o = 0; o < h.n_out(); ++o) {
                for (std::size_t i = 0; i < h.n_in(); ++i) {
                    for (Eigen::Index m = 0; m < r; ++m) {
                        const Mode& mode = modal.modes[static_cast<std::size_t>(m)];
                        const cplx pp = mode.psi[static_cast<Eigen::Index>(h.out_dofs[o])] *
                                        mode.psi[static_cast<Eigen::Index>(h.in_dofs[i])];
                        const cplx ta = pp / (s - mode.pole());
                        const cplx tb = std::conj(pp) / (s - std::conj(mode.pole()));
                        // Q = x + iy: H = x (ta + tb) + y i (ta - tb).
                        const cplx cx = ta + tb;
                        const cplx cy = cplx(0.0, 1.0) * (ta - tb);
                        a(row, 2 * m) = cx.real();
                        a(row, 2 * m + 1) = cy.real();
                        a(row + 1, 2 * m) = cx.imag();
                        a(row + 1, 2 * m + 1) = cy.imag();
                    }
                    const cplx target = h.values[k](static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i));
                    b[row] = target.real();
                    b[row + 1] = target.imag();
                    row += 2;
                }
            }
        }
    }
    // Column scaling keeps the solve well conditioned across modes.
    Eigen::VectorXd scale = a.colwise().norm().transpose();
    for (Eigen::Index c = 0; c < scale.size(); ++c) {
        if (!(scale[c] > 0.0)) scale[c] = 1.0;
    }
    const Eigen::MatrixXd as = a * scale.cwiseInverse().asDiagonal();
    const Eigen::VectorXd xs = as.colPivHouseholderQr().solve(b);
    const Eigen::VectorXd x = xs.cwiseQuotient(scale);
    if (!x.allFinite()) throw NumericalError("fit_modal_scaling: least-squares solve failed");

    ModalSet out = modal;
    for (Eigen::Index m = 0; m < r; ++m) out.modes[static_cast<std::size_t>(m)].q = {x[2 * m], x[2 * m + 1]};
    return out;
}

}  // namespace wavemodal
