#include "wavemodal/modal_set.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "wavemodal/digest.hpp"
#include "wavemodal/error.hpp"

namespace wavemodal {

using nlohmann::json;

double Mode::omega() const { return 2.0 * std::numbers::pi * f_hz; }

cplx Mode::pole() const { return stable_pole(f_hz, zeta); }

Eigen::VectorXd Mode::moduli() const { return psi.cwiseAbs(); }

Eigen::VectorXd Mode::phases_deg() const {
    Eigen::VectorXd out(psi.size());
    for (Eigen::Index i = 0; i < psi.size(); ++i)
        out[i] = wrap_degrees(std::arg(psi[i]) * 180.0 / std::numbers::pi);
    return out;
}

std::size_t ModalSet::n_dof() const {
    return modes.empty() ? 0 : static_cast<std::size_t>(modes.front().psi.size());
}

void ModalSet::validate() const {
    if (modes.empty()) throw ValidationError("modal set has no modes");
    const std::size_t n = n_dof();
    if (n == 0) throw ValidationError("modal set mode vectors are empty");
    if (reference_dof >= n) throw ValidationError("reference DOF out of range");
    for (std::size_t k = 0; k < modes.size(); ++k) {
        const Mode& m = modes[k];
        const std::string tag = "mode " + std::to_string(k) + ": ";
        if (static_cast<std::size_t>(m.psi.size()) != n)
            throw ValidationError(tag + "mode vector length differs from other modes");
        if (!(m.f_hz > 0.0) || !std::isfinite(m.f_hz))
            throw ValidationError(tag + "frequency must be positive and finite");
        if (!(m.zeta >= 0.0 && m.zeta < 1.0))
            throw ValidationError(tag + "damping ratio must lie in [0, 1)");
        if (!m.psi.allFinite() || !std::isfinite(m.q.real()) || !std::isfinite(m.q.imag()))
            throw ValidationError(tag + "non-finite mode vector or scaling");
    }
}

cplx stable_pole(double f_hz, double zeta) {
    const double w = 2.0 * std::numbers::pi * f_hz;
    return {-zeta * w, w * std::sqrt(1.0 - zeta * zeta)};
}

cplx default_scaling(double f_hz, double zeta) {
    const double wd = 2.0 * std::numbers::pi * f_hz * std::sqrt(1.0 - zeta * zeta);
    return 1.0 / cplx(0.0, 2.0 * wd);
}

Eigen::VectorXcd normalize_mode_vector(const Eigen::VectorXcd& psi, std::size_t reference_dof) {
    if (reference_dof >= static_cast<std::size_t>(psi.size()))
        throw ValidationError("reference DOF out of range");
    const double norm = psi.norm();
    if (!(norm > 0.0)) throw ValidationError("cannot normalize an all-zero mode vector");
    Eigen::VectorXcd out = psi / norm;
    const cplx ref = out[static_cast<Eigen::Index>(reference_dof)];
    if (std::abs(ref) > 0.0) {
        out *= std::conj(ref) / std::abs(ref);
        // Exactly real, not real up to rounding.
        out[static_cast<Eigen::Index>(reference_dof)] = std::abs(out[static_cast<Eigen::Index>(reference_dof)]);
    }
    return out;
}

double wrap_degrees(double deg) {
    double w = std::fmod(deg, 360.0);
    if (w <= -180.0) w += 360.0;
    if (w > 180.0) w -= 360.0;
    return w;
}

ModalSet assemble_modes(const std::vector<double>& f_hz, const std::vector<double>& zeta,
                        const Eigen::MatrixXd& moduli, const Eigen::MatrixXd& phases_deg,
                        std::size_t reference_dof) {
    const auto n_modes = static_cast<Eigen::Index>(f_hz.size());
    if (static_cast<Eigen::Index>(zeta.size()) != n_modes || moduli.cols() != n_modes ||
        phases_deg.cols() != n_modes || moduli.rows() != phases_deg.rows()) {
        std::ostringstream msg;
        msg << "assemble_modes: dimension mismatch (" << f_hz.size() << " frequencies, "
            << zeta.size() << " damping ratios, moduli " << moduli.rows() << "x" << moduli.cols()
            << ", phases " << phases_deg.rows() << "x" << phases_deg.cols() << ")";
        throw ValidationError(msg.str());
    }
    if ((moduli.array() < 0.0).any()) throw ValidationError("assemble_modes: negative modulus");
    ModalSet set;
    set.reference_dof = reference_dof;
    for (Eigen::Index k = 0; k < n_modes; ++k) {
        Eigen::VectorXcd psi(moduli.rows());
        for (Eigen::Index i = 0; i < moduli.rows(); ++i)
            psi[i] = std::polar(moduli(i, k), phases_deg(i, k) * std::numbers::pi / 180.0);
        Mode m;
        m.f_hz = f_hz[static_cast<std::size_t>(k)];
        m.zeta = zeta[static_cast<std::size_t>(k)];
        m.psi = normalize_mode_vector(psi, reference_dof);
        m.q = default_scaling(m.f_hz, m.zeta);
        set.modes.push_back(std::move(m));
    }
    set.validate();
    return set;
}

json to_json(const ModalSet& set) {
    json modes = json::array();
    for (const Mode& m : set.modes) {
        json psi = json::array();
        for (Eigen::Index i = 0; i < m.psi.size(); ++i)
            psi.push_back({{"re", m.psi[i].real()}, {"im", m.psi[i].imag()}});
        modes.push_back({{"f_hz", m.f_hz},
                         {"zeta", m.zeta},
                         {"psi", std::move(psi)},
                         {"q", {{"re", m.q.real()}, {"im", m.q.imag()}}}});
    }
    return {{"modes", std::move(modes)},
            {"reference_dof", set.reference_dof},
            {"provenance", set.provenance}};
}

ModalSet modal_set_from_json(const json& j) {
    try {
        ModalSet set;
        set.reference_dof = j.at("reference_dof").get<std::size_t>();
        if (j.contains("provenance")) set.provenance = j.at("provenance");
        for (const auto& jm : j.at("modes")) {
            Mode m;
            m.f_hz = jm.at("f_hz").get<double>();
            m.zeta = jm.at("zeta").get<double>();
            const auto& jp = jm.at("psi");
            m.psi.resize(static_cast<Eigen::Index>(jp.size()));
            for (std::size_t i = 0; i < jp.size(); ++i)
                m.psi[static_cast<Eigen::Index>(i)] = {jp[i].at("re").get<double>(),
                                                       jp[i].at("im").get<double>()};
            if (jm.contains("q")) {
                m.q = {jm.at("q").at("re").get<double>(), jm.at("q").at("im").get<double>()};
            } else {
                m.q = default_scaling(m.f_hz, m.zeta);
            }
            set.modes.push_back(std::move(m));
        }
        set.validate();
        return set;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed modal set JSON: ") + e.what());
    }
}

ModalSet load_tabulated_modes(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open modal table " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError("modal table " + path.string() + ": " + e.what());
    }
    try {
        const auto f = j.at("f_hz").get<std::vector<double>>();
        const auto zeta = j.at("zeta").get<std::vector<double>>();
        const auto mod_rows = j.at("moduli").get<std::vector<std::vector<double>>>();
        const auto ph_rows = j.at("phase_deg").get<std::vector<std::vector<double>>>();
        const auto n_dof = static_cast<Eigen::Index>(mod_rows.size());
        const auto n_modes = static_cast<Eigen::Index>(f.size());
        if (static_cast<Eigen::Index>(ph_rows.size()) != n_dof)
            throw ValidationError("modal table: moduli and phase tables differ in row count");
        Eigen::MatrixXd moduli(n_dof, n_modes), phases(n_dof, n_modes);
        for (Eigen::Index i = 0; i < n_dof; ++i) {
            const auto& mr = mod_rows[static_cast<std::size_t>(i)];
            const auto& pr = ph_rows[static_cast<std::size_t>(i)];
            if (static_cast<Eigen::Index>(mr.size()) != n_modes ||
                static_cast<Eigen::Index>(pr.size()) != n_modes)
                throw ValidationError("modal table: row " + std::to_string(i) + " has the wrong length");
            for (Eigen::Index k = 0; k < n_modes; ++k) {
                moduli(i, k) = mr[static_cast<std::size_t>(k)];
                phases(i, k) = pr[static_cast<std::size_t>(k)];
            }
        }
        ModalSet set = assemble_modes(f, zeta, moduli, phases, j.value("reference_dof", std::size_t{0}));
        std::vector<double> norms;
        for (Eigen::Index k = 0; k < n_modes; ++k) norms.push_back(moduli.col(k).norm());
        set.provenance = {{"source", path.filename().string()},
                          {"moduli_as_printed", mod_rows},
                          {"printed_column_norms", norms},
                          {"note", "moduli columns renormalized to unit length"}};
        if (j.contains("dof_labels")) set.provenance["dof_labels"] = j.at("dof_labels");
        return set;
    } catch (const json::exception& e) {
        throw ValidationError("modal table " + path.string() + ": " + e.what());
    }
}

std::string content_hash(const ModalSet& set) { return sha256_hex(to_json(set).dump()); }

}  // namespace wavemodal
