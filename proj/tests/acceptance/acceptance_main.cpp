// End-to-end acceptance checks on the three-DOF bench. Prints one PASS/FAIL
// line per criterion and exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "test_support.hpp"
#include "wavemodal/analytic.hpp"
#include "wavemodal/bench.hpp"
#include "wavemodal/fusion.hpp"
#include "wavemodal/io.hpp"
#include "wavemodal/pipeline.hpp"
#include "wavemodal/timefreq.hpp"

using namespace wavemodal;
using namespace testing_support;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
    std::printf("%s  %-28s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

// Runs a check, turning exceptions into failures.
void criterion(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
    try {
        const auto [ok, detail] = body();
        report(name, ok, detail);
    } catch (const std::exception& e) {
        report(name, false, std::string("error: ") + e.what());
    }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream s;
    s.precision(prec);
    s << v;
    return s.str();
}

PipelineConfig bundled(const fs::path& out, std::vector<std::size_t> drives) {
    auto cfg = load_pipeline_config(fs::path(WAVEMODAL_DATA_DIR) / "bench_config.json");
    cfg.output_dir = out;
    cfg.drive_points = std::move(drives);
    if (std::find(cfg.drive_points.begin(), cfg.drive_points.end(), cfg.rom_input()) == cfg.drive_points.end())
        cfg.rom_input_dof = cfg.drive_points.front();
    return cfg;
}

double stage_seconds(const json& manifest, const std::string& name) {
    double s = 0.0;
    for (const auto& st : manifest.at("stages"))
        if (st.at("name") == name) s += st.at("seconds").get<double>();
    return s;
}

double max_rel_mag_error(const FrfMatrix& test, const FrfMatrix& ref, const SystemModel& model) {
    double worst = 0.0;
    for (std::size_t o = 0; o < ref.n_out(); ++o)
        for (std::size_t i = 0; i < ref.n_in(); ++i) {
            const auto zeros = antiresonances(model.K, model.M, ref.out_dofs[o], ref.in_dofs[i], 0.5, 12.0);
            for (std::size_t f = 0; f < ref.n_freq(); ++f) {
                if (near_any(ref.freqs_hz[f], zeros, 0.02)) continue;
                const auto a = test.values[f](static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i));
                const auto b = ref.values[f](static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i));
                worst = std::max(worst, std::abs(std::abs(a) - std::abs(b)) / std::abs(b));
            }
        }
    return worst;
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "wavemodal_acceptance";
    fs::remove_all(root);
    fs::create_directories(root);

    const BenchConfig bench;
    const auto model = build_three_dof(bench);
    const auto step = 5.0 / 400.0;

    // Drive point at DOF 0 alone.
    json single_manifest;
    double single_seconds = 0.0;
    criterion("bench_frequencies", [&] {
        const auto t0 = std::chrono::steady_clock::now();
        single_manifest = run_pipeline(bundled(root / "drive0", {0}));
        single_seconds = seconds_since(t0);
        const auto modal = modal_set_from_json(read_json(root / "drive0" / run_files::modal(0)));
        double worst = 0.0;
        for (std::size_t k = 0; k < 3; ++k) worst = std::max(worst, std::abs(modal.modes[k].f_hz - kRefFreqHz[k]));
        std::ostringstream d;
        d << "f = " << fmt(modal.modes[0].f_hz) << ", " << fmt(modal.modes[1].f_hz) << ", " << fmt(modal.modes[2].f_hz)
          << " Hz; max |df| " << fmt(worst, 3) << " <= " << step << "; runtime " << fmt(single_seconds, 3) << " s < 30";
        return std::pair{worst <= step && single_seconds < 30.0, d.str()};
    });

    criterion("bench_damping", [&] {
        const auto modal = modal_set_from_json(read_json(root / "drive0" / run_files::modal(0)));
        const double limit[3] = {0.03, 0.08, 0.15};
        bool ok = true;
        std::ostringstream d;
        d << "relative errors";
        for (std::size_t k = 0; k < 3; ++k) {
            const double ref = kRefZetaPct[k] / 100.0;
            const double e = std::abs(modal.modes[k].zeta - ref) / ref;
            ok = ok && e <= limit[k];
            d << " " << fmt(100.0 * e, 3) << "% (<" << 100.0 * limit[k] << "%)";
        }
        return std::pair{ok, d.str()};
    });

    // All three drive points through fusion.
    json full_manifest;
    criterion("bench_mode_shapes", [&] {
        full_manifest = run_pipeline(bundled(root / "full_a", {0, 1, 2}));
        const auto fused = modal_set_from_json(read_json(root / "full_a" / run_files::fused_modal()));
        double dm = 0.0, dp = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            const auto mod = fused.modes[k].moduli();
            const auto ph = fused.modes[k].phases_deg();
            for (Eigen::Index i = 0; i < 3; ++i) {
                dm = std::max(dm, std::abs(mod[i] - kRefModuli[i][k]));
                dp = std::max(dp, std::abs(wrap_degrees(ph[i] - kRefPhaseDeg[i][k])));
            }
        }
        return std::pair{dm <= 0.05 && dp <= 6.0,
                         "max modulus error " + fmt(dm, 3) + " <= 0.05; max phase error " + fmt(dp, 3) + " deg <= 6"};
    });

    criterion("oracle_agreement", [&] {
        const auto exact = exact_modal_oracle(model);
        double df = 0.0, dz = 0.0, dm = 0.0, dp = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            df = std::max(df, std::abs(exact.f_hz[k] - kRefFreqHz[k]));
            dz = std::max(dz, std::abs(100.0 * exact.zeta[k] - kRefZetaPct[k]));
            const Eigen::VectorXcd v = exact.modes.col(static_cast<Eigen::Index>(k));
            for (Eigen::Index i = 0; i < 3; ++i) {
                dm = std::max(dm, std::abs(std::abs(v[i]) - kRefModuli[i][k]));
                dp = std::max(dp, std::abs(wrap_degrees(std::arg(v[i] / v[0]) * 180.0 / kPi - kRefPhaseDeg[i][k])));
            }
        }
        std::ostringstream d;
        d << "df " << fmt(df, 3) << " Hz, dzeta " << fmt(dz, 3) << " pts, dmod " << fmt(dm, 3) << ", dphase "
          << fmt(dp, 3) << " deg";
        return std::pair{df <= 0.005 && dz <= 0.02 && dm <= 0.005 && dp <= 0.5, d.str()};
    });

    criterion("frf_reconstruction", [&] {
        const auto freqs = linear_frequencies(1.5, 5.5, 801);
        const auto direct = direct_frf(model, freqs);
        const auto rec = reconstruct_frf(exact_modal_oracle(model).to_modal_set(), freqs);
        const double e = max_rel_mag_error(rec, direct, model);
        // The valley between the two close modes is checked in every entry,
        // whether or not it falls inside an anti-resonance band.
        double ve = 0.0;
        for (Eigen::Index o = 0; o < 3; ++o)
            for (Eigen::Index i = 0; i < 3; ++i) {
                std::size_t valley = freqs.size();
                for (std::size_t f = 0; f < freqs.size(); ++f)
                    if (freqs[f] > 3.92 && freqs[f] < 4.17 &&
                        (valley == freqs.size() || std::abs(direct.values[f](o, i)) < std::abs(direct.values[valley](o, i))))
                        valley = f;
                const double ref = std::abs(direct.values[valley](o, i));
                ve = std::max(ve, std::abs(std::abs(rec.values[valley](o, i)) - ref) / ref);
            }
        return std::pair{e < 0.02 && ve < 0.02, "max relative magnitude error " + fmt(e, 3) +
                                                    " < 0.02 outside anti-resonance bands; inter-peak valleys " +
                                                    fmt(ve, 3) + " < 0.02"};
    });

    criterion("rom_time_frequency", [&] {
        const auto v = read_json(root / "full_a" / run_files::validation());
        const double e = v.at("rom").at("band_averaged_cwt_error").at("0").get<double>();
        const double secs = stage_seconds(full_manifest, "rom") + stage_seconds(full_manifest, "validate");
        return std::pair{e < 0.10 && secs < 60.0,
                         "oscillator 1 band-averaged CWT error " + fmt(e, 3) + " < 0.10; " + fmt(secs, 3) + " s < 60"};
    });

    criterion("transform_properties", [&] {
        const double dt = 0.02;
        const std::size_t n = 3000;
        const auto grid = FrequencyGrid::linear(1.0, 6.0, 400);
        const WaveletSpec spec(50.0);
        const auto [first, last] = trusted_range(n, 0.1);

        // Round trip on random multi-tone signals.
        std::mt19937 rng(21);
        std::uniform_real_distribution<double> uf(1.5, 5.0), ua(0.2, 1.0), up(0.0, 2.0 * kPi);
        double round_trip = 0.0;
        for (int trial = 0; trial < 3; ++trial) {
            std::vector<double> x(n, 0.0);
            for (int k = 0; k < 5; ++k) x = add(x, tone(uf(rng), ua(rng), up(rng), n, dt));
            const auto back = icwt(cwt(TimeSeries(x, dt), grid, spec));
            round_trip = std::max(round_trip, relative_l2(back.values(), x, first, last));
        }

        // Linearity of the forward transform and partition of a region split.
        const auto a = tone(2.3, 1.0, 0.3, n, dt), b = damped_cosine(4.0, 0.01, 0.7, 1.0, n, dt);
        std::vector<double> ab(n);
        for (std::size_t i = 0; i < n; ++i) ab[i] = 2.0 * a[i] - 0.5 * b[i];
        const auto sa = cwt(TimeSeries(a, dt), grid, spec), sb = cwt(TimeSeries(b, dt), grid, spec);
        const auto sab = cwt(TimeSeries(ab, dt), grid, spec);
        const double lin = (sab.values - (2.0 * sa.values - 0.5 * sb.values)).norm() / sab.values.norm();

        const std::vector<HarmonicRegion> split{{1, Polyline::constant(0.5), Polyline::constant(3.1)},
                                                {2, Polyline::constant(3.1), Polyline::constant(7.0)}};
        const auto parts = decompose_regions(sab, split);
        const auto whole = icwt(sab);
        std::vector<double> sum(n);
        for (std::size_t i = 0; i < n; ++i) sum[i] = parts[0][i] + parts[1][i];
        const double part = relative_l2(sum, whole.values(), 0, n);

        // Envelope slope of a damped cosine gives zeta * omega.
        const double zeta = 0.012, f = 3.0, zw = zeta * 2.0 * kPi * f;
        const auto ep = envelope_and_phase(analytic_signal(TimeSeries(damped_cosine(f, zeta, 1.0, 0.2, n, dt), dt)));
        // Fit where the envelope is still above 5% of its value at the guard;
        // further down the periodic wrap of the FFT dominates the log.
        std::vector<double> t, la;
        for (std::size_t i = first; i < last && ep.amplitude[i] >= 0.05 * ep.amplitude[first]; ++i) {
            t.push_back(static_cast<double>(i) * dt);
            la.push_back(std::log(ep.amplitude[i]));
        }
        const double slope_err = std::abs(-fit_line(t, la).slope - zw) / zw;

        std::ostringstream d;
        d << "round trip " << fmt(round_trip, 3) << " < 0.02; linearity " << fmt(lin, 3) << " < 1e-10; partition "
          << fmt(part, 3) << " < 1e-8; slope error " << fmt(100.0 * slope_err, 3) << "% < 1%";
        return std::pair{round_trip < 0.02 && lin < 1e-10 && part < 1e-8 && slope_err < 0.01, d.str()};
    });

    criterion("fusion_optimality", [&] {
        const fs::path dir = root / "full_a";
        const auto cfg = load_run_config(dir);
        const auto rep = read_json(dir / run_files::fusion_report());
        std::vector<DriveEstimate> est;
        std::vector<FrfMatrix> measured;
        for (auto d : cfg.drive_points) {
            est.push_back({d, modal_set_from_json(read_json(dir / run_files::modal(d))),
                           read_frf_csv(dir / run_files::measured_frf(d))});
            measured.push_back(convert_frf(est.back().measured, FrfKind::receptance)
                                   .band(cfg.fusion.band_lo_hz, cfg.fusion.band_hi_hz));
        }
        // Vertex objectives evaluated directly: scaling fitted to every
        // measured column, then summed reconstruction errors.
        double best_vertex = std::numeric_limits<double>::infinity();
        for (const auto& e : est) {
            const auto fitted = fit_modal_scaling(e.modal, measured);
            double sum = 0.0;
            for (const auto& m : measured)
                sum += reconstruction_error(m, reconstruct_frf(fitted, m.freqs_hz, m.out_dofs, m.in_dofs));
            best_vertex = std::min(best_vertex, sum);
        }
        const auto& w = rep.at("weights");
        Eigen::MatrixXd W(static_cast<Eigen::Index>(w.size()), static_cast<Eigen::Index>(w[0].size()));
        double simplex = 0.0;
        for (Eigen::Index j = 0; j < W.rows(); ++j) {
            for (Eigen::Index k = 0; k < W.cols(); ++k) {
                W(j, k) = w[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)].get<double>();
                if (W(j, k) < 0.0) simplex = std::max(simplex, -W(j, k));
            }
            simplex = std::max(simplex, std::abs(W.row(j).sum() - 1.0));
        }
        const double e_final = fusion_objective(est, W, cfg.fusion);
        const double recorded = rep.at("E_final").get<double>();
        std::ostringstream d;
        d << "E* " << fmt(e_final, 6) << " <= best vertex " << fmt(best_vertex, 6) << "; simplex defect " << simplex
          << " <= 1e-12";
        return std::pair{e_final <= best_vertex && std::abs(e_final - recorded) <= 1e-9 * recorded && simplex <= 1e-12,
                         d.str()};
    });

    criterion("determinism", [&] {
        run_pipeline(bundled(root / "full_b", {0, 1, 2}));
        const auto a = read_text(root / "full_a" / run_files::fused_modal());
        const auto b = read_text(root / "full_b" / run_files::fused_modal());
        bool drives = true;
        for (std::size_t d = 0; d < 3; ++d)
            drives = drives && read_text(root / "full_a" / run_files::modal(d)) == read_text(root / "full_b" / run_files::modal(d));
        return std::pair{a == b && drives, a == b && drives ? "fused and per-drive modal JSON byte-identical"
                                                            : "modal JSON differs between runs"};
    });

    std::printf("%s: %d failing criteria\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
    return failures == 0 ? 0 : 1;
}
