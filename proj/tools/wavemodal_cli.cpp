#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wavemodal/api.hpp"
#include "wavemodal/bench.hpp"
#include "wavemodal/digest.hpp"
#include "wavemodal/error.hpp"
#include "wavemodal/frf.hpp"
#include "wavemodal/fusion.hpp"
#include "wavemodal/io.hpp"
#include "wavemodal/modal_id.hpp"
#include "wavemodal/pipeline.hpp"
#include "wavemodal/rom.hpp"
#include "wavemodal/timefreq.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wavemodal;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

std::vector<Spectrogram> load_spectra(const std::vector<std::string>& sidecars) {
    std::vector<Spectrogram> out;
    for (const auto& p : sidecars) out.push_back(read_spectrogram(p));
    return out;
}

// Response columns in DOF order: labels dof0..dofN when present, otherwise
// column order. The force column is returned separately.
std::pair<std::vector<TimeSeries>, TimeSeries> split_signals(const std::vector<TimeSeries>& cols) {
    std::vector<TimeSeries> responses;
    const TimeSeries* force = nullptr;
    for (const auto& c : cols) {
        if (c.kind() == SignalKind::force) {
            if (force) throw ValidationError("more than one force column");
            force = &c;
        } else {
            responses.push_back(c);
        }
    }
    if (!force) throw ValidationError("no force column (kind tag 'force')");
    bool labelled = true;
    for (std::size_t i = 0; i < responses.size(); ++i) {
        labelled = labelled && std::any_of(responses.begin(), responses.end(), [&](const TimeSeries& s) {
                       return s.label() == "dof" + std::to_string(i);
                   });
    }
    if (labelled) {
        std::sort(responses.begin(), responses.end(), [](const TimeSeries& a, const TimeSeries& b) {
            return std::stoul(a.label().substr(3)) < std::stoul(b.label().substr(3));
        });
    }
    return {responses, *force};
}

std::vector<std::size_t> iota_dofs(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

int verify_run(const fs::path& dir) {
    const json manifest = read_json(dir / run_files::manifest());
    int bad = 0;
    for (const auto& [path, hash] : manifest.at("files").items()) {
        const fs::path p = dir / path;
        if (!fs::exists(p)) {
            std::cout << "missing  " << path << "\n";
            ++bad;
        } else if (sha256_file(p) != hash.get<std::string>()) {
            std::cout << "changed  " << path << "\n";
            ++bad;
        }
    }
    std::cout << manifest.at("files").size() - static_cast<std::size_t>(bad) << " of " << manifest.at("files").size()
              << " manifest files verified\n";
    if (fs::exists(dir / run_files::validation())) {
        const json v = read_json(dir / run_files::validation());
        std::cout << "reconstruction error E = " << v["reconstruction_error"]["total"].get<double>() << "\n";
        for (const auto& [dof, e] : v["rom"]["band_averaged_cwt_error"].items())
            std::cout << "ROM band-averaged CWT error, DOF " << dof << ": " << e.get<double>() << "\n";
        if (v.contains("oracle")) {
            const auto& f = v["oracle"]["fused"];
            std::cout << "fused vs exact modes: max modulus error " << f["max_modulus_error"].get<double>()
                      << ", max phase error " << f["max_phase_error_deg"].get<double>() << " deg\n";
        }
    }
    if (bad) throw ValidationError(std::to_string(bad) + " manifest file(s) missing or modified");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wavelet-based modal identification"};
    app.require_subcommand(1);
    app.set_version_flag("--version", tool_version());

    // simulate-bench
    auto* sim = app.add_subcommand("simulate-bench", "Simulate the three-oscillator bench under a half-sine pulse");
    std::string sim_config, sim_out;
    std::size_t sim_drive = 0;
    bool sim_displacement = false;
    sim->add_option("--config", sim_config, "Bench parameters (JSON); defaults when omitted");
    sim->add_option("--drive", sim_drive, "Driven DOF");
    sim->add_option("-o,--out", sim_out, "Output CSV")->required();
    sim->add_flag("--displacement", sim_displacement, "Write displacements instead of velocities");

    // cwt
    auto* cw = app.add_subcommand("cwt", "Morlet CWT of each response channel of a CSV");
    std::string cw_input, cw_out_dir;
    std::vector<std::string> cw_channels;
    std::vector<double> cw_band{1.0, 6.0};
    std::size_t cw_grid = 400;
    double cw_wc = WaveletSpec::kDefaultCenter;
    cw->add_option("-i,--input", cw_input, "Time-series CSV")->required();
    cw->add_option("-o,--out-dir", cw_out_dir, "Directory for <label>.wspc/.json")->required();
    cw->add_option("--channel", cw_channels, "Channel labels (default: every non-force column)");
    cw->add_option("--band", cw_band, "Frequency band in Hz")->expected(2);
    cw->add_option("--grid", cw_grid, "Number of linear grid points");
    cw->add_option("--omega-c", cw_wc, "Morlet centre frequency");

    // suggest-regions
    auto* sr = app.add_subcommand("suggest-regions", "Constant regions around the strongest spectral peaks");
    std::vector<std::string> sr_specs;
    std::size_t sr_modes = 3;
    double sr_prominence = 0.1;
    std::string sr_out;
    sr->add_option("-s,--spectrogram", sr_specs, "Spectrogram sidecar(s)")->required();
    sr->add_option("-n,--modes", sr_modes, "Number of regions");
    sr->add_option("--min-prominence", sr_prominence, "Minimum peak prominence relative to the maximum");
    sr->add_option("-o,--out", sr_out, "Regions JSON")->required();

    // decompose
    auto* dc = app.add_subcommand("decompose", "Split spectrograms into per-region components");
    std::vector<std::string> dc_specs;
    std::string dc_regions, dc_out;
    dc->add_option("-s,--spectrogram", dc_specs, "Spectrogram sidecar(s)")->required();
    dc->add_option("-r,--regions", dc_regions, "Regions JSON")->required();
    dc->add_option("-o,--out", dc_out, "Components CSV")->required();

    // identify
    auto* id = app.add_subcommand("identify", "Modal parameters from one drive point's spectrograms");
    std::vector<std::string> id_specs;
    std::string id_regions, id_out, id_diag;
    std::size_t id_drive = 0, id_ref = 0;
    id->add_option("-s,--spectrogram", id_specs, "Spectrogram sidecars in DOF order")->required();
    id->add_option("-r,--regions", id_regions, "Regions JSON")->required();
    id->add_option("--drive", id_drive, "Driven DOF");
    id->add_option("--reference", id_ref, "Reference DOF for phases");
    id->add_option("-o,--out", id_out, "ModalSet JSON")->required();
    id->add_option("--diagnostics", id_diag, "Diagnostics JSON");

    // frf
    auto* fr = app.add_subcommand("frf", "Measured (H1/H2) or modal-synthesis FRFs");
    std::string fr_input, fr_modal, fr_out, fr_est = "h1", fr_window = "rectangular";
    std::size_t fr_drive = 0, fr_block = 0, fr_points = 401;
    std::vector<double> fr_band{1.0, 6.0};
    std::vector<std::size_t> fr_inputs;
    auto* fr_in_opt = fr->add_option("-i,--input", fr_input, "CSV with one force and the responses");
    auto* fr_modal_opt = fr->add_option("-m,--modal", fr_modal, "ModalSet JSON to synthesize from");
    fr_in_opt->excludes(fr_modal_opt);
    fr->add_option("--drive", fr_drive, "Driven DOF of the measurement");
    fr->add_option("--estimator", fr_est, "h1 or h2")->check(CLI::IsMember({"h1", "h2"}));
    fr->add_option("--window", fr_window, "rectangular or hann")->check(CLI::IsMember({"rectangular", "hann"}));
    fr->add_option("--block", fr_block, "Block length in samples (0: whole record)");
    fr->add_option("--band", fr_band, "Band in Hz")->expected(2);
    fr->add_option("--points", fr_points, "Frequency points for synthesis");
    fr->add_option("--inputs", fr_inputs, "Input DOFs for synthesis (default: all)");
    fr->add_option("-o,--out", fr_out, "FRF CSV")->required();

    // fuse
    auto* fu = app.add_subcommand("fuse", "Combine drive-point estimates by minimizing FRF reconstruction error");
    std::vector<std::string> fu_est;
    std::string fu_out, fu_report;
    std::vector<double> fu_band{1.5, 5.5};
    fu->add_option("-e,--estimate", fu_est, "drive:modal.json:frf.csv (repeat per drive point)")->required();
    fu->add_option("--band", fu_band, "Objective band in Hz")->expected(2);
    fu->add_option("-o,--out", fu_out, "Fused ModalSet JSON")->required();
    fu->add_option("--report", fu_report, "Fusion report JSON");

    // rom
    auto* ro = app.add_subcommand("rom", "Modal state-space model and optional simulation");
    std::string ro_modal, ro_out, ro_kind = "velocity", ro_force, ro_response;
    std::vector<std::size_t> ro_inputs{0}, ro_outputs;
    double ro_rate = 20000.0;
    ro->add_option("-m,--modal", ro_modal, "ModalSet JSON")->required();
    ro->add_option("--inputs", ro_inputs, "Input DOFs");
    ro->add_option("--outputs", ro_outputs, "Output DOFs (default: all)");
    ro->add_option("--kind", ro_kind, "displacement or velocity")->check(CLI::IsMember({"displacement", "velocity"}));
    ro->add_option("-o,--out", ro_out, "ROM JSON")->required();
    ro->add_option("--force", ro_force, "Force CSV to simulate (one force column per input)");
    ro->add_option("--rate", ro_rate, "Simulation rate in Hz; the force is held between its samples");
    ro->add_option("--response", ro_response, "Simulated response CSV at the force's rate");

    // validate
    auto* va = app.add_subcommand("validate", "Check a run directory against its manifest and report validation");
    std::string va_dir;
    va->add_option("-d,--run-dir", va_dir, "Run directory")->required();

    // serve
    auto* se = app.add_subcommand("serve", "HTTP JSON API for a run directory");
    std::string se_dir, se_host = "127.0.0.1";
    int se_port = 8080;
    se->add_option("-d,--run-dir", se_dir, "Run directory")->required();
    se->add_option("--host", se_host, "Bind address");
    se->add_option("-p,--port", se_port, "Port");

    // run
    auto* ru = app.add_subcommand("run", "Full identification protocol from a pipeline config");
    std::string ru_config, ru_out;
    ru->add_option("-c,--config", ru_config, "Pipeline config JSON")->required();
    ru->add_option("-o,--out-dir", ru_out, "Override the config's output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (*sim) {
            BenchConfig cfg = sim_config.empty() ? BenchConfig{} : load_bench_config(sim_config);
            cfg.drive_dof = sim_drive;
            const auto r = simulate_full(build_three_dof(cfg), cfg);
            auto cols = sim_displacement ? r.displacement : r.velocity;
            cols.push_back(r.force);
            write_time_series_csv(sim_out, cols);
        } else if (*cw) {
            const auto cols = read_time_series_csv(cw_input);
            const auto grid = FrequencyGrid::linear(cw_band[0], cw_band[1], cw_grid);
            const WaveletSpec spec(cw_wc);
            std::size_t written = 0;
            for (const auto& c : cols) {
                const bool wanted = cw_channels.empty()
                                        ? c.kind() != SignalKind::force
                                        : std::find(cw_channels.begin(), cw_channels.end(), c.label()) != cw_channels.end();
                if (!wanted) continue;
                if (cw_band[1] >= c.nyquist()) throw ValidationError("band upper edge is at or above the Nyquist frequency");
                write_spectrogram(fs::path(cw_out_dir) / c.label(), cwt(c, grid, spec),
                                  {{"label", c.label()}, {"kind", to_string(c.kind())}});
                ++written;
            }
            if (written == 0) throw ValidationError("no matching channels");
        } else if (*sr) {
            const auto regions = suggest_regions(load_spectra(sr_specs), sr_modes, sr_prominence);
            write_json(sr_out, regions_to_json(regions));
        } else if (*dc) {
            const auto spectra = load_spectra(dc_specs);
            const auto regions = regions_from_json(read_json(dc_regions));
            std::vector<TimeSeries> out;
            for (std::size_t i = 0; i < spectra.size(); ++i) {
                const json side = read_json(dc_specs[i]);
                const std::string label = side.value("label", "ch" + std::to_string(i));
                const auto kind = signal_kind_from_string(side.value("kind", "velocity"));
                for (auto& c : decompose_regions(spectra[i], regions, label, kind)) out.push_back(std::move(c));
            }
            write_time_series_csv(dc_out, out);
        } else if (*id) {
            const auto spectra = load_spectra(id_specs);
            const auto regions = regions_from_json(read_json(id_regions));
            const auto res = identify_modes(spectra, regions, id_drive, id_ref);
            write_json(id_out, to_json(res.modal));
            if (!id_diag.empty()) write_json(id_diag, res.diagnostics);
        } else if (*fr) {
            if (!fr_input.empty()) {
                const auto [responses, force] = split_signals(read_time_series_csv(fr_input));
                SpectralOptions so;
                so.block_length = fr_block == 0 ? force.size() : fr_block;
                so.window = fr_window == "hann" ? SpectralWindow::hann : SpectralWindow::rectangular;
                so.lowest_hz = fr_band[0];
                so.band_lo_hz = fr_band[0];
                so.band_hi_hz = fr_band[1];
                const auto h = estimate_frf({force}, responses, fr_est == "h2" ? FrfEstimator::h2 : FrfEstimator::h1,
                                            so, {fr_drive}, iota_dofs(responses.size()));
                write_frf_csv(fr_out, h);
            } else if (!fr_modal.empty()) {
                const auto modal = modal_set_from_json(read_json(fr_modal));
                const auto ins = fr_inputs.empty() ? iota_dofs(modal.n_dof()) : fr_inputs;
                write_frf_csv(fr_out, reconstruct_frf(modal, linear_frequencies(fr_band[0], fr_band[1], fr_points),
                                                      iota_dofs(modal.n_dof()), ins));
            } else {
                throw ValidationError("frf needs --input or --modal");
            }
        } else if (*fu) {
            std::vector<DriveEstimate> est;
            for (const auto& spec : fu_est) {
                const auto a = spec.find(':');
                const auto b = spec.find(':', a == std::string::npos ? a : a + 1);
                if (a == std::string::npos || b == std::string::npos)
                    throw ValidationError("estimate '" + spec + "' is not drive:modal.json:frf.csv");
                const std::size_t drive = std::stoul(spec.substr(0, a));
                est.push_back({drive, modal_set_from_json(read_json(spec.substr(a + 1, b - a - 1))),
                               read_frf_csv(spec.substr(b + 1))});
            }
            FusionOptions opt;
            opt.band_lo_hz = fu_band[0];
            opt.band_hi_hz = fu_band[1];
            const auto res = fuse_mode_estimates(std::move(est), opt);
            write_json(fu_out, to_json(res.modal));
            if (!fu_report.empty()) write_json(fu_report, res.report());
        } else if (*ro) {
            const auto modal = modal_set_from_json(read_json(ro_modal));
            const auto outs = ro_outputs.empty() ? iota_dofs(modal.n_dof()) : ro_outputs;
            const auto rom = build_rom(modal, ro_inputs, outs,
                                       ro_kind == "velocity" ? RomOutput::velocity : RomOutput::displacement);
            write_json(ro_out, to_json(rom));
            if (!ro_force.empty()) {
                if (ro_response.empty()) throw ValidationError("--force needs --response");
                std::vector<TimeSeries> forces;
                for (const auto& c : read_time_series_csv(ro_force)) {
                    if (c.kind() == SignalKind::force) forces.push_back(c);
                }
                if (forces.size() != ro_inputs.size())
                    throw ValidationError("need one force column per ROM input");
                const double dt = forces.front().dt();
                const auto step = static_cast<std::size_t>(std::ceil(ro_rate * dt));
                std::vector<TimeSeries> fine;
                for (const auto& f : forces) {
                    std::vector<double> v;
                    for (double x : f.values()) v.insert(v.end(), step, x);
                    fine.emplace_back(std::move(v), dt / static_cast<double>(step), f.label(), SignalKind::force);
                }
                const auto sim = simulate_rom(rom, fine, fine.front().dt());
                std::vector<TimeSeries> out;
                for (const auto& y : sim.outputs) {
                    std::vector<double> v;
                    for (std::size_t i = 0; i < y.size(); i += step) v.push_back(y[i]);
                    out.emplace_back(std::move(v), dt, y.label(), y.kind());
                }
                write_time_series_csv(ro_response, out);
            }
        } else if (*va) {
            return verify_run(va_dir);
        } else if (*se) {
            std::cerr << "serving " << se_dir << " on http://" << se_host << ":" << se_port << "/api/v1\n";
            serve_api(se_dir, se_host, se_port);
        } else if (*ru) {
            auto cfg = load_pipeline_config(ru_config);
            if (!ru_out.empty()) cfg.output_dir = fs::absolute(ru_out);
            const json manifest = run_pipeline(cfg);
            double total = 0.0;
            for (const auto& s : manifest["stages"]) total += s["seconds"].get<double>();
            std::cout << "status: " << manifest["status"].get<std::string>() << "\n"
                      << "stages: " << manifest["stages"].size() << ", " << total << " s\n"
                      << "manifest: " << (cfg.output_dir / run_files::manifest()).string() << "\n";
            const auto fused = cfg.output_dir / run_files::fused_modal();
            if (fs::exists(fused))
                std::cout << "modal set: " << fused.string() << " ("
                          << content_hash(modal_set_from_json(read_json(fused))) << ")\n";
        }
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        for (const auto& a : e.artifacts()) std::cerr << "  artifact: " << a << "\n";
        return e.exit_code();
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
