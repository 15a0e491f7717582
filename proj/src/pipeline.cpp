#include "wavemodal/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "wavemodal/analytic.hpp"
#include "wavemodal/digest.hpp"
#include "wavemodal/error.hpp"
#include "wavemodal/io.hpp"

namespace wavemodal {

namespace fs = std::filesystem;
using nlohmann::json;

std::string tool_version() { return WAVEMODAL_VERSION; }

namespace run_files {
std::string config() { return "config.json"; }
std::string manifest() { return "manifest.json"; }
std::string bench_config() { return "bench_config.json"; }
std::string raw(std::size_t d) { return "raw/drive" + std::to_string(d) + ".csv"; }
std::string signals(std::size_t d) { return "signals/drive" + std::to_string(d) + ".csv"; }
std::string spectrogram_stem(std::size_t d, std::size_t dof) {
    return "spectrograms/drive" + std::to_string(d) + "_dof" + std::to_string(dof);
}
std::string regions(std::size_t d) { return "regions/drive" + std::to_string(d) + ".json"; }
std::string components(std::size_t d) { return "components/drive" + std::to_string(d) + ".csv"; }
std::string modal(std::size_t d) { return "modal/drive" + std::to_string(d) + ".json"; }
std::string diagnostics(std::size_t d) { return "modal/drive" + std::to_string(d) + "_diagnostics.json"; }
std::string measured_frf(std::size_t d) { return "frf/measured_drive" + std::to_string(d) + ".csv"; }
std::string fused_modal() { return "modal/fused.json"; }
std::string fusion_report() { return "modal/fusion_report.json"; }
std::string reconstructed_frf() { return "frf/reconstructed.csv"; }
std::string rom() { return "rom/rom.json"; }
std::string rom_response() { return "rom/response.csv"; }
std::string validation() { return "validation.json"; }
}  // namespace run_files

StageError::StageError(std::string stage, std::vector<std::string> artifacts, const std::string& what, int exit_code)
    : std::runtime_error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)),
      artifacts_(std::move(artifacts)), exit_code_(exit_code) {}

namespace {

const std::vector<std::string> kStageOrder = {"simulate", "ingest", "cwt", "regions", "identify",
                                              "frf", "fuse", "reconstruct", "rom", "validate"};

std::string region_source_name(RegionSource s) {
    switch (s) {
        case RegionSource::automatic: return "auto";
        case RegionSource::file: return "file";
        case RegionSource::interactive: return "interactive";
    }
    return "auto";
}

void require_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + ": expected an object");
    for (const auto& [k, v] : j.items()) {
        if (!allowed.count(k)) throw ValidationError(where + ": unknown key '" + k + "'");
    }
}

fs::path resolve(const fs::path& p, const fs::path& base) {
    if (p.empty() || p.is_absolute()) return p;
    return (base / p).lexically_normal();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void PipelineConfig::validate() const {
    if (channel_map.empty()) throw ValidationError("config: channel_map is empty");
    std::vector<bool> seen(channel_map.size(), false);
    for (const auto& [label, dof] : channel_map) {
        if (dof >= channel_map.size() || seen[dof])
            throw ValidationError("config: channel_map must assign DOFs 0.." + std::to_string(channel_map.size() - 1) +
                                  " exactly once (label '" + label + "')");
        seen[dof] = true;
    }
    if (drive_points.empty()) throw ValidationError("config: drive_points is empty");
    std::set<std::size_t> drives;
    for (auto d : drive_points) {
        if (d >= n_dof()) throw ValidationError("config: drive point " + std::to_string(d) + " is not a mapped DOF");
        if (!drives.insert(d).second) throw ValidationError("config: drive point " + std::to_string(d) + " repeated");
    }
    if (!(band_lo_hz > 0.0) || !(band_hi_hz > band_lo_hz))
        throw ValidationError("config: band must satisfy 0 < f_lo < f_hi");
    if (!(omega_c >= WaveletSpec::kMinimumCenter)) throw ValidationError("config: omega_c below the admissible minimum");
    if (grid_size < 3) throw ValidationError("config: grid_size must be at least 3");
    if (n_modes == 0) throw ValidationError("config: n_modes must be positive");
    if (reference_dof >= n_dof()) throw ValidationError("config: reference_dof is not a mapped DOF");
    if (!drives.count(rom_input())) throw ValidationError("config: rom input DOF must be one of the drive points");
    if (!(rom_rate_hz > 0.0)) throw ValidationError("config: rom rate must be positive");
    if (!(fusion.band_lo_hz < fusion.band_hi_hz) || fusion.band_hi_hz < band_lo_hz || fusion.band_lo_hz > band_hi_hz)
        throw ValidationError("config: fusion band must overlap the analysis band");
    if (output_dir.empty()) throw ValidationError("config: output_dir is required");
    if (region_source == RegionSource::file) {
        if (regions_file.empty() || !fs::exists(regions_file))
            throw ValidationError("config: regions file '" + regions_file.string() + "' does not exist");
    }
    if (source == InputSource::bench) {
        bench.validate();
        if (n_dof() != 3) throw ValidationError("config: the bench has 3 DOFs; channel_map must map dof0..dof2");
        for (std::size_t i = 0; i < 3; ++i) {
            if (!channel_map.count("dof" + std::to_string(i)))
                throw ValidationError("config: bench channel 'dof" + std::to_string(i) + "' is not mapped");
        }
        if (band_hi_hz >= 0.5 * bench.fs)
            throw ValidationError("config: band upper edge is at or above the Nyquist frequency");
        const double ratio = rom_rate_hz / bench.fs;
        if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0)
            throw ValidationError("config: rom rate must be an integer multiple of the bench rate");
        if (bench.t_d < 2.0 / rom_rate_hz) throw ValidationError("config: rom rate does not resolve the pulse");
    } else {
        for (auto d : drive_points) {
            const auto it = input_files.find(d);
            if (it == input_files.end())
                throw ValidationError("config: no input file for drive point " + std::to_string(d));
            if (!fs::exists(it->second))
                throw ValidationError("config: input file '" + it->second.string() + "' does not exist");
        }
    }
}

PipelineConfig pipeline_config_from_json(const json& j, const fs::path& base_dir) {
    PipelineConfig c;
    try {
        require_keys(j,
                     {"source", "bench", "drive_points", "inputs", "channel_map", "band_hz", "omega_c", "grid_size",
                      "regions", "n_modes", "reference_dof", "identify", "fusion", "frf", "rom", "output_dir"},
                     "config");
        const std::string source = j.value("source", "bench");
        if (source == "bench") {
            c.source = InputSource::bench;
        } else if (source == "files") {
            c.source = InputSource::files;
        } else {
            throw ValidationError("config: source must be 'bench' or 'files'");
        }
        if (j.contains("bench")) c.bench = bench_config_from_json(j["bench"]);
        if (j.contains("drive_points")) c.drive_points = j["drive_points"].get<std::vector<std::size_t>>();
        if (j.contains("inputs") && !j["inputs"].is_object())
            throw ValidationError("config: inputs must map drive DOF to a CSV path");
        const json inputs = j.value("inputs", json::object());
        for (const auto& [k, v] : inputs.items()) {
            c.input_files[std::stoul(k)] = resolve(v.get<std::string>(), base_dir);
        }
        c.channel_map = j.value("channel_map", std::map<std::string, std::size_t>{});
        if (j.contains("band_hz")) {
            const auto b = j["band_hz"].get<std::vector<double>>();
            if (b.size() != 2) throw ValidationError("config: band_hz needs two values");
            c.band_lo_hz = b[0];
            c.band_hi_hz = b[1];
        }
        c.omega_c = j.value("omega_c", c.omega_c);
        c.grid_size = j.value("grid_size", c.grid_size);
        if (j.contains("regions")) {
            const auto& r = j["regions"];
            require_keys(r, {"source", "file"}, "config.regions");
            const std::string s = r.value("source", "auto");
            if (s == "auto") {
                c.region_source = RegionSource::automatic;
            } else if (s == "file") {
                c.region_source = RegionSource::file;
            } else if (s == "interactive") {
                c.region_source = RegionSource::interactive;
            } else {
                throw ValidationError("config: regions.source must be auto, file or interactive");
            }
            if (r.contains("file")) c.regions_file = resolve(r["file"].get<std::string>(), base_dir);
        }
        c.n_modes = j.value("n_modes", c.n_modes);
        c.reference_dof = j.value("reference_dof", c.reference_dof);
        if (j.contains("identify")) {
            const auto& o = j["identify"];
            require_keys(o,
                         {"envelope_fraction", "edge_fraction", "smoothness", "min_periods", "min_r_squared",
                          "max_circular_variance"},
                         "config.identify");
            auto& d = c.identify;
            d.envelope_fraction = o.value("envelope_fraction", d.envelope_fraction);
            d.edge_fraction = o.value("edge_fraction", d.edge_fraction);
            d.smoothness = o.value("smoothness", d.smoothness);
            d.min_periods = o.value("min_periods", d.min_periods);
            d.min_r_squared = o.value("min_r_squared", d.min_r_squared);
            d.max_circular_variance = o.value("max_circular_variance", d.max_circular_variance);
        }
        if (j.contains("fusion")) {
            const auto& o = j["fusion"];
            require_keys(o, {"band_hz", "random_starts", "seed", "max_iterations", "tolerance", "use_all_drive_frfs"},
                         "config.fusion");
            auto& f = c.fusion;
            if (o.contains("band_hz")) {
                const auto b = o["band_hz"].get<std::vector<double>>();
                if (b.size() != 2) throw ValidationError("config: fusion.band_hz needs two values");
                f.band_lo_hz = b[0];
                f.band_hi_hz = b[1];
            }
            f.random_starts = o.value("random_starts", f.random_starts);
            f.seed = o.value("seed", f.seed);
            f.max_iterations = o.value("max_iterations", f.max_iterations);
            f.tolerance = o.value("tolerance", f.tolerance);
            f.use_all_drive_frfs = o.value("use_all_drive_frfs", f.use_all_drive_frfs);
        }
        if (j.contains("frf")) {
            const auto& o = j["frf"];
            require_keys(o, {"block_length", "window", "estimator"}, "config.frf");
            c.frf_block_length = o.value("block_length", c.frf_block_length);
            const std::string w = o.value("window", "rectangular");
            if (w != "rectangular" && w != "hann") throw ValidationError("config: frf.window must be rectangular or hann");
            c.frf_window = w == "hann" ? SpectralWindow::hann : SpectralWindow::rectangular;
            const std::string e = o.value("estimator", "h1");
            if (e != "h1" && e != "h2") throw ValidationError("config: frf.estimator must be h1 or h2");
            c.frf_estimator = e == "h2" ? FrfEstimator::h2 : FrfEstimator::h1;
        }
        if (j.contains("rom")) {
            const auto& o = j["rom"];
            require_keys(o, {"input_dof", "rate_hz"}, "config.rom");
            if (o.contains("input_dof")) c.rom_input_dof = o["input_dof"].get<std::size_t>();
            c.rom_rate_hz = o.value("rate_hz", c.rom_rate_hz);
        }
        if (j.contains("output_dir")) c.output_dir = resolve(j["output_dir"].get<std::string>(), base_dir);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    } catch (const std::logic_error& e) {
        if (dynamic_cast<const ValidationError*>(&e)) throw;
        throw ValidationError(std::string("config: ") + e.what());
    }
    return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    return pipeline_config_from_json(read_json(path), fs::absolute(path).parent_path());
}

json to_json(const PipelineConfig& c) {
    json j;
    j["source"] = c.source == InputSource::bench ? "bench" : "files";
    j["bench"] = to_json(c.bench);
    j["drive_points"] = c.drive_points;
    json inputs = json::object();
    for (const auto& [d, p] : c.input_files) inputs[std::to_string(d)] = p.string();
    j["inputs"] = inputs;
    j["channel_map"] = c.channel_map;
    j["band_hz"] = {c.band_lo_hz, c.band_hi_hz};
    j["omega_c"] = c.omega_c;
    j["grid_size"] = c.grid_size;
    j["regions"] = {{"source", region_source_name(c.region_source)}};
    if (!c.regions_file.empty()) j["regions"]["file"] = c.regions_file.string();
    j["n_modes"] = c.n_modes;
    j["reference_dof"] = c.reference_dof;
    const auto& d = c.identify;
    j["identify"] = {{"envelope_fraction", d.envelope_fraction}, {"edge_fraction", d.edge_fraction},
                     {"smoothness", d.smoothness},               {"min_periods", d.min_periods},
                     {"min_r_squared", d.min_r_squared},         {"max_circular_variance", d.max_circular_variance}};
    const auto& f = c.fusion;
    j["fusion"] = {{"band_hz", {f.band_lo_hz, f.band_hi_hz}}, {"random_starts", f.random_starts},
                   {"seed", f.seed},
                   {"max_iterations", f.max_iterations},
                   {"tolerance", f.tolerance},
                   {"use_all_drive_frfs", f.use_all_drive_frfs}};
    j["frf"] = {{"block_length", c.frf_block_length},
                {"window", c.frf_window == SpectralWindow::hann ? "hann" : "rectangular"},
                {"estimator", c.frf_estimator == FrfEstimator::h2 ? "h2" : "h1"}};
    j["rom"] = {{"input_dof", c.rom_input()}, {"rate_hz", c.rom_rate_hz}};
    j["output_dir"] = c.output_dir.string();
    return j;
}

std::string config_hash(const PipelineConfig& cfg) {
    json j = to_json(cfg);
    j.erase("output_dir");
    return sha256_hex(j.dump());
}

FrequencyGrid analysis_grid(const PipelineConfig& cfg) {
    return FrequencyGrid::linear(cfg.band_lo_hz, cfg.band_hi_hz, cfg.grid_size);
}

std::vector<TimeSeries> ingest_channels(const std::vector<TimeSeries>& raw, const PipelineConfig& cfg,
                                        std::size_t drive) {
    const TimeSeries* force = nullptr;
    for (const auto& s : raw) {
        if (s.kind() != SignalKind::force) continue;
        if (force) throw ValidationError("ingest: more than one force column for drive " + std::to_string(drive));
        force = &s;
    }
    if (!force) throw ValidationError("ingest: no force column for drive " + std::to_string(drive));
    if (cfg.band_hi_hz >= force->nyquist())
        throw ValidationError("ingest: band upper edge is at or above the Nyquist frequency");
    std::vector<const TimeSeries*> by_dof(cfg.n_dof(), nullptr);
    for (const auto& [label, dof] : cfg.channel_map) {
        const auto it = std::find_if(raw.begin(), raw.end(), [&](const TimeSeries& s) { return s.label() == label; });
        if (it == raw.end()) throw ValidationError("ingest: channel '" + label + "' not found in drive " +
                                                   std::to_string(drive) + " data");
        if (it->kind() == SignalKind::force) throw ValidationError("ingest: channel '" + label + "' is a force");
        by_dof[dof] = &*it;
    }
    std::vector<TimeSeries> out;
    for (std::size_t i = 0; i < by_dof.size(); ++i) {
        const TimeSeries& s = *by_dof[i];
        TimeSeries v = s.kind() == SignalKind::acceleration ? integrate_acceleration(s, cfg.band_lo_hz, cfg.band_hi_hz)
                                                            : s;
        if (!out.empty() && v.kind() != out.front().kind())
            throw ValidationError("ingest: response channels mix displacement and velocity/acceleration");
        if (v.size() != force->size() || v.dt() != force->dt())
            throw ValidationError("ingest: channel '" + s.label() + "' differs from the force in length or rate");
        out.push_back(v.relabeled("dof" + std::to_string(i)));
    }
    out.push_back(force->relabeled("force" + std::to_string(drive)));
    return out;
}

FrfMatrix measure_frf(const std::vector<TimeSeries>& signals, std::size_t drive, const PipelineConfig& cfg) {
    std::vector<TimeSeries> responses(signals.begin(), signals.end() - 1);
    std::vector<std::size_t> out_dofs(responses.size());
    for (std::size_t i = 0; i < out_dofs.size(); ++i) out_dofs[i] = i;
    SpectralOptions so;
    so.block_length = cfg.frf_block_length == 0 ? signals.back().size() : cfg.frf_block_length;
    so.window = cfg.frf_window;
    so.lowest_hz = cfg.band_lo_hz;
    so.band_lo_hz = cfg.band_lo_hz;
    so.band_hi_hz = cfg.band_hi_hz;
    return estimate_frf({signals.back()}, responses, cfg.frf_estimator, so, {drive}, out_dofs);
}

std::vector<TimeSeries> simulate_rom_at_rate(const ReducedModel& rom, const TimeSeries& fine_force,
                                             double output_dt) {
    const double ratio = output_dt / fine_force.dt();
    const auto step = static_cast<std::size_t>(std::llround(ratio));
    if (step == 0 || std::abs(ratio - static_cast<double>(step)) > 1e-9 * ratio)
        throw ValidationError("rom: output interval is not a whole multiple of the simulation interval");
    const auto sim = simulate_rom(rom, {fine_force}, fine_force.dt());
    std::vector<TimeSeries> out;
    for (const auto& y : sim.outputs) {
        std::vector<double> v;
        for (std::size_t i = 0; i < y.size(); i += step) v.push_back(y[i]);
        out.emplace_back(std::move(v), output_dt, y.label(), y.kind());
    }
    return out;
}

double band_averaged_cwt_error(const TimeSeries& test, const TimeSeries& reference, const FrequencyGrid& grid,
                               const WaveletSpec& spec) {
    if (test.size() != reference.size() || test.dt() != reference.dt())
        throw ValidationError("band-averaged error: series differ in length or rate");
    const auto a = cwt(test, grid, spec);
    const auto b = cwt(reference, grid, spec);
    double num = 0.0;
    double den = 0.0;
    std::size_t used = 0;
    for (std::size_t c = 0; c < a.n_time(); ++c) {
        double sa = 0.0;
        double sb = 0.0;
        std::size_t rows = 0;
        for (std::size_t r = 0; r < a.n_freq(); ++r) {
            if (!a.coi_valid(r, c)) continue;
            const auto ri = static_cast<Eigen::Index>(r);
            const auto ci = static_cast<Eigen::Index>(c);
            sa += std::abs(a.values(ri, ci));
            sb += std::abs(b.values(ri, ci));
            ++rows;
        }
        if (rows == 0) continue;
        sa /= static_cast<double>(rows);
        sb /= static_cast<double>(rows);
        num += (sa - sb) * (sa - sb);
        den += sb * sb;
        ++used;
    }
    if (used == 0 || !(den > 0.0)) throw NumericalError("band-averaged error: no cone-of-influence-valid cells");
    return std::sqrt(num / den);
}

json compare_with_oracle(const ModalSet& identified, const ModalSet& exact) {
    if (identified.n_modes() != exact.n_modes() || identified.n_dof() != exact.n_dof())
        throw ValidationError("oracle comparison: mode or DOF counts differ");
    json modes = json::array();
    double worst_modulus = 0.0;
    double worst_phase = 0.0;
    for (std::size_t k = 0; k < exact.n_modes(); ++k) {
        const Mode& m = identified.modes[k];
        Mode e = exact.modes[k];
        e.psi = normalize_mode_vector(e.psi, identified.reference_dof);
        const Eigen::VectorXd mi = m.moduli();
        const Eigen::VectorXd me = e.moduli();
        const Eigen::VectorXd pi = m.phases_deg();
        const Eigen::VectorXd pe = e.phases_deg();
        double dm = 0.0;
        double dp = 0.0;
        std::vector<double> dphase;
        for (Eigen::Index i = 0; i < mi.size(); ++i) {
            dm = std::max(dm, std::abs(mi[i] - me[i]));
            const double d = wrap_degrees(pi[i] - pe[i]);
            dphase.push_back(d);
            dp = std::max(dp, std::abs(d));
        }
        worst_modulus = std::max(worst_modulus, dm);
        worst_phase = std::max(worst_phase, dp);
        modes.push_back({{"f_hz", m.f_hz},
                         {"f_exact_hz", e.f_hz},
                         {"f_error_hz", m.f_hz - e.f_hz},
                         {"zeta", m.zeta},
                         {"zeta_exact", e.zeta},
                         {"zeta_relative_error", (m.zeta - e.zeta) / e.zeta},
                         {"moduli", std::vector<double>(mi.begin(), mi.end())},
                         {"moduli_exact", std::vector<double>(me.begin(), me.end())},
                         {"max_modulus_error", dm},
                         {"phases_deg", std::vector<double>(pi.begin(), pi.end())},
                         {"phases_exact_deg", std::vector<double>(pe.begin(), pe.end())},
                         {"phase_errors_deg", dphase},
                         {"max_phase_error_deg", dp}});
    }
    return {{"modes", modes}, {"max_modulus_error", worst_modulus}, {"max_phase_error_deg", worst_phase}};
}

namespace {

// Executes stages inside one run directory and keeps the manifest.
class Runner {
public:
    Runner(PipelineConfig cfg, json manifest) : cfg_(std::move(cfg)), dir_(cfg_.output_dir), manifest_(std::move(manifest)) {
        if (!manifest_.is_object() || !manifest_.contains("stages")) {
            manifest_ = {{"tool", "wavemodal"}, {"stages", json::array()}};
        }
        manifest_["version"] = tool_version();
        manifest_["config_hash"] = config_hash(cfg_);
        manifest_["config"] = run_files::config();
    }

    void run_all() {
        if (cfg_.source == InputSource::bench) stage_simulate();
        for (auto d : cfg_.drive_points) stage_ingest(d);
        for (auto d : cfg_.drive_points) stage_cwt(d);
        for (auto d : cfg_.drive_points) stage_regions(d);
        if (cfg_.region_source == RegionSource::interactive) {
            finish();
            return;
        }
        for (auto d : cfg_.drive_points) stage_identify(d);
        for (auto d : cfg_.drive_points) stage_frf(d);
        downstream();
    }

    void rerun(std::size_t drive) {
        if (std::find(cfg_.drive_points.begin(), cfg_.drive_points.end(), drive) == cfg_.drive_points.end())
            throw ValidationError("drive " + std::to_string(drive) + " is not part of this run");
        // The region file may have been replaced since the last run.
        stage("regions", drive, [&] { wrote(run_files::regions(drive)); });
        stage_identify(drive);
        for (auto d : cfg_.drive_points) {
            if (!fs::exists(dir_ / run_files::measured_frf(d))) stage_frf(d);
        }
        downstream();
    }

    const json& manifest() const { return manifest_; }

private:
    PipelineConfig cfg_;
    fs::path dir_;
    json manifest_;
    std::vector<std::string> inputs_;
    std::vector<std::string> outputs_;

    fs::path at(const std::string& rel) const { return dir_ / rel; }

    std::vector<TimeSeries> read_series(const std::string& rel) {
        inputs_.push_back(rel);
        return read_time_series_csv(at(rel));
    }
    json read_doc(const std::string& rel) {
        inputs_.push_back(rel);
        return read_json(at(rel));
    }
    Spectrogram read_spec(const std::string& stem) {
        const auto files = spectrogram_paths(stem);
        inputs_.push_back(files.sidecar.string());
        inputs_.push_back(files.binary.string());
        return read_spectrogram(at(files.sidecar.string()));
    }
    FrfMatrix read_frf(const std::string& rel) {
        inputs_.push_back(rel);
        return read_frf_csv(at(rel));
    }
    void wrote(const std::string& rel) { outputs_.push_back(rel); }

    void downstream() {
        for (auto d : cfg_.drive_points) {
            if (!fs::exists(at(run_files::modal(d)))) {
                finish();
                return;
            }
        }
        stage_fuse();
        stage_reconstruct();
        stage_rom();
        stage_validate();
        finish();
    }

    void stage(const std::string& name, std::optional<std::size_t> drive, const std::function<void()>& body) {
        inputs_.clear();
        outputs_.clear();
        const auto t0 = std::chrono::steady_clock::now();
        auto fail = [&](const std::exception& e, int code) {
            std::vector<std::string> artifacts = inputs_;
            artifacts.insert(artifacts.end(), outputs_.begin(), outputs_.end());
            for (auto& a : artifacts) a = (dir_ / a).string();
            throw StageError(name, artifacts, e.what(), code);
        };
        try {
            body();
        } catch (const ValidationError& e) {
            fail(e, 2);
        } catch (const NumericalError& e) {
            fail(e, 3);
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            fail(e, 3);
        }
        json rec = {{"name", name}, {"seconds", seconds_since(t0)}, {"inputs", inputs_}};
        if (drive) rec["drive"] = *drive;
        json outs = json::array();
        for (const auto& o : outputs_) {
            outs.push_back({{"path", o}, {"sha256", sha256_file(at(o))}, {"bytes", fs::file_size(at(o))}});
        }
        rec["outputs"] = outs;
        auto& stages = manifest_["stages"];
        json kept = json::array();
        for (const auto& s : stages) {
            const bool same = s["name"] == name && (drive ? (s.contains("drive") && s["drive"] == *drive) : !s.contains("drive"));
            if (!same) kept.push_back(s);
        }
        kept.push_back(rec);
        std::stable_sort(kept.begin(), kept.end(), [](const json& a, const json& b) {
            const auto ia = std::find(kStageOrder.begin(), kStageOrder.end(), a["name"].get<std::string>());
            const auto ib = std::find(kStageOrder.begin(), kStageOrder.end(), b["name"].get<std::string>());
            if (ia != ib) return ia < ib;
            return a.value("drive", std::size_t{0}) < b.value("drive", std::size_t{0});
        });
        stages = kept;
    }

    void finish() {
        json files = json::object();
        for (const auto& s : manifest_["stages"]) {
            for (const auto& o : s["outputs"]) files[o["path"].get<std::string>()] = o["sha256"];
        }
        manifest_["files"] = files;
        json pending = json::array();
        for (auto d : cfg_.drive_points) {
            if (!fs::exists(at(run_files::modal(d)))) pending.push_back(d);
        }
        manifest_["pending_drives"] = pending;
        manifest_["status"] = pending.empty() && fs::exists(at(run_files::validation())) ? "complete" : "awaiting_regions";
        write_json(at(run_files::manifest()), manifest_);
    }

    void stage_simulate() {
        stage("simulate", std::nullopt, [&] {
            write_json(at(run_files::bench_config()), to_json(cfg_.bench));
            wrote(run_files::bench_config());
            const auto model = build_three_dof(cfg_.bench);
            for (auto d : cfg_.drive_points) {
                BenchConfig b = cfg_.bench;
                b.drive_dof = d;
                auto r = simulate_full(model, b);
                auto cols = r.velocity;
                cols.push_back(r.force);
                write_time_series_csv(at(run_files::raw(d)), cols);
                wrote(run_files::raw(d));
            }
        });
    }

    void stage_ingest(std::size_t d) {
        stage("ingest", d, [&] {
            std::vector<TimeSeries> raw;
            if (cfg_.source == InputSource::bench) {
                raw = read_series(run_files::raw(d));
            } else {
                const fs::path p = cfg_.input_files.at(d);
                inputs_.push_back(p.string());
                raw = read_time_series_csv(p);
            }
            write_time_series_csv(at(run_files::signals(d)), ingest_channels(raw, cfg_, d));
            wrote(run_files::signals(d));
        });
    }

    void stage_cwt(std::size_t d) {
        stage("cwt", d, [&] {
            const auto signals = read_series(run_files::signals(d));
            const auto grid = analysis_grid(cfg_);
            const WaveletSpec spec(cfg_.omega_c);
            for (std::size_t i = 0; i + 1 < signals.size(); ++i) {
                const auto stem = run_files::spectrogram_stem(d, i);
                write_spectrogram(at(stem), cwt(signals[i], grid, spec),
                                  {{"drive", d}, {"dof", i}, {"label", signals[i].label()},
                                   {"kind", to_string(signals[i].kind())}});
                const auto files = spectrogram_paths(stem);
                wrote(files.binary.string());
                wrote(files.sidecar.string());
            }
        });
    }

    std::vector<Spectrogram> read_drive_spectra(std::size_t d) {
        std::vector<Spectrogram> spectra;
        for (std::size_t i = 0; i < cfg_.n_dof(); ++i) spectra.push_back(read_spec(run_files::spectrogram_stem(d, i)));
        return spectra;
    }

    void stage_regions(std::size_t d) {
        stage("regions", d, [&] {
            const auto spectra = read_drive_spectra(d);
            std::vector<HarmonicRegion> regions;
            if (cfg_.region_source == RegionSource::file) {
                inputs_.push_back(cfg_.regions_file.string());
                regions = regions_from_json(read_json(cfg_.regions_file));
                const auto& s = spectra.front();
                if (auto issue = check_regions(regions, s.n_time(), s.dt, &s.grid)) throw ValidationError(issue->message);
            } else {
                regions = suggest_regions(spectra, cfg_.n_modes);
            }
            write_json(at(run_files::regions(d)), regions_to_json(regions));
            wrote(run_files::regions(d));
        });
    }

    void stage_identify(std::size_t d) {
        stage("identify", d, [&] {
            const auto spectra = read_drive_spectra(d);
            const auto regions = regions_from_json(read_doc(run_files::regions(d)));
            const auto& s = spectra.front();
            if (auto issue = check_regions(regions, s.n_time(), s.dt, &s.grid)) throw ValidationError(issue->message);
            const auto id = identify_modes(spectra, regions, d, cfg_.reference_dof, cfg_.identify);
            std::vector<TimeSeries> comps;
            for (std::size_t i = 0; i < id.components.n_dof(); ++i) {
                for (std::size_t j = 0; j < id.components.n_modes(); ++j) {
                    comps.push_back(id.components.components[i][j].relabeled("dof" + std::to_string(i) + "_mode" +
                                                                             std::to_string(j)));
                }
            }
            write_time_series_csv(at(run_files::components(d)), comps);
            wrote(run_files::components(d));
            write_json(at(run_files::modal(d)), to_json(id.modal));
            wrote(run_files::modal(d));
            write_json(at(run_files::diagnostics(d)), id.diagnostics);
            wrote(run_files::diagnostics(d));
        });
    }

    void stage_frf(std::size_t d) {
        stage("frf", d, [&] {
            const auto signals = read_series(run_files::signals(d));
            write_frf_csv(at(run_files::measured_frf(d)), measure_frf(signals, d, cfg_));
            wrote(run_files::measured_frf(d));
        });
    }

    void stage_fuse() {
        stage("fuse", std::nullopt, [&] {
            std::vector<DriveEstimate> est;
            for (auto d : cfg_.drive_points) {
                est.push_back({d, modal_set_from_json(read_doc(run_files::modal(d))),
                               read_frf(run_files::measured_frf(d))});
            }
            const auto res = fuse_mode_estimates(std::move(est), cfg_.fusion);
            write_json(at(run_files::fused_modal()), to_json(res.modal));
            wrote(run_files::fused_modal());
            write_json(at(run_files::fusion_report()), res.report());
            wrote(run_files::fusion_report());
        });
    }

    void stage_reconstruct() {
        stage("reconstruct", std::nullopt, [&] {
            const auto fused = modal_set_from_json(read_doc(run_files::fused_modal()));
            const auto measured = read_frf(run_files::measured_frf(cfg_.drive_points.front()));
            std::vector<std::size_t> outs(cfg_.n_dof());
            for (std::size_t i = 0; i < outs.size(); ++i) outs[i] = i;
            write_frf_csv(at(run_files::reconstructed_frf()),
                          reconstruct_frf(fused, measured.freqs_hz, outs, cfg_.drive_points));
            wrote(run_files::reconstructed_frf());
        });
    }

    TimeSeries fine_force() {
        const std::size_t d = cfg_.rom_input();
        if (cfg_.source == InputSource::bench) {
            inputs_.push_back(run_files::bench_config());
            const auto bench = bench_config_from_json(read_json(at(run_files::bench_config())));
            const auto model = build_three_dof(bench);
            const auto pulse = half_sine_impulse(bench, cfg_.rom_rate_hz);
            const double mass = model.M(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
            std::vector<double> f(pulse.values());
            for (auto& v : f) v *= mass;
            return TimeSeries(std::move(f), pulse.dt(), "force" + std::to_string(d), SignalKind::force);
        }
        // Measured force, held over each sample interval.
        const auto signals = read_series(run_files::signals(d));
        const TimeSeries& force = signals.back();
        const auto step = static_cast<std::size_t>(std::ceil(cfg_.rom_rate_hz * force.dt()));
        std::vector<double> f;
        f.reserve(force.size() * step);
        for (std::size_t i = 0; i < force.size(); ++i) f.insert(f.end(), step, force[i]);
        return TimeSeries(std::move(f), force.dt() / static_cast<double>(step), force.label(), SignalKind::force);
    }

    void stage_rom() {
        stage("rom", std::nullopt, [&] {
            const auto fused = modal_set_from_json(read_doc(run_files::fused_modal()));
            const auto signals = read_series(run_files::signals(cfg_.rom_input()));
            const RomOutput kind =
                signals.front().kind() == SignalKind::displacement ? RomOutput::displacement : RomOutput::velocity;
            std::vector<std::size_t> outs(cfg_.n_dof());
            for (std::size_t i = 0; i < outs.size(); ++i) outs[i] = i;
            const auto rom = build_rom(fused, {cfg_.rom_input()}, outs, kind);
            write_json(at(run_files::rom()), to_json(rom));
            wrote(run_files::rom());
            auto response = simulate_rom_at_rate(rom, fine_force(), signals.front().dt());
            const std::size_t n = signals.front().size();
            for (auto& r : response) {
                std::vector<double> v(r.values().begin(), r.values().begin() + static_cast<std::ptrdiff_t>(std::min(n, r.size())));
                v.resize(n, 0.0);
                r = r.with_samples(std::move(v));
            }
            write_time_series_csv(at(run_files::rom_response()), response);
            wrote(run_files::rom_response());
        });
    }

    void stage_validate() {
        stage("validate", std::nullopt, [&] {
            const auto fused = modal_set_from_json(read_doc(run_files::fused_modal()));
            json out;
            json per_drive = json::object();
            double total = 0.0;
            for (auto d : cfg_.drive_points) {
                const auto measured = convert_frf(read_frf(run_files::measured_frf(d)), FrfKind::receptance)
                                          .band(cfg_.fusion.band_lo_hz, cfg_.fusion.band_hi_hz);
                const double e = reconstruction_error(
                    measured, reconstruct_frf(fused, measured.freqs_hz, measured.out_dofs, measured.in_dofs));
                per_drive[std::to_string(d)] = e;
                total += e;
            }
            out["reconstruction_error"] = {{"per_drive", per_drive}, {"total", total},
                                           {"band_hz", {cfg_.fusion.band_lo_hz, cfg_.fusion.band_hi_hz}}};

            const auto signals = read_series(run_files::signals(cfg_.rom_input()));
            const auto response = read_series(run_files::rom_response());
            const auto grid = analysis_grid(cfg_);
            const WaveletSpec spec(cfg_.omega_c);
            json rom_err = json::object();
            for (std::size_t i = 0; i < response.size(); ++i)
                rom_err[std::to_string(i)] = band_averaged_cwt_error(response[i], signals[i], grid, spec);
            out["rom"] = {{"input_dof", cfg_.rom_input()}, {"band_averaged_cwt_error", rom_err}};

            if (cfg_.source == InputSource::bench) {
                const auto bench = bench_config_from_json(read_doc(run_files::bench_config()));
                const auto exact = exact_modal_oracle(build_three_dof(bench)).to_modal_set();
                json oracle = {{"fused", compare_with_oracle(fused, exact)}};
                for (auto d : cfg_.drive_points) {
                    oracle["drive" + std::to_string(d)] =
                        compare_with_oracle(modal_set_from_json(read_doc(run_files::modal(d))), exact);
                }
                out["oracle"] = oracle;
                out["grid_step_hz"] = grid.resolution();
            }
            write_json(at(run_files::validation()), out);
            wrote(run_files::validation());
        });
    }
};

}  // namespace

PipelineConfig load_run_config(const fs::path& run_dir) {
    const fs::path p = run_dir / run_files::config();
    if (!fs::exists(p)) throw ValidationError(run_dir.string() + " is not a run directory (no config.json)");
    auto cfg = pipeline_config_from_json(read_json(p), run_dir);
    cfg.output_dir = run_dir;
    return cfg;
}

json run_pipeline(const PipelineConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.output_dir);
    json stored = to_json(cfg);
    stored["output_dir"] = ".";
    write_json(cfg.output_dir / run_files::config(), stored);
    Runner runner(cfg, json::object());
    runner.run_all();
    return runner.manifest();
}

json rerun_from_identify(const fs::path& run_dir, std::size_t drive) {
    const auto cfg = load_run_config(run_dir);
    json manifest = json::object();
    if (fs::exists(run_dir / run_files::manifest())) manifest = read_json(run_dir / run_files::manifest());
    Runner runner(cfg, manifest);
    runner.rerun(drive);
    return runner.manifest();
}

}  // namespace wavemodal
