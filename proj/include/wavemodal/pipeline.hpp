#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wavemodal/bench.hpp"
#include "wavemodal/frf.hpp"
#include "wavemodal/fusion.hpp"
#include "wavemodal/modal_id.hpp"
#include "wavemodal/modal_set.hpp"
#include "wavemodal/rom.hpp"
#include "wavemodal/series.hpp"
#include "wavemodal/timefreq.hpp"

namespace wavemodal {

std::string tool_version();

enum class InputSource { bench, files };
enum class RegionSource { automatic, file, interactive };

struct PipelineConfig {
    InputSource source = InputSource::bench;
    BenchConfig bench;
    std::vector<std::size_t> drive_points{0};
    // Drive DOF -> CSV with one force column and the response channels.
    std::map<std::size_t, std::filesystem::path> input_files;
    // Response column label -> DOF index. DOFs must be 0..n-1, each once.
    std::map<std::string, std::size_t> channel_map;
    double band_lo_hz = 1.0;
    double band_hi_hz = 6.0;
    double omega_c = WaveletSpec::kDefaultCenter;
    std::size_t grid_size = 400;
    RegionSource region_source = RegionSource::automatic;
    std::filesystem::path regions_file;
    std::size_t n_modes = 3;
    std::size_t reference_dof = 0;
    IdentifyOptions identify;
    FusionOptions fusion;
    // Zero uses the whole record as one block (impulse tests).
    std::size_t frf_block_length = 0;
    SpectralWindow frf_window = SpectralWindow::rectangular;
    FrfEstimator frf_estimator = FrfEstimator::h1;
    std::optional<std::size_t> rom_input_dof;  // default: first drive point
    double rom_rate_hz = 20000.0;
    std::filesystem::path output_dir;

    std::size_t n_dof() const { return channel_map.size(); }
    std::size_t rom_input() const { return rom_input_dof.value_or(drive_points.front()); }
    // Structural checks, file existence and (for the bench) band vs Nyquist.
    // Runs before any computation.
    void validate() const;
};

/// Relative paths resolve against `base_dir`.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
nlohmann::json to_json(const PipelineConfig& cfg);
std::string config_hash(const PipelineConfig& cfg);

/// Stage failure carrying the stage name and the artifacts involved.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, std::vector<std::string> artifacts, const std::string& what, int exit_code);
    const std::string& stage() const { return stage_; }
    const std::vector<std::string>& artifacts() const { return artifacts_; }
    int exit_code() const { return exit_code_; }

private:
    std::string stage_;
    std::vector<std::string> artifacts_;
    int exit_code_;
};

/// Artifact names inside a run directory.
namespace run_files {
std::string config();
std::string manifest();
std::string bench_config();
std::string raw(std::size_t drive);
std::string signals(std::size_t drive);
std::string spectrogram_stem(std::size_t drive, std::size_t dof);
std::string regions(std::size_t drive);
std::string components(std::size_t drive);
std::string modal(std::size_t drive);
std::string diagnostics(std::size_t drive);
std::string measured_frf(std::size_t drive);
std::string fused_modal();
std::string fusion_report();
std::string reconstructed_frf();
std::string rom();
std::string rom_response();
std::string validation();
}  // namespace run_files

/// Executes the identification protocol inside cfg.output_dir, persisting
/// every intermediate product, and returns the manifest (also written to
/// manifest.json). With interactive regions the run stops after drafting
/// regions.
nlohmann::json run_pipeline(const PipelineConfig& cfg);

/// Re-identifies one drive point from its stored spectrograms and regions,
/// then refreshes fusion, reconstruction, ROM and validation once every
/// drive has a modal set.
nlohmann::json rerun_from_identify(const std::filesystem::path& run_dir, std::size_t drive);

/// The configuration stored in a run directory (output_dir set to it).
PipelineConfig load_run_config(const std::filesystem::path& run_dir);

// Individual stages, shared with the CLI.

/// Column order: one response per DOF in DOF order, then the force.
std::vector<TimeSeries> ingest_channels(const std::vector<TimeSeries>& raw, const PipelineConfig& cfg,
                                        std::size_t drive);

FrequencyGrid analysis_grid(const PipelineConfig& cfg);

FrfMatrix measure_frf(const std::vector<TimeSeries>& signals, std::size_t drive, const PipelineConfig& cfg);

/// ROM response to `force` (physical, on rom.input_dofs[0]) simulated at a
/// rate that satisfies the ROM step bound, returned at the force's rate.
std::vector<TimeSeries> simulate_rom_at_rate(const ReducedModel& rom, const TimeSeries& fine_force,
                                             double output_dt);

/// Band-averaged CWT magnitude error ||b_test - b_ref|| / ||b_ref|| where
/// b(t) is the mean |X| over cone-of-influence-valid rows of the band.
double band_averaged_cwt_error(const TimeSeries& test, const TimeSeries& reference, const FrequencyGrid& grid,
                               const WaveletSpec& spec);

/// Comparison of a modal set against the bench's exact modes: frequency,
/// damping, moduli and phase deviations per mode.
nlohmann::json compare_with_oracle(const ModalSet& identified, const ModalSet& exact);

}  // namespace wavemodal
