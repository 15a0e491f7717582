#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "wavemodal/frf.hpp"
#include "wavemodal/series.hpp"
#include "wavemodal/timefreq.hpp"

namespace wavemodal {

// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

nlohmann::json read_json(const std::filesystem::path& path);
// Two-space indented dump with a trailing newline. Object keys come out
// sorted, so equal values give equal bytes.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// CSV with header `time_s,label:kind,...`; every series shares dt and length.
void write_time_series_csv(const std::filesystem::path& path, const std::vector<TimeSeries>& series);
std::vector<TimeSeries> read_time_series_csv(const std::filesystem::path& path);

/// Spectrogram container: "WSPC", u32 version, u64 n_freq, u64 n_time, f64 dt,
/// f64 omega_c, then n_freq * n_time (re, im) f64 pairs row-major, all
/// little-endian. The JSON sidecar carries the grid, coi and their summary.
inline constexpr std::uint32_t kSpectrogramVersion = 1;

struct SpectrogramFiles {
    std::filesystem::path binary;
    std::filesystem::path sidecar;
};

SpectrogramFiles spectrogram_paths(const std::filesystem::path& stem);
void write_spectrogram(const std::filesystem::path& stem, const Spectrogram& s, const nlohmann::json& extra = {});
/// `sidecar` is the .json file; the binary is located through it.
Spectrogram read_spectrogram(const std::filesystem::path& sidecar);
nlohmann::json spectrogram_sidecar(const Spectrogram& s, const std::string& binary_name, const std::string& sha256);
nlohmann::json coi_summary(const Spectrogram& s);

nlohmann::json regions_to_json(const std::vector<HarmonicRegion>& regions);
std::vector<HarmonicRegion> regions_from_json(const nlohmann::json& j);

/// Long-format CSV `freq_hz,out_dof,in_dof,re,im,kind`.
void write_frf_csv(const std::filesystem::path& path, const FrfMatrix& h);
FrfMatrix read_frf_csv(const std::filesystem::path& path);

}  // namespace wavemodal
