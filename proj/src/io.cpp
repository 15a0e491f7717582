#include "wavemodal/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "wavemodal/digest.hpp"
#include "wavemodal/error.hpp"

namespace wavemodal {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'W', 'S', 'P', 'C'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 8 + 8 + 8 + 8;

template <typename T>
void put_le(std::string& buf, T value) {
    std::uint64_t bits = 0;
    if constexpr (std::is_same_v<T, double>) {
        bits = std::bit_cast<std::uint64_t>(value);
    } else {
        bits = static_cast<std::uint64_t>(value);
    }
    for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

template <typename T>
T get_le(const char* p) {
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    if constexpr (std::is_same_v<T, double>) {
        return std::bit_cast<double>(bits);
    } else {
        return static_cast<T>(bits);
    }
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, sep)) out.push_back(field);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

double parse_double(const std::string& text, const fs::path& path, std::size_t line) {
    const std::string t = trim(text);
    double v = 0.0;
    const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || end != t.data() + t.size() || !std::isfinite(v)) {
        throw ValidationError(path.string() + ":" + std::to_string(line) + ": '" + t +
                              "' is not a finite number");
    }
    return v;
}

std::size_t parse_index(const std::string& text, const fs::path& path, std::size_t line) {
    const std::string t = trim(text);
    std::size_t v = 0;
    const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || end != t.data() + t.size())
        throw ValidationError(path.string() + ":" + std::to_string(line) + ": '" + t + "' is not a DOF index");
    return v;
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!trim(line).empty()) lines.push_back(line);
    }
    return lines;
}

json vertices_json(const Polyline& p) {
    json out = json::array();
    for (const auto& [t, f] : p.vertices()) out.push_back({t, f});
    return out;
}

Polyline polyline_from_json(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ValidationError(where + ": expected a non-empty list of [t, f_hz] pairs");
    std::vector<std::pair<double, double>> v;
    for (const auto& p : j) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
            throw ValidationError(where + ": each vertex must be [t, f_hz]");
        v.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
    return Polyline(std::move(v));
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw NumericalError("cannot format number");
    return std::string(buf, end);
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(path.string() + ": invalid JSON: " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    // Written aside and renamed so concurrent readers never see a partial file.
    fs::path tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write " + path.string());
        out << text;
        if (!out) throw ValidationError("write failed for " + path.string());
    }
    fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_time_series_csv(const fs::path& path, const std::vector<TimeSeries>& series) {
    if (series.empty()) throw ValidationError("no series to write");
    const double dt = series.front().dt();
    const std::size_t n = series.front().size();
    std::string text = "time_s";
    for (const auto& s : series) {
        if (s.size() != n || s.dt() != dt)
            throw ValidationError("series '" + s.label() + "' differs in length or sample interval");
        if (s.label().find_first_of(",\n") != std::string::npos)
            throw ValidationError("series label '" + s.label() + "' contains a separator");
        text += "," + s.label() + ":" + std::string(to_string(s.kind()));
    }
    text += "\n";
    for (std::size_t i = 0; i < n; ++i) {
        text += format_double(static_cast<double>(i) * dt);
        for (const auto& s : series) {
            text += ",";
            text += format_double(s[i]);
        }
        text += "\n";
    }
    write_text(path, text);
}

std::vector<TimeSeries> read_time_series_csv(const fs::path& path) {
    const auto lines = read_lines(path);
    if (lines.size() < 3) throw ValidationError(path.string() + ": needs a header and at least two rows");
    const auto header = split(lines.front(), ',');
    if (header.size() < 2 || trim(header[0]) != "time_s")
        throw ValidationError(path.string() + ": header must start with time_s followed by channels");
    std::vector<std::string> labels;
    std::vector<SignalKind> kinds;
    for (std::size_t c = 1; c < header.size(); ++c) {
        const std::string h = trim(header[c]);
        const auto colon = h.rfind(':');
        if (colon == std::string::npos || colon == 0)
            throw ValidationError(path.string() + ": column '" + h + "' lacks a label:kind tag");
        labels.push_back(h.substr(0, colon));
        kinds.push_back(signal_kind_from_string(h.substr(colon + 1)));
    }
    const std::size_t n = lines.size() - 1;
    std::vector<double> t(n);
    std::vector<std::vector<double>> cols(labels.size(), std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto fields = split(lines[i + 1], ',');
        if (fields.size() != header.size())
            throw ValidationError(path.string() + ":" + std::to_string(i + 2) + ": expected " +
                                  std::to_string(header.size()) + " fields");
        t[i] = parse_double(fields[0], path, i + 2);
        for (std::size_t c = 0; c < labels.size(); ++c) cols[c][i] = parse_double(fields[c + 1], path, i + 2);
    }
    const double span = t.back() - t.front();
    const double fitted = span / static_cast<double>(n - 1);
    if (!(fitted > 0.0)) throw ValidationError(path.string() + ": time column must increase");
    for (std::size_t i = 0; i < n; ++i) {
        const double expect = t.front() + static_cast<double>(i) * fitted;
        if (std::abs(t[i] - expect) > 1e-6 * fitted)
            throw ValidationError(path.string() + ":" + std::to_string(i + 2) + ": time column is not uniformly sampled");
    }
    // Prefer the first difference when it agrees, so written dt reads back exactly.
    const double first = t[1] - t[0];
    const double dt = std::abs(first - fitted) <= 1e-12 * fitted ? first : fitted;
    std::vector<TimeSeries> out;
    for (std::size_t c = 0; c < labels.size(); ++c) out.emplace_back(std::move(cols[c]), dt, labels[c], kinds[c]);
    return out;
}

SpectrogramFiles spectrogram_paths(const fs::path& stem) {
    fs::path bin = stem;
    fs::path side = stem;
    bin += ".wspc";
    side += ".json";
    return {bin, side};
}

json coi_summary(const Spectrogram& s) {
    std::size_t valid = 0;
    std::size_t first_full = s.n_time();
    std::size_t last_full = 0;
    for (std::size_t c = 0; c < s.n_time(); ++c) {
        for (std::size_t r = 0; r < s.n_freq(); ++r) valid += s.coi_valid(r, c) ? 1 : 0;
        if (s.coi[c] <= s.grid.min()) {
            first_full = std::min(first_full, c);
            last_full = c;
        }
    }
    json j;
    j["half_width_s_at_min_hz"] = coi_half_width(s.grid.min(), s.wavelet);
    j["half_width_s_at_max_hz"] = coi_half_width(s.grid.max(), s.wavelet);
    j["lowest_valid_hz"] = *std::min_element(s.coi.begin(), s.coi.end());
    if (first_full < s.n_time()) {
        j["full_band_interior_s"] = {static_cast<double>(first_full) * s.dt, static_cast<double>(last_full) * s.dt};
    } else {
        j["full_band_interior_s"] = nullptr;
    }
    j["valid_cell_fraction"] = static_cast<double>(valid) / static_cast<double>(s.n_freq() * s.n_time());
    return j;
}

json spectrogram_sidecar(const Spectrogram& s, const std::string& binary_name, const std::string& sha256) {
    json j;
    j["format"] = "WSPC";
    j["version"] = kSpectrogramVersion;
    j["binary"] = binary_name;
    j["sha256"] = sha256;
    j["n_freq"] = s.n_freq();
    j["n_time"] = s.n_time();
    j["dt"] = s.dt;
    j["duration_s"] = s.dt * static_cast<double>(s.n_time());
    j["omega_c"] = s.wavelet.center_frequency();
    j["admissibility_constant"] = s.wavelet.admissibility_constant();
    j["grid"] = {{"spacing", s.grid.spacing() == GridSpacing::linear ? "linear" : "logarithmic"},
                 {"min_hz", s.grid.min()},
                 {"max_hz", s.grid.max()},
                 {"hz", s.grid.hz()}};
    json coi = json::array();
    for (double f : s.coi) coi.push_back(std::isfinite(f) ? json(f) : json(nullptr));
    j["coi_hz"] = std::move(coi);
    j["coi_summary"] = coi_summary(s);
    return j;
}

void write_spectrogram(const fs::path& stem, const Spectrogram& s, const json& extra) {
    const auto files = spectrogram_paths(stem);
    const std::size_t cells = s.n_freq() * s.n_time();
    std::string buf;
    buf.reserve(kHeaderBytes + cells * 16);
    buf.append(kMagic, 4);
    put_le<std::uint32_t>(buf, kSpectrogramVersion);
    put_le<std::uint64_t>(buf, s.n_freq());
    put_le<std::uint64_t>(buf, s.n_time());
    put_le<double>(buf, s.dt);
    put_le<double>(buf, s.wavelet.center_frequency());
    const double* data = reinterpret_cast<const double*>(s.values.data());
    if constexpr (std::endian::native == std::endian::little) {
        buf.append(reinterpret_cast<const char*>(data), cells * 16);
    } else {
        for (std::size_t i = 0; i < 2 * cells; ++i) put_le<double>(buf, data[i]);
    }
    write_text(files.binary, buf);
    json side = spectrogram_sidecar(s, files.binary.filename().string(), sha256_hex(buf));
    if (extra.is_object()) {
        for (const auto& [k, v] : extra.items()) side[k] = v;
    }
    write_json(files.sidecar, side);
}

Spectrogram read_spectrogram(const fs::path& sidecar) {
    const json side = read_json(sidecar);
    try {
        if (side.at("format") != "WSPC") throw ValidationError(sidecar.string() + ": not a spectrogram sidecar");
        const fs::path bin = sidecar.parent_path() / side.at("binary").get<std::string>();
        const std::string buf = read_text(bin);
        if (buf.size() < kHeaderBytes || std::memcmp(buf.data(), kMagic, 4) != 0)
            throw ValidationError(bin.string() + ": bad spectrogram magic");
        const auto version = get_le<std::uint32_t>(buf.data() + 4);
        if (version != kSpectrogramVersion)
            throw ValidationError(bin.string() + ": unsupported spectrogram version " + std::to_string(version));
        const auto n_freq = static_cast<std::size_t>(get_le<std::uint64_t>(buf.data() + 8));
        const auto n_time = static_cast<std::size_t>(get_le<std::uint64_t>(buf.data() + 16));
        const double dt = get_le<double>(buf.data() + 24);
        const double wc = get_le<double>(buf.data() + 32);
        if (n_freq == 0 || n_time == 0 || buf.size() != kHeaderBytes + n_freq * n_time * 16)
            throw ValidationError(bin.string() + ": size does not match header");
        if (side.contains("sha256") && side["sha256"].get<std::string>() != sha256_hex(buf))
            throw ValidationError(bin.string() + ": content hash does not match sidecar");
        auto hz = side.at("grid").at("hz").get<std::vector<double>>();
        if (hz.size() != n_freq || side.at("n_time").get<std::size_t>() != n_time)
            throw ValidationError(sidecar.string() + ": grid does not match binary header");
        const auto spacing =
            side["grid"].value("spacing", "linear") == "logarithmic" ? GridSpacing::logarithmic : GridSpacing::linear;
        WaveletSpec spec(wc);
        Spectrogram s{SpectrumMatrix(static_cast<Eigen::Index>(n_freq), static_cast<Eigen::Index>(n_time)),
                      FrequencyGrid(std::move(hz), spacing), dt, spec, cone_of_influence(n_time, dt, spec)};
        double* data = reinterpret_cast<double*>(s.values.data());
        for (std::size_t i = 0; i < 2 * n_freq * n_time; ++i) data[i] = get_le<double>(buf.data() + kHeaderBytes + 8 * i);
        return s;
    } catch (const json::exception& e) {
        throw ValidationError(sidecar.string() + ": malformed sidecar: " + e.what());
    }
}

json regions_to_json(const std::vector<HarmonicRegion>& regions) {
    json out = json::array();
    for (const auto& r : regions)
        out.push_back({{"id", r.id}, {"polyline", json::array({vertices_json(r.lower), vertices_json(r.upper)})}});
    return out;
}

std::vector<HarmonicRegion> regions_from_json(const json& j) {
    if (!j.is_array()) throw ValidationError("regions: expected a JSON list");
    std::vector<HarmonicRegion> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto& r = j[i];
        const std::string where = "regions[" + std::to_string(i) + "]";
        if (!r.is_object() || !r.contains("id") || !r["id"].is_number_integer())
            throw ValidationError(where + ": needs an integer id");
        if (!r.contains("polyline") || !r["polyline"].is_array() || r["polyline"].size() != 2)
            throw ValidationError(where + ": polyline must hold a lower and an upper boundary");
        HarmonicRegion h;
        h.id = r["id"].get<int>();
        h.lower = polyline_from_json(r["polyline"][0], where + ".lower");
        h.upper = polyline_from_json(r["polyline"][1], where + ".upper");
        out.push_back(std::move(h));
    }
    return out;
}

void write_frf_csv(const fs::path& path, const FrfMatrix& h) {
    std::string text = "freq_hz,out_dof,in_dof,re,im,kind\n";
    const std::string kind(to_string(h.kind));
    for (std::size_t f = 0; f < h.n_freq(); ++f) {
        for (std::size_t o = 0; o < h.n_out(); ++o) {
            for (std::size_t i = 0; i < h.n_in(); ++i) {
                const cplx v = h.values[f](static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i));
                text += format_double(h.freqs_hz[f]) + "," + std::to_string(h.out_dofs[o]) + "," +
                        std::to_string(h.in_dofs[i]) + "," + format_double(v.real()) + "," +
                        format_double(v.imag()) + "," + kind + "\n";
            }
        }
    }
    write_text(path, text);
}

FrfMatrix read_frf_csv(const fs::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty() || trim(lines.front()) != "freq_hz,out_dof,in_dof,re,im,kind")
        throw ValidationError(path.string() + ": expected header freq_hz,out_dof,in_dof,re,im,kind");
    struct Row {
        double f;
        std::size_t o, i;
        cplx v;
    };
    std::vector<Row> rows;
    FrfMatrix h;
    std::string kind;
    auto note = [](std::vector<std::size_t>& list, std::size_t v) {
        if (std::find(list.begin(), list.end(), v) == list.end()) list.push_back(v);
    };
    for (std::size_t k = 1; k < lines.size(); ++k) {
        const auto fields = split(lines[k], ',');
        if (fields.size() != 6) throw ValidationError(path.string() + ":" + std::to_string(k + 1) + ": expected 6 fields");
        Row r{parse_double(fields[0], path, k + 1), parse_index(fields[1], path, k + 1),
              parse_index(fields[2], path, k + 1),
              cplx(parse_double(fields[3], path, k + 1), parse_double(fields[4], path, k + 1))};
        const std::string kd = trim(fields[5]);
        if (kind.empty()) kind = kd;
        if (kd != kind) throw ValidationError(path.string() + ": mixed FRF kinds");
        if (h.freqs_hz.empty() || h.freqs_hz.back() != r.f) {
            if (!h.freqs_hz.empty() && r.f < h.freqs_hz.back())
                throw ValidationError(path.string() + ": frequencies must be non-decreasing");
            h.freqs_hz.push_back(r.f);
        }
        note(h.out_dofs, r.o);
        note(h.in_dofs, r.i);
        rows.push_back(r);
    }
    if (rows.empty()) throw ValidationError(path.string() + ": no FRF rows");
    h.kind = frf_kind_from_string(kind);
    if (rows.size() != h.n_freq() * h.n_out() * h.n_in())
        throw ValidationError(path.string() + ": FRF rows do not form a complete frequency x output x input table");
    const auto index_of = [](const std::vector<std::size_t>& list, std::size_t v) {
        return static_cast<Eigen::Index>(std::find(list.begin(), list.end(), v) - list.begin());
    };
    const Eigen::MatrixXcd nan_block = Eigen::MatrixXcd::Constant(
        static_cast<Eigen::Index>(h.n_out()), static_cast<Eigen::Index>(h.n_in()),
        cplx(std::numeric_limits<double>::quiet_NaN(), 0.0));
    h.values.assign(h.n_freq(), nan_block);
    std::size_t fi = 0;
    for (const auto& r : rows) {
        while (h.freqs_hz[fi] != r.f) ++fi;
        h.values[fi](index_of(h.out_dofs, r.o), index_of(h.in_dofs, r.i)) = r.v;
    }
    for (const auto& m : h.values) {
        if (!m.allFinite()) throw ValidationError(path.string() + ": FRF table has missing or repeated entries");
    }
    return h;
}

}  // namespace wavemodal
