#include "wavemodal/api.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <sstream>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "wavemodal/error.hpp"
#include "wavemodal/frf.hpp"
#include "wavemodal/io.hpp"
#include "wavemodal/modal_set.hpp"
#include "wavemodal/pipeline.hpp"

namespace wavemodal {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

ApiResponse json_response(int status, const json& body) { return {status, "application/json", body.dump(), {}}; }

ApiResponse error_response(int status, const std::string& message, json extra = json::object()) {
    extra["error"] = message;
    return json_response(status, extra);
}

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::string part;
    std::istringstream in(path);
    while (std::getline(in, part, '/')) {
        if (!part.empty()) parts.push_back(part);
    }
    return parts;
}

std::size_t parse_index(const std::string& s, const std::string& what) {
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); }))
        throw ValidationError(what + " must be a non-negative integer");
    return std::stoul(s);
}

double query_double(const ApiRequest& r, const std::string& key, double fallback) {
    const auto it = r.query.find(key);
    if (it == r.query.end()) return fallback;
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(it->second, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != it->second.size() || !std::isfinite(v)) throw ValidationError("query parameter " + key + " is not a number");
    return v;
}

std::size_t query_index(const ApiRequest& r, const std::string& key, std::size_t fallback) {
    const auto it = r.query.find(key);
    return it == r.query.end() ? fallback : parse_index(it->second, "query parameter " + key);
}

json modal_summary(const ModalSet& set) {
    json modes = json::array();
    for (const auto& m : set.modes) {
        const Eigen::VectorXd mo = m.moduli();
        const Eigen::VectorXd ph = m.phases_deg();
        modes.push_back({{"f_hz", m.f_hz},
                         {"zeta", m.zeta},
                         {"moduli", std::vector<double>(mo.begin(), mo.end())},
                         {"phases_deg", std::vector<double>(ph.begin(), ph.end())}});
    }
    return modes;
}

json modal_payload(const fs::path& path) {
    const ModalSet set = modal_set_from_json(read_json(path));
    return {{"modal", to_json(set)}, {"hash", content_hash(set)}, {"summary", modal_summary(set)}};
}

json frf_columns(const FrfMatrix& h, std::size_t in_dof) {
    const auto col = std::find(h.in_dofs.begin(), h.in_dofs.end(), in_dof);
    if (col == h.in_dofs.end()) throw ValidationError("FRF has no column for input DOF " + std::to_string(in_dof));
    const auto c = static_cast<Eigen::Index>(col - h.in_dofs.begin());
    json rows = json::array();
    for (std::size_t o = 0; o < h.n_out(); ++o) {
        std::vector<double> re, im;
        for (const auto& m : h.values) {
            re.push_back(m(static_cast<Eigen::Index>(o), c).real());
            im.push_back(m(static_cast<Eigen::Index>(o), c).imag());
        }
        rows.push_back({{"out_dof", h.out_dofs[o]}, {"re", re}, {"im", im}});
    }
    return {{"freqs_hz", h.freqs_hz}, {"kind", to_string(h.kind)}, {"in_dof", in_dof}, {"entries", rows}};
}

}  // namespace

ApiService::ApiService(fs::path run_dir) : dir_(std::move(run_dir)) {
    if (!fs::exists(dir_ / run_files::config()))
        throw ValidationError(dir_.string() + " is not a run directory (no config.json)");
}

std::shared_ptr<const Spectrogram> ApiService::spectrogram(std::size_t drive, std::size_t dof) {
    {
        std::shared_lock lock(cache_mutex_);
        const auto it = spectra_.find({drive, dof});
        if (it != spectra_.end()) return it->second;
    }
    const auto sidecar = spectrogram_paths(dir_ / run_files::spectrogram_stem(drive, dof)).sidecar;
    if (!fs::exists(sidecar)) return nullptr;
    auto s = std::make_shared<const Spectrogram>(read_spectrogram(sidecar));
    std::unique_lock lock(cache_mutex_);
    spectra_[{drive, dof}] = s;
    return s;
}

ApiResponse ApiService::status() {
    json out;
    const auto manifest_path = dir_ / run_files::manifest();
    const json manifest = fs::exists(manifest_path) ? read_json(manifest_path) : json::object();
    const json cfg = read_json(dir_ / run_files::config());
    out["status"] = manifest.value("status", "not_started");
    out["busy"] = busy_.load();
    out["drive_points"] = cfg.at("drive_points");
    out["n_dof"] = cfg.at("channel_map").size();
    out["pending_drives"] = manifest.value("pending_drives", json::array());
    out["config_hash"] = manifest.value("config_hash", "");
    out["version"] = tool_version();
    {
        std::lock_guard lock(error_mutex_);
        out["last_error"] = last_error_.empty() ? json(nullptr) : json(last_error_);
    }
    return json_response(200, out);
}

ApiResponse ApiService::post_regions(std::size_t drive, const std::string& body) {
    const auto cfg = load_run_config(dir_);
    if (std::find(cfg.drive_points.begin(), cfg.drive_points.end(), drive) == cfg.drive_points.end())
        return error_response(404, "drive " + std::to_string(drive) + " is not part of this run");
    json parsed;
    try {
        parsed = json::parse(body);
    } catch (const json::parse_error& e) {
        return error_response(422, std::string("malformed JSON: ") + e.what(), {{"kind", "malformed"}});
    }
    std::vector<HarmonicRegion> regions;
    try {
        regions = regions_from_json(parsed);
    } catch (const ValidationError& e) {
        return error_response(422, e.what(), {{"kind", "malformed"}});
    }
    const auto spec = spectrogram(drive, 0);
    if (!spec) return error_response(409, "spectrograms for drive " + std::to_string(drive) + " are not available yet");
    if (regions.empty()) return error_response(422, "at least one region is required", {{"kind", "empty"}});
    if (auto issue = check_regions(regions, spec->n_time(), spec->dt, &spec->grid)) {
        return error_response(422, issue->message,
                              {{"kind", issue->kind}, {"regions", issue->region_ids}, {"time_s", issue->time_s}});
    }

    std::lock_guard writer(writer_);
    busy_ = true;
    struct Reset {
        std::atomic<bool>& flag;
        ~Reset() { flag = false; }
    } reset{busy_};
    try {
        write_json(dir_ / run_files::regions(drive), regions_to_json(regions));
        const json manifest = rerun_from_identify(dir_, drive);
        {
            std::lock_guard lock(error_mutex_);
            last_error_.clear();
        }
        json out = {{"status", manifest.value("status", "")}, {"drive", drive}};
        out["drive_modal"] = modal_payload(dir_ / run_files::modal(drive));
        if (fs::exists(dir_ / run_files::fused_modal()) && manifest.value("status", "") == "complete") {
            out["fused_modal"] = modal_payload(dir_ / run_files::fused_modal());
            const json v = read_json(dir_ / run_files::validation());
            out["reconstruction_error"] = v.at("reconstruction_error").at("total");
        }
        return json_response(200, out);
    } catch (const StageError& e) {
        {
            std::lock_guard lock(error_mutex_);
            last_error_ = e.what();
        }
        return error_response(e.exit_code() == 2 ? 422 : 500, e.what(),
                              {{"stage", e.stage()}, {"artifacts", e.artifacts()}});
    }
}

ApiResponse ApiService::handle(const ApiRequest& request) {
    const auto parts = split_path(request.path);
    if (parts.size() < 3 || parts[0] != "api" || parts[1] != "v1") return error_response(404, "unknown endpoint");
    const std::string& what = parts[2];
    const std::size_t n = parts.size();
    const bool get = request.method == "GET";
    const bool post = request.method == "POST";
    try {
        if (what == "status" && n == 3) {
            if (!get) return error_response(405, "method not allowed");
            return status();
        }
        if (what == "manifest" && n == 3) {
            if (!get) return error_response(405, "method not allowed");
            const auto p = dir_ / run_files::manifest();
            if (!fs::exists(p)) return error_response(404, "no manifest yet");
            return json_response(200, read_json(p));
        }
        if (what == "validation" && n == 3) {
            if (!get) return error_response(405, "method not allowed");
            const auto p = dir_ / run_files::validation();
            if (!fs::exists(p)) return error_response(404, "validation has not run");
            return json_response(200, read_json(p));
        }
        if (what == "spectrograms") {
            if (!get) return error_response(405, "method not allowed");
            if (n == 3) {
                const auto cfg = load_run_config(dir_);
                json list = json::array();
                for (auto d : cfg.drive_points) {
                    for (std::size_t i = 0; i < cfg.n_dof(); ++i) {
                        if (fs::exists(spectrogram_paths(dir_ / run_files::spectrogram_stem(d, i)).sidecar))
                            list.push_back({{"drive", d}, {"dof", i}});
                    }
                }
                return json_response(200, list);
            }
            if (n < 5 || n > 6 || (n == 6 && parts[5] != "tile")) return error_response(404, "unknown endpoint");
            const std::size_t drive = parse_index(parts[3], "drive");
            const std::size_t dof = parse_index(parts[4], "dof");
            const auto sidecar = spectrogram_paths(dir_ / run_files::spectrogram_stem(drive, dof)).sidecar;
            if (!fs::exists(sidecar)) return error_response(404, "no spectrogram for this drive and DOF");
            if (n == 5) return json_response(200, read_json(sidecar));

            const auto s = spectrogram(drive, dof);
            const double t0 = query_double(request, "t0", 0.0);
            const double t1 = query_double(request, "t1", s->dt * static_cast<double>(s->n_time() - 1));
            const double f0 = query_double(request, "f0", s->grid.min());
            const double f1 = query_double(request, "f1", s->grid.max());
            if (!(t1 >= t0) || !(f1 >= f0)) throw ValidationError("tile range is empty");
            const auto c0 = static_cast<std::size_t>(std::max(0.0, std::ceil(t0 / s->dt)));
            const auto c1 = std::min(s->n_time() - 1, static_cast<std::size_t>(std::floor(t1 / s->dt)));
            const auto& hz = s->grid.hz();
            const auto r0 = static_cast<std::size_t>(std::lower_bound(hz.begin(), hz.end(), f0) - hz.begin());
            const auto r1 = static_cast<std::size_t>(std::upper_bound(hz.begin(), hz.end(), f1) - hz.begin());
            if (c0 > c1 || r0 >= r1) throw ValidationError("tile range holds no samples");
            const std::size_t cols_in = c1 - c0 + 1;
            const std::size_t rows_in = r1 - r0;
            const std::size_t nt = std::min(cols_in, std::clamp<std::size_t>(query_index(request, "nt", 512), 1, 4096));
            const std::size_t nf = std::min(rows_in, std::clamp<std::size_t>(query_index(request, "nf", 256), 1, 4096));
            std::string bytes;
            bytes.reserve(nt * nf * 4);
            // Block maximum keeps narrow ridges visible after downsampling.
            for (std::size_t i = 0; i < nf; ++i) {
                const std::size_t ra = r0 + i * rows_in / nf;
                const std::size_t rb = r0 + (i + 1) * rows_in / nf;
                for (std::size_t k = 0; k < nt; ++k) {
                    const std::size_t ca = c0 + k * cols_in / nt;
                    const std::size_t cb = c0 + (k + 1) * cols_in / nt;
                    double peak = 0.0;
                    for (std::size_t r = ra; r < rb; ++r) {
                        for (std::size_t c = ca; c < cb; ++c)
                            peak = std::max(peak, std::abs(s->values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))));
                    }
                    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(peak));
                    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
                }
            }
            ApiResponse resp{200, "application/octet-stream", std::move(bytes), {}};
            resp.headers["X-Tile-Rows"] = std::to_string(nf);
            resp.headers["X-Tile-Cols"] = std::to_string(nt);
            resp.headers["X-Tile-Time-Range"] =
                format_double(static_cast<double>(c0) * s->dt) + "," + format_double(static_cast<double>(c1) * s->dt);
            resp.headers["X-Tile-Freq-Range"] = format_double(hz[r0]) + "," + format_double(hz[r1 - 1]);
            resp.headers["X-Tile-Encoding"] = "float32-le row-major, rows ascending in frequency, block maximum of |X|";
            return resp;
        }
        if (what == "regions" && n == 4) {
            const std::size_t drive = parse_index(parts[3], "drive");
            if (post) return post_regions(drive, request.body);
            if (!get) return error_response(405, "method not allowed");
            const auto p = dir_ / run_files::regions(drive);
            if (!fs::exists(p)) return error_response(404, "no regions for drive " + std::to_string(drive));
            return json_response(200, read_json(p));
        }
        if (what == "components" && n == 4) {
            if (!get) return error_response(405, "method not allowed");
            const std::size_t drive = parse_index(parts[3], "drive");
            const auto p = dir_ / run_files::components(drive);
            if (!fs::exists(p)) return error_response(404, "no components for drive " + std::to_string(drive));
            const auto series = read_time_series_csv(p);
            const std::size_t max_points = std::max<std::size_t>(2, query_index(request, "max_points", 2000));
            const std::size_t stride = (series.front().size() + max_points - 1) / max_points;
            std::vector<double> t;
            for (std::size_t i = 0; i < series.front().size(); i += stride) t.push_back(static_cast<double>(i) * series.front().dt());
            json list = json::array();
            for (const auto& s : series) {
                std::vector<double> v;
                for (std::size_t i = 0; i < s.size(); i += stride) v.push_back(s[i]);
                list.push_back({{"label", s.label()}, {"kind", to_string(s.kind())}, {"values", v}});
            }
            return json_response(200, {{"drive", drive}, {"stride", stride}, {"time_s", t}, {"series", list}});
        }
        if (what == "modal" && (n == 3 || n == 4)) {
            if (!get) return error_response(405, "method not allowed");
            const auto p = n == 3 ? dir_ / run_files::fused_modal() : dir_ / run_files::modal(parse_index(parts[3], "drive"));
            if (!fs::exists(p)) return error_response(404, "modal set not available");
            return json_response(200, modal_payload(p));
        }
        if (what == "frf" && n == 4) {
            if (!get) return error_response(405, "method not allowed");
            const std::size_t drive = parse_index(parts[3], "drive");
            const auto mp = dir_ / run_files::measured_frf(drive);
            if (!fs::exists(mp)) return error_response(404, "no measured FRF for drive " + std::to_string(drive));
            json out = {{"drive", drive},
                        {"measured", frf_columns(convert_frf(read_frf_csv(mp), FrfKind::receptance), drive)}};
            const auto rp = dir_ / run_files::reconstructed_frf();
            out["reconstructed"] = fs::exists(rp) ? frf_columns(read_frf_csv(rp), drive) : json(nullptr);
            return json_response(200, out);
        }
        return error_response(404, "unknown endpoint");
    } catch (const ValidationError& e) {
        return error_response(post ? 422 : 400, e.what());
    } catch (const NumericalError& e) {
        return error_response(500, e.what());
    } catch (const std::exception& e) {
        return error_response(500, e.what());
    }
}

void serve_api(const fs::path& run_dir, const std::string& host, int port) {
    ApiService service(run_dir);
    httplib::Server server;
    auto bridge = [&service](const httplib::Request& req, httplib::Response& res) {
        ApiRequest r{req.method, req.path, {}, req.body};
        for (const auto& [k, v] : req.params) r.query.emplace(k, v);
        const ApiResponse out = service.handle(r);
        res.status = out.status;
        for (const auto& [k, v] : out.headers) res.set_header(k, v);
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_content(out.body, out.content_type);
    };
    server.Get(R"(/api/v1/.*)", bridge);
    server.Post(R"(/api/v1/.*)", bridge);
    server.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });
    if (!server.listen(host, port)) throw ValidationError("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace wavemodal
