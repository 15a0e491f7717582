#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <memory>

#include "test_support.hpp"
#include "wavemodal/api.hpp"
#include "wavemodal/io.hpp"
#include "wavemodal/pipeline.hpp"

using namespace wavemodal;
using namespace testing_support;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ApiRun {
    ScratchDir dir{"api_run"};
    fs::path run;
    std::unique_ptr<ApiService> api;
};

ApiRun& api_run() {
    static auto r = [] {
        auto a = std::make_unique<ApiRun>();
        PipelineConfig cfg;
        cfg.channel_map = {{"dof0", 0}, {"dof1", 1}, {"dof2", 2}};
        cfg.drive_points = {0};
        cfg.output_dir = a->dir.path() / "run";
        run_pipeline(cfg);
        a->run = cfg.output_dir;
        a->api = std::make_unique<ApiService>(a->run);
        return a;
    }();
    return *r;
}

ApiResponse call(const std::string& method, const std::string& path, std::map<std::string, std::string> query = {},
                 std::string body = {}) {
    return api_run().api->handle({method, path, std::move(query), std::move(body)});
}

json body(const ApiResponse& r) { return json::parse(r.body); }

float tile_value(const ApiResponse& r, std::size_t row, std::size_t col) {
    const std::size_t cols = std::stoul(r.headers.at("X-Tile-Cols"));
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(r.body[4 * (row * cols + col) + static_cast<std::size_t>(b)])) << (8 * b);
    return std::bit_cast<float>(bits);
}

}  // namespace

TEST_CASE("status and manifest") {
    const auto s = call("GET", "/api/v1/status");
    REQUIRE(s.status == 200);
    const auto j = body(s);
    CHECK(j.at("status") == "complete");
    CHECK(j.at("busy") == false);
    CHECK(j.at("drive_points") == json::array({0}));
    CHECK(j.at("n_dof") == 3);
    CHECK(j.at("last_error").is_null());
    const auto m = call("GET", "/api/v1/manifest");
    CHECK(body(m) == read_json(api_run().run / run_files::manifest()));
    CHECK(call("POST", "/api/v1/status").status == 405);
    CHECK(call("GET", "/api/v2/status").status == 404);
    CHECK(call("GET", "/api/v1/nothing").status == 404);
}

TEST_CASE("spectrogram listing and sidecar") {
    const auto l = body(call("GET", "/api/v1/spectrograms"));
    REQUIRE(l.size() == 3);
    CHECK(l[2] == json({{"drive", 0}, {"dof", 2}}));
    const auto side = call("GET", "/api/v1/spectrograms/0/1");
    REQUIRE(side.status == 200);
    CHECK(body(side).at("n_freq") == 400);
    CHECK(call("GET", "/api/v1/spectrograms/0/7").status == 404);
    CHECK(call("GET", "/api/v1/spectrograms/x/1").status == 400);
}

TEST_CASE("full resolution tile carries the magnitudes") {
    const auto spec = read_spectrogram(spectrogram_paths(api_run().run / run_files::spectrogram_stem(0, 1)).sidecar);
    const auto t = call("GET", "/api/v1/spectrograms/0/1/tile", {{"nt", "4096"}, {"nf", "4096"}});
    REQUIRE(t.status == 200);
    CHECK(t.content_type == "application/octet-stream");
    const std::size_t rows = std::stoul(t.headers.at("X-Tile-Rows")), cols = std::stoul(t.headers.at("X-Tile-Cols"));
    CHECK(rows == spec.n_freq());
    CHECK(cols == spec.n_time());
    CHECK(t.body.size() == 4 * rows * cols);
    for (const auto& [r, c] : {std::pair<std::size_t, std::size_t>{0, 0}, {123, 456}, {399, 2999}, {250, 1000}})
        CHECK(tile_value(t, r, c) == static_cast<float>(std::abs(spec.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)))));
}

TEST_CASE("downsampled tile keeps block maxima inside the requested window") {
    const auto spec = read_spectrogram(spectrogram_paths(api_run().run / run_files::spectrogram_stem(0, 0)).sidecar);
    const auto t = call("GET", "/api/v1/spectrograms/0/0/tile",
                        {{"t0", "10"}, {"t1", "20"}, {"f0", "3"}, {"f1", "5"}, {"nt", "50"}, {"nf", "20"}});
    REQUIRE(t.status == 200);
    CHECK(t.headers.at("X-Tile-Rows") == "20");
    CHECK(t.headers.at("X-Tile-Cols") == "50");
    CHECK(t.headers.at("X-Tile-Time-Range") == "10,20");
    CHECK(t.body.size() == 4 * 20 * 50);

    // Independent block maximum over the same index ranges.
    const auto& hz = spec.grid.hz();
    std::size_t r0 = 0;
    while (hz[r0] < 3.0) ++r0;
    std::size_t r1 = r0;
    while (r1 < hz.size() && hz[r1] <= 5.0) ++r1;
    const std::size_t c0 = 500, c1 = 1000, rows = r1 - r0, cols = c1 - c0 + 1;
    for (const auto& [i, k] : {std::pair<std::size_t, std::size_t>{0, 0}, {7, 13}, {19, 49}}) {
        double peak = 0.0;
        for (std::size_t r = r0 + i * rows / 20; r < r0 + (i + 1) * rows / 20; ++r)
            for (std::size_t c = c0 + k * cols / 50; c < c0 + (k + 1) * cols / 50; ++c)
                peak = std::max(peak, std::abs(spec.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))));
        CHECK(tile_value(t, i, k) == static_cast<float>(peak));
    }
    CHECK(call("GET", "/api/v1/spectrograms/0/0/tile", {{"t0", "5"}, {"t1", "4"}}).status == 400);
    CHECK(call("GET", "/api/v1/spectrograms/0/0/tile", {{"nt", "abc"}}).status == 400);
}

TEST_CASE("modal, frf, components and validation payloads") {
    const auto fused = body(call("GET", "/api/v1/modal"));
    CHECK(fused.at("summary").size() == 3);
    CHECK(fused.at("hash").is_string());
    CHECK(body(call("GET", "/api/v1/modal/0")).at("summary").size() == 3);
    CHECK(call("GET", "/api/v1/modal/5").status == 404);

    const auto frf = body(call("GET", "/api/v1/frf/0"));
    CHECK(frf.at("measured").at("kind") == "receptance");
    CHECK(frf.at("measured").at("entries").size() == 3);
    CHECK_FALSE(frf.at("reconstructed").is_null());

    const auto comp = body(call("GET", "/api/v1/components/0", {{"max_points", "100"}}));
    CHECK(comp.at("time_s").size() <= 100);
    CHECK(comp.at("series").size() > 0);
    CHECK(comp.at("series")[0].at("values").size() == comp.at("time_s").size());

    CHECK(body(call("GET", "/api/v1/validation")).contains("rom"));
}

TEST_CASE("region uploads are checked before anything changes") {
    const auto before = read_text(api_run().run / run_files::regions(0));
    const auto overlap = call("POST", "/api/v1/regions/0", {},
                              R"([{"id": 1, "polyline": [[[0, 2.0]], [[0, 3.5]]]},
                                  {"id": 2, "polyline": [[[0, 3.0]], [[0, 4.5]]]}])");
    CHECK(overlap.status == 422);
    const auto j = body(overlap);
    CHECK(j.at("kind") == "overlap");
    CHECK(j.at("regions") == json::array({1, 2}));
    CHECK(j.at("time_s").is_number());
    CHECK(body(call("POST", "/api/v1/regions/0", {}, "{oops")).at("kind") == "malformed");
    CHECK(body(call("POST", "/api/v1/regions/0", {}, "[]")).at("kind") == "empty");
    CHECK(body(call("POST", "/api/v1/regions/0", {}, R"([{"id": 1, "polyline": [[[0, 0.2]], [[0, 0.5]]]}])"))
              .at("kind") == "out_of_bounds");
    CHECK(call("POST", "/api/v1/regions/4", {}, "[]").status == 404);
    CHECK(call("PUT", "/api/v1/regions/0").status == 405);
    CHECK(read_text(api_run().run / run_files::regions(0)) == before);
    CHECK(call("GET", "/api/v1/regions/0").body == read_json(api_run().run / run_files::regions(0)).dump());
}

TEST_CASE("re-posting the stored regions reproduces the run") {
    const auto fused_before = read_text(api_run().run / run_files::fused_modal());
    const auto regions = call("GET", "/api/v1/regions/0").body;
    const auto r = call("POST", "/api/v1/regions/0", {}, regions);
    REQUIRE(r.status == 200);
    const auto j = body(r);
    CHECK(j.at("status") == "complete");
    CHECK(j.contains("drive_modal"));
    CHECK(j.at("reconstruction_error").is_number());
    CHECK(read_text(api_run().run / run_files::fused_modal()) == fused_before);
}
