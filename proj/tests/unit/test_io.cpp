#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <random>

#include "test_support.hpp"
#include "wavemodal/bench.hpp"
#include "wavemodal/digest.hpp"
#include "wavemodal/error.hpp"
#include "wavemodal/io.hpp"

using namespace wavemodal;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

Spectrogram small_spectrogram() {
    const auto x = add(tone(2.3, 1.0, 0.0, 500, 0.02), tone(4.0, 0.5, 0.2, 500, 0.02));
    return cwt(TimeSeries(x, 0.02), FrequencyGrid::linear(1.0, 6.0, 40), WaveletSpec(50.0));
}

}  // namespace

TEST_CASE("sha256 of known strings") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("formatted doubles read back exactly") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
        const double v = u(rng) * std::pow(10.0, static_cast<double>(i % 30) - 15.0);
        CHECK(std::stod(format_double(v)) == v);
    }
    CHECK(format_double(0.1) == "0.1");
}

TEST_CASE("time series CSV round trip") {
    ScratchDir dir("io_ts");
    std::mt19937 rng(2);
    std::normal_distribution<double> g;
    std::vector<double> a(300), b(300);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = g(rng), b[i] = 1e-9 * g(rng);
    const std::vector<TimeSeries> in{TimeSeries(a, 0.02, "dof0", SignalKind::velocity),
                                     TimeSeries(b, 0.02, "force0", SignalKind::force)};
    const auto path = dir.path() / "ts.csv";
    write_time_series_csv(path, in);
    CHECK(read_text(path).rfind("time_s,dof0:velocity,force0:force\n", 0) == 0);
    const auto out = read_time_series_csv(path);
    REQUIRE(out.size() == 2);
    CHECK(out[0].values() == a);
    CHECK(out[1].values() == b);
    CHECK(out[0].dt() == 0.02);
    CHECK(out[1].kind() == SignalKind::force);
    CHECK(out[1].label() == "force0");
    CHECK_FALSE(fs::exists(dir.path() / "ts.csv.partial"));
}

TEST_CASE("malformed time series CSV is rejected with a location") {
    ScratchDir dir("io_bad");
    const auto p = dir.path() / "bad.csv";
    write_file(p, "time_s,dof0:velocity\n0,1\n0.02,abc\n0.04,2\n");
    CHECK_THROWS_AS(read_time_series_csv(p), ValidationError);
    CHECK_THROWS_WITH(read_time_series_csv(p), Catch::Matchers::ContainsSubstring(":3"));
    write_file(p, "time_s,dof0\n0,1\n0.02,1\n");
    CHECK_THROWS_WITH(read_time_series_csv(p), Catch::Matchers::ContainsSubstring("label:kind"));
    write_file(p, "time_s,dof0:velocity\n0,1\n0.02,1\n0.05,1\n");
    CHECK_THROWS_WITH(read_time_series_csv(p), Catch::Matchers::ContainsSubstring("uniformly"));
    write_file(p, "time_s,dof0:velocity,dof1:velocity\n0,1,2\n0.02,1\n");
    CHECK_THROWS_AS(read_time_series_csv(p), ValidationError);
    write_file(p, "time_s,dof0:banana\n0,1\n0.02,1\n");
    CHECK_THROWS_AS(read_time_series_csv(p), ValidationError);
    CHECK_THROWS_AS(read_time_series_csv(dir.path() / "missing.csv"), ValidationError);
}

TEST_CASE("spectrogram container round trip") {
    ScratchDir dir("io_spec");
    const auto s = small_spectrogram();
    const auto stem = dir.path() / "drive0_dof1";
    write_spectrogram(stem, s, {{"drive", 0}, {"dof", 1}});
    const auto files = spectrogram_paths(stem);
    REQUIRE(fs::exists(files.binary));
    REQUIRE(fs::exists(files.sidecar));
    CHECK(fs::file_size(files.binary) == 4 + 4 + 8 + 8 + 8 + 8 + s.n_freq() * s.n_time() * 16);

    const auto back = read_spectrogram(files.sidecar);
    CHECK(back.values == s.values);
    CHECK(back.grid.hz() == s.grid.hz());
    CHECK(back.dt == s.dt);
    CHECK(back.wavelet == s.wavelet);
    CHECK(back.coi == s.coi);

    const auto side = read_json(files.sidecar);
    CHECK(side.at("format") == "WSPC");
    CHECK(side.at("n_freq") == 40);
    CHECK(side.at("n_time") == 500);
    CHECK(side.at("sha256") == sha256_file(files.binary));
    CHECK(side.at("drive") == 0);
    CHECK(side.at("coi_hz").front().is_null());
    CHECK(side.at("coi_summary").contains("lowest_valid_hz"));

    // Header layout: magic then little-endian version.
    std::ifstream bin(files.binary, std::ios::binary);
    char head[8];
    bin.read(head, 8);
    CHECK(std::string(head, 4) == "WSPC");
    CHECK(static_cast<unsigned char>(head[4]) == kSpectrogramVersion);
}

TEST_CASE("corrupted spectrogram containers are rejected") {
    ScratchDir dir("io_corrupt");
    const auto stem = dir.path() / "s";
    write_spectrogram(stem, small_spectrogram());
    const auto files = spectrogram_paths(stem);
    {
        std::fstream f(files.binary, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(100);
        f.put('\x7f');
    }
    CHECK_THROWS_WITH(read_spectrogram(files.sidecar), Catch::Matchers::ContainsSubstring("hash"));
    write_spectrogram(stem, small_spectrogram());
    fs::resize_file(files.binary, fs::file_size(files.binary) - 16);
    CHECK_THROWS_AS(read_spectrogram(files.sidecar), ValidationError);
    write_file(files.sidecar, "{\"format\": \"other\"}");
    CHECK_THROWS_AS(read_spectrogram(files.sidecar), ValidationError);
}

TEST_CASE("regions JSON round trip and validation") {
    const std::vector<HarmonicRegion> regions{
        {1, Polyline::constant(1.0), Polyline({{0.0, 2.9}, {30.0, 3.1}})},
        {2, Polyline({{0.0, 2.9}, {30.0, 3.1}}), Polyline::constant(6.1)}};
    const auto j = regions_to_json(regions);
    CHECK(j[0].at("id") == 1);
    CHECK(j[0].at("polyline").size() == 2);
    const auto back = regions_from_json(j);
    REQUIRE(back.size() == 2);
    CHECK(back[0].upper.vertices() == regions[0].upper.vertices());
    CHECK(back[1].lower.at(15.0) == Catch::Approx(3.0));
    CHECK_THROWS_AS(regions_from_json(nlohmann::json::object()), ValidationError);
    CHECK_THROWS_AS(regions_from_json(nlohmann::json::parse(R"([{"id": 1, "polyline": [[[0, 1]]]}])")),
                    ValidationError);
    CHECK_THROWS_AS(regions_from_json(nlohmann::json::parse(R"([{"polyline": [[[0, 1]], [[0, 2]]]}])")),
                    ValidationError);
    CHECK_THROWS_AS(regions_from_json(nlohmann::json::parse(R"([{"id": 1, "polyline": [[[0]], [[0, 2]]]}])")),
                    ValidationError);
}

TEST_CASE("FRF CSV round trip") {
    ScratchDir dir("io_frf");
    const auto h = convert_frf(direct_frf(build_three_dof(BenchConfig{}), linear_frequencies(1.0, 6.0, 51)),
                               FrfKind::mobility)
                       .select_inputs({1});
    const auto p = dir.path() / "frf.csv";
    write_frf_csv(p, h);
    CHECK(read_text(p).rfind("freq_hz,out_dof,in_dof,re,im,kind\n", 0) == 0);
    const auto back = read_frf_csv(p);
    CHECK(back.kind == FrfKind::mobility);
    CHECK(back.freqs_hz == h.freqs_hz);
    CHECK(back.out_dofs == h.out_dofs);
    CHECK(back.in_dofs == h.in_dofs);
    for (std::size_t f = 0; f < h.n_freq(); ++f) CHECK(back.values[f] == h.values[f]);
}

TEST_CASE("malformed FRF CSV is rejected") {
    ScratchDir dir("io_frf_bad");
    const auto p = dir.path() / "frf.csv";
    write_file(p, "freq,out,in\n");
    CHECK_THROWS_AS(read_frf_csv(p), ValidationError);
    write_file(p, "freq_hz,out_dof,in_dof,re,im,kind\n1,0,0,1,0,receptance\n1,1,0,1,0,receptance\n2,0,0,1,0,receptance\n");
    CHECK_THROWS_WITH(read_frf_csv(p), Catch::Matchers::ContainsSubstring("complete"));
    write_file(p, "freq_hz,out_dof,in_dof,re,im,kind\n2,0,0,1,0,receptance\n1,0,0,1,0,receptance\n");
    CHECK_THROWS_WITH(read_frf_csv(p), Catch::Matchers::ContainsSubstring("non-decreasing"));
    write_file(p, "freq_hz,out_dof,in_dof,re,im,kind\n1,0,0,1,0,receptance\n2,0,0,1,0,mobility\n");
    CHECK_THROWS_WITH(read_frf_csv(p), Catch::Matchers::ContainsSubstring("mixed"));
    write_file(p, "freq_hz,out_dof,in_dof,re,im,kind\n1,x,0,1,0,receptance\n");
    CHECK_THROWS_AS(read_frf_csv(p), ValidationError);
}

TEST_CASE("JSON files are written atomically with sorted keys") {
    ScratchDir dir("io_json");
    const auto p = dir.path() / "a.json";
    write_json(p, {{"b", 1}, {"a", {1.5, 2}}});
    CHECK(read_text(p) == "{\n  \"a\": [\n    1.5,\n    2\n  ],\n  \"b\": 1\n}\n");
    CHECK(read_json(p).at("b") == 1);
    write_file(p, "{not json");
    CHECK_THROWS_AS(read_json(p), ValidationError);
}
