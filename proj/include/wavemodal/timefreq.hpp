#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "wavemodal/series.hpp"
#include "wavemodal/wavelet.hpp"

namespace wavemodal {

enum class GridSpacing { linear, logarithmic };

/// Strictly increasing positive analysis frequencies in Hz.
class FrequencyGrid {
public:
    FrequencyGrid(std::vector<double> hz, GridSpacing spacing);

    static FrequencyGrid linear(double lo_hz, double hi_hz, std::size_t count);
    static FrequencyGrid logarithmic(double lo_hz, double hi_hz, std::size_t count);

    const std::vector<double>& hz() const { return hz_; }
    double operator[](std::size_t i) const { return hz_[i]; }
    std::size_t size() const { return hz_.size(); }
    double min() const { return hz_.front(); }
    double max() const { return hz_.back(); }
    GridSpacing spacing() const { return spacing_; }
    // Largest spacing between adjacent grid points.
    double resolution() const;

private:
    std::vector<double> hz_;
    GridSpacing spacing_;
};

using SpectrumMatrix =
    Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Complex CWT coefficients, one row per grid frequency and one column per
/// input sample.
struct Spectrogram {
    SpectrumMatrix values;
    FrequencyGrid grid;
    double dt;
    WaveletSpec wavelet;
    // Per time sample: the frequency (Hz) below which the cell is within
    // edge-effect reach of a record boundary. Infinite at the first and
    // last sample.
    std::vector<double> coi;

    std::size_t n_freq() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t n_time() const { return static_cast<std::size_t>(values.cols()); }
    bool coi_valid(std::size_t row, std::size_t col) const { return grid[row] >= coi[col]; }
};

/// Half-width (seconds) of the cone of influence at frequency f_hz:
/// three Gaussian standard deviations of the scaled Morlet envelope.
double coi_half_width(double f_hz, const WaveletSpec& spec);

std::vector<double> cone_of_influence(std::size_t n_time, double dt, const WaveletSpec& spec);

/// Piecewise-linear boundary f(t) in Hz; constant beyond its first and last
/// vertices.
class Polyline {
public:
    Polyline() = default;
    explicit Polyline(std::vector<std::pair<double, double>> vertices);
    static Polyline constant(double f_hz);

    double at(double t) const;
    const std::vector<std::pair<double, double>>& vertices() const { return vertices_; }

private:
    std::vector<std::pair<double, double>> vertices_;
};

struct HarmonicRegion {
    int id = 0;
    Polyline lower;
    Polyline upper;
};

/// Forward CWT evaluated in the frequency domain. The signal is zero-padded to
/// a power of two long enough to suppress circular wrap at the lowest grid
/// frequency.
Spectrogram cwt(const TimeSeries& x, const FrequencyGrid& grid, const WaveletSpec& spec);

/// Inverse CWT over the spectrogram's frequency span, calibrated so that a
/// full-band round trip reproduces band-limited input.
TimeSeries icwt(const Spectrogram& s, std::string label = {},
                SignalKind kind = SignalKind::velocity);

/// Numeric gain applied on top of 1/(wc C) in icwt, obtained once per
/// (grid, dt, wavelet) from a full-band round trip on a reference chirp.
double reconstruction_gain(const FrequencyGrid& grid, double dt, const WaveletSpec& spec);

/// Keeps cells with lower(t) <= f < upper(t), zeroes all others.
Spectrogram mask_region(const Spectrogram& s, const HarmonicRegion& region);

struct RegionIssue {
    std::string kind;  // crossing, duplicate_id, overlap, out_of_bounds
    std::vector<int> region_ids;
    double time_s = 0.0;
    std::string message;
};

/// First problem found in a region set: crossing boundaries, duplicate ids,
/// overlapping pairs (with the first sample time of overlap) and, when a grid
/// is given, regions that contain no grid frequency at any time.
std::optional<RegionIssue> check_regions(const std::vector<HarmonicRegion>& regions, std::size_t n_time,
                                         double dt, const FrequencyGrid* grid = nullptr);

/// Throws ValidationError naming the first overlapping pair and the first
/// sample time at which they overlap.
void validate_regions(const std::vector<HarmonicRegion>& regions, std::size_t n_time, double dt);

/// One component per region, ordered by region id.
std::vector<TimeSeries> decompose_regions(const TimeSeries& x,
                                          const std::vector<HarmonicRegion>& regions,
                                          const FrequencyGrid& grid, const WaveletSpec& spec);
std::vector<TimeSeries> decompose_regions(const Spectrogram& s,
                                          const std::vector<HarmonicRegion>& regions,
                                          const std::string& label = {},
                                          SignalKind kind = SignalKind::velocity);

/// Time average of |X|^2 per grid row over cone-of-influence-valid cells.
/// Rows with no valid cell report zero.
std::vector<double> time_averaged_power(const Spectrogram& s);

}  // namespace wavemodal
