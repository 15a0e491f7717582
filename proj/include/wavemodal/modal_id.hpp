#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "wavemodal/analytic.hpp"
#include "wavemodal/modal_set.hpp"
#include "wavemodal/series.hpp"
#include "wavemodal/timefreq.hpp"

namespace wavemodal {

/// components[i][j]: harmonic component j of DOF i.
struct ComponentSet {
    std::vector<std::vector<TimeSeries>> components;
    std::size_t drive_dof = 0;

    std::size_t n_dof() const { return components.size(); }
    std::size_t n_modes() const { return components.empty() ? 0 : components.front().size(); }
    void validate() const;
};

struct PhaseWindow {
    double start = 0.0;  // s
    double end = 0.0;    // s
    std::size_t dof = 0;
    std::size_t reference = 0;
};

struct PeakInfo {
    double f_hz = 0.0;
    double power = 0.0;
    double prominence = 0.0;  // relative to the global maximum
};

/// Local maxima of the time-averaged power spectrum with their prominence.
std::vector<PeakInfo> spectral_peaks(const Spectrogram& s);

/// Constant-in-time regions around the n_modes most prominent peaks whose
/// prominence is at least `min_prominence` of the global maximum; boundaries
/// sit at the spectral minimum between neighbouring peaks. Throws when fewer
/// peaks qualify, or when the weakest chosen peak is less than twice as
/// prominent as the strongest one left out.
std::vector<HarmonicRegion> suggest_regions(const Spectrogram& s, std::size_t n_modes,
                                            double min_prominence = 0.1);

/// Uses the first channel that shows n_modes prominent peaks.
std::vector<HarmonicRegion> suggest_regions(const std::vector<Spectrogram>& channels, std::size_t n_modes,
                                            double min_prominence = 0.1);

struct FrequencyEstimate {
    double f_hz = 0.0;
    double uncertainty_hz = 0.0;
};

/// Peak of the region's time-averaged power, pooled over channels and
/// refined by a parabola through the log power at the three nearest bins.
FrequencyEstimate estimate_frequency(const std::vector<Spectrogram>& region_spectra);
FrequencyEstimate estimate_frequency(const TimeSeries& component, const Spectrogram& region_spectrum);

struct IdentifyOptions {
    double envelope_fraction = 0.2;
    double edge_fraction = 0.05;
    double smoothness = 0.05;
    double min_periods = 5.0;
    double min_r_squared = 0.95;
    double max_circular_variance = 0.2;
};

/// Trusted sample range for a mode at f_hz: clear of the cone of influence
/// and of the record-edge guard.
std::pair<std::size_t, std::size_t> trusted_span(std::size_t n, double dt, double f_hz,
                                                 const WaveletSpec& spec, const IdentifyOptions& opt);

/// First contiguous run inside the trusted span where the envelope stays at
/// or above envelope_fraction of its trusted peak.
PhaseWindow select_decay_window(const EnvelopePhase& env, double f_hz, std::pair<std::size_t, std::size_t> span,
                                const IdentifyOptions& opt);

struct DampingFit {
    double zeta = 0.0;
    double r_squared = 0.0;
    bool low_confidence = false;
};

DampingFit fit_damping(const EnvelopePhase& env, double f_hz, const PhaseWindow& window,
                       const IdentifyOptions& opt = {});

/// Mean envelope of mode j per DOF over the window, scaled to unit norm.
std::vector<double> normalized_moduli(const ComponentSet& cs, std::size_t mode, const PhaseWindow& window);

struct PairFailure {
    std::size_t dof = 0;
    std::size_t reference = 0;
    std::string reason;
};

struct PhaseWindowSelection {
    std::vector<PhaseWindow> windows;  // one per DOF pair that has one
    std::vector<std::size_t> alternatives;  // further admissible windows per entry
    std::vector<PairFailure> failures;
};

PhaseWindowSelection select_phase_windows(const ComponentSet& cs, std::size_t mode, std::size_t reference_dof,
                                          double f_hz, const WaveletSpec& spec, const IdentifyOptions& opt = {});

struct PhaseEstimate {
    std::vector<double> theta_deg;
    std::vector<double> circular_variance;
    std::vector<bool> low_confidence;
};

/// Circular mean of phi_k - phi_ref over each pair's window. Pairs without a
/// window use `fallback` and are flagged.
PhaseEstimate estimate_phase_offsets(const ComponentSet& cs, std::size_t mode, std::size_t reference_dof,
                                     const PhaseWindowSelection& windows, const PhaseWindow& fallback,
                                     const IdentifyOptions& opt = {});

/// Masks each channel's spectrogram by each region and inverts.
ComponentSet decompose_channels(const std::vector<Spectrogram>& channels,
                                const std::vector<HarmonicRegion>& regions, std::size_t drive_dof);

struct Identification {
    ModalSet modal;
    ComponentSet components;
    nlohmann::json diagnostics;
};

/// Full protocol for one drive point: decomposition, frequency, damping,
/// moduli and phases per region. Q is left at its default.
Identification identify_modes(const std::vector<Spectrogram>& channels, const std::vector<HarmonicRegion>& regions,
                              std::size_t drive_dof, std::size_t reference_dof, const IdentifyOptions& opt = {});

}  // namespace wavemodal
