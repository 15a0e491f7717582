#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wavemodal {

enum class SignalKind { displacement, velocity, acceleration, force };

std::string_view to_string(SignalKind kind);
SignalKind signal_kind_from_string(std::string_view name);

/// Uniformly sampled real signal. Construction enforces dt > 0, at least two
/// samples and finite values.
class TimeSeries {
public:
    TimeSeries(std::vector<double> samples, double dt, std::string label = {},
               SignalKind kind = SignalKind::velocity);

    std::span<const double> samples() const { return samples_; }
    const std::vector<double>& values() const { return samples_; }
    double operator[](std::size_t i) const { return samples_[i]; }
    std::size_t size() const { return samples_.size(); }
    double dt() const { return dt_; }
    double sample_rate() const { return 1.0 / dt_; }
    double nyquist() const { return 0.5 / dt_; }
    double duration() const { return dt_ * static_cast<double>(samples_.size()); }
    const std::string& label() const { return label_; }
    SignalKind kind() const { return kind_; }

    TimeSeries with_samples(std::vector<double> samples) const;
    TimeSeries relabeled(std::string label) const;

private:
    std::vector<double> samples_;
    double dt_;
    std::string label_;
    SignalKind kind_;
};

}  // namespace wavemodal
