#include "wavemodal/series.hpp"

#include <cmath>

#include "wavemodal/error.hpp"

namespace wavemodal {

std::string_view to_string(SignalKind kind) {
    switch (kind) {
        case SignalKind::displacement: return "displacement";
        case SignalKind::velocity: return "velocity";
        case SignalKind::acceleration: return "acceleration";
        case SignalKind::force: return "force";
    }
    return "velocity";
}

SignalKind signal_kind_from_string(std::string_view name) {
    if (name == "displacement") return SignalKind::displacement;
    if (name == "velocity") return SignalKind::velocity;
    if (name == "acceleration") return SignalKind::acceleration;
    if (name == "force") return SignalKind::force;
    throw ValidationError("unknown signal kind '" + std::string(name) + "'");
}

TimeSeries::TimeSeries(std::vector<double> samples, double dt, std::string label, SignalKind kind)
    : samples_(std::move(samples)), dt_(dt), label_(std::move(label)), kind_(kind) {
    if (!(dt_ > 0.0) || !std::isfinite(dt_))
        throw ValidationError("time series '" + label_ + "': dt must be positive and finite");
    if (samples_.size() < 2)
        throw ValidationError("time series '" + label_ + "': needs at least two samples");
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        if (!std::isfinite(samples_[i]))
            throw ValidationError("time series '" + label_ + "': non-finite sample at index " +
                                  std::to_string(i));
    }
}

TimeSeries TimeSeries::with_samples(std::vector<double> samples) const {
    return TimeSeries(std::move(samples), dt_, label_, kind_);
}

TimeSeries TimeSeries::relabeled(std::string label) const {
    return TimeSeries(samples_, dt_, std::move(label), kind_);
}

}  // namespace wavemodal
