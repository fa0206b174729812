#include "pgrecon/tensor.hpp"

#include <algorithm>

namespace pgrecon {

const char* unit_name(Unit u) {
    switch (u) {
        case Unit::dimensionless: return "dimensionless";
        case Unit::kelvin: return "kelvin";
        case Unit::reflectance: return "reflectance";
    }
    return "unknown";
}

Mask3::Mask3(int height, int width, int channels, bool fill) : h_(height), w_(width), c_(channels) {
    if (height < 1 || width < 1 || channels < 1) throw PreconditionError("mask dims must be >= 1");
    bits_.assign(static_cast<std::size_t>(height) * width * channels, fill ? 1 : 0);
}

std::size_t Mask3::popcount() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

void TimeAxis::validate() const {
    if (!(period > 0.0) || !std::isfinite(period)) throw PreconditionError("time axis period must be > 0");
    if (days.empty()) throw PreconditionError("time axis must have at least one entry");
    for (std::size_t k = 0; k < days.size(); ++k) {
        if (!std::isfinite(days[k]) || days[k] < 0.0) {
            throw PreconditionError("time axis entry " + std::to_string(k) + " must be finite and >= 0");
        }
        if (k > 0 && !(days[k] > days[k - 1])) {
            throw PreconditionError("time axis must be strictly increasing at entry " + std::to_string(k));
        }
    }
}

TimeAxis TimeAxis::daily(int n, double period) {
    TimeAxis axis;
    axis.period = period;
    axis.days.resize(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) axis.days[static_cast<std::size_t>(k)] = k;
    return axis;
}

Mask3 mask_from_nan(const Tensor3& x) {
    Mask3 m(x.height(), x.width(), x.channels());
    for (std::size_t k = 0; k < x.size(); ++k) m.set(k, std::isfinite(x[k]));
    return m;
}

}  // namespace pgrecon
