#include "vpr/aggregate.hpp"

#include "vpr/errors.hpp"

#include <cmath>

namespace vpr {

AggregateResult aggregate_score_detailed(const MatchSet& ms, ImageDims dims) {
    AggregateResult result;
    if (ms.empty()) return result;
    if (!(dims.width > 0.0) || !(dims.height > 0.0)) throw ContractError("aggregate: image dims must be positive");

    double sx = 0.0, sy = 0.0;
    for (const auto& m : ms.matches) {
        sx += m.shift_x;
        sy += m.shift_y;
    }
    const double n = static_cast<double>(ms.size());
    const double mean_x = sx / n;
    const double mean_y = sy / n;

    auto complement = [&](double extent, double residual) {
        const double c = extent - std::abs(residual);
        if (c < 0.0) {
            ++result.clamped;
            return 0.0;
        }
        return c;
    };

    double s = 0.0;
    for (const auto& m : ms.matches) {
        const double cx = complement(dims.width, m.shift_x - mean_x);
        const double cy = complement(dims.height, m.shift_y - mean_y);
        s += m.weight * (cx * cx + cy * cy);
    }
    result.score = s;
    return result;
}

} // namespace vpr
