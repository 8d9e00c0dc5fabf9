#pragma once

#include "vpr/histogram.hpp"
#include "vpr/matcher.hpp"

namespace vpr {

struct AggregateConfig {
    WeightScheme weight_scheme = WeightScheme::DMF;
};

struct AggregateResult {
    double score = 0.0;
    /// Residual components that exceeded the image size and were clamped to 0.
    std::size_t clamped = 0;
};

/// s = sum_k w_k * ((W - |x_k - mean_x|)^2 + (H - |y_k - mean_y|)^2), with
/// unweighted means over all shifts and no normalisation by match count.
AggregateResult aggregate_score_detailed(const MatchSet& ms, ImageDims dims);

inline double aggregate_score(const MatchSet& ms, ImageDims dims) {
    return aggregate_score_detailed(ms, dims).score;
}

} // namespace vpr
