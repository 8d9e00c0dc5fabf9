#pragma once

#include "vpr/feature_store.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vpr {

/// FS: w = score_a + score_b. DMF: w = 2 - descriptor distance.
enum class WeightScheme { FS, DMF };

WeightScheme parse_weight_scheme(std::string_view name);
std::string_view to_string(WeightScheme scheme);

/// One cross-checked correspondence. Shifts follow the global convention
/// shift = query position - candidate position.
struct Match {
    std::uint32_t idx_a = 0;
    std::uint32_t idx_b = 0;
    double distance = 0.0;
    double weight = 0.0;
    double shift_x = 0.0;
    double shift_y = 0.0;
};

struct MatchSet {
    std::string query_id;
    std::string candidate_id;
    std::vector<Match> matches;

    std::size_t size() const { return matches.size(); }
    bool empty() const { return matches.empty(); }
};

/// Index of the smallest value; the lowest index wins among equal minima.
std::size_t tie_break_nn(std::span<const double> distances);

/// Squared Euclidean distance accumulated in double precision.
double squared_distance(std::span<const float> a, std::span<const float> b);

/**
 * Mutual nearest-neighbour matching under Euclidean descriptor distance.
 *
 * A pair (i, j) is kept iff j is the nearest neighbour of a_i in b and i is the
 * nearest neighbour of b_j in a, with ties going to the lowest index. Matches
 * are ordered by idx_a and carry unit weight until weigh_matches() is applied.
 *
 * Candidate neighbours are ranked with a single float GEMM; every entry that
 * lies within the GEMM rounding bound of the best one is re-evaluated with the
 * exact double-precision distance, so the result is identical to an exhaustive
 * scan.
 */
MatchSet match_features(const FeatureSet& a, const FeatureSet& b);

MatchSet weigh_matches(MatchSet ms, WeightScheme scheme, const FeatureSet& a, const FeatureSet& b);

/// CSV dump: idx_a,idx_b,distance,weight,shift_x,shift_y
std::string match_dump_csv(const MatchSet& ms);

} // namespace vpr
