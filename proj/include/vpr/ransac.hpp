#pragma once

#include "vpr/matcher.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vpr {

struct RansacConfig {
    int max_iterations = 2000;
    double reprojection_threshold = 24.0;
    double confidence = 0.99;
    std::uint64_t rng_seed = 0;
    /// Require both forward and backward reprojection errors below the threshold.
    bool symmetric_error = false;

    void validate() const;
};

/// Point correspondence: (xa, ya) in the query image, (xb, yb) in the candidate.
struct PointPair {
    double xa = 0.0, ya = 0.0, xb = 0.0, yb = 0.0;
};

/// 3x3 projective map from query to candidate pixels, scaled so that
/// m(2,2) = 1 whenever that entry is nonzero.
struct Homography {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();

    /// Maps (x, y); returns nullopt when the point goes to infinity.
    std::optional<Eigen::Vector2d> apply(double x, double y) const;
    Homography inverse() const;
    /// Row-major, 9 numbers separated by spaces.
    std::string dump() const;
};

/**
 * Normalised DLT from exactly four correspondences.
 *
 * Both point sets are translated to their centroid and scaled to mean
 * distance sqrt(2) before solving. Returns nullopt when three points on
 * either side span a triangle of area below `min_area`, or when the result
 * is not finite or not invertible.
 */
std::optional<Homography> fit_homography_4pt(std::span<const PointPair, 4> sample, double min_area = 0.0);

/// Matches whose reprojection error is within `threshold` pixels.
std::size_t count_inliers(const Homography& h, std::span<const PointPair> pairs, double threshold,
                          bool symmetric = false);

struct RansacResult {
    std::size_t score = 0;
    std::optional<Homography> model;
    int iterations = 0;
};

/// Best-of-N inlier count over seeded 4-point samples with adaptive early
/// termination at the configured confidence. `image_area` scales the
/// collinearity test of each sample.
RansacResult ransac_score(std::span<const PointPair> pairs, const RansacConfig& cfg, double image_area);

RansacResult ransac_score(const MatchSet& ms, const FeatureSet& a, const FeatureSet& b, const RansacConfig& cfg);

std::vector<PointPair> match_points(const MatchSet& ms, const FeatureSet& a, const FeatureSet& b);

} // namespace vpr
