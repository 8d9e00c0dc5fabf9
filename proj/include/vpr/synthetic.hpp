#pragma once

#include "vpr/feature_store.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

namespace vpr {

/// Parameters of a seeded synthetic place-recognition dataset.
struct SynthSpec {
    std::size_t n_places = 20;
    std::size_t features_per_image = 300;
    std::uint16_t descriptor_dim = 64;
    std::uint32_t width = 336;
    std::uint32_t height = 336;
    /// Planted query - reference shift of the inlier features, in pixels.
    double inlier_shift_x = 20.0;
    double inlier_shift_y = 5.0;
    double outlier_fraction = 0.0;
    /// Approximate L2 norm of the noise added to each inlier descriptor.
    double descriptor_noise_sigma = 0.0;
    /// Row-major homography mapping reference pixels to query pixels; replaces the shift.
    std::optional<std::array<double, 9>> warp;
    /// Approximate L2 norm of the noise added to query global descriptors.
    double global_noise_sigma = 0.0;
    /// Global descriptor dimension; raised to n_places when smaller.
    std::size_t global_dim = 0;
    /// Spacing of places along the route, for metric ground truth.
    double place_spacing_m = 10.0;
    std::uint64_t rng_seed = 1;

    void validate() const;
};

struct SynthDataset {
    DatasetManifest manifest;
    std::vector<FeatureSet> references;
    std::vector<FeatureSet> queries;
    std::vector<GlobalDescriptor> reference_globals;
    std::vector<GlobalDescriptor> query_globals;
    /// Per query: planted (query feature index, reference feature index) pairs.
    std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> inliers;

    Database database() const;

    /// Writes features/<id>.vprf, descriptors/{references,queries}.vprg and
    /// manifest.json under `dir`.
    void write(const std::filesystem::path& dir) const;
};

/// Place p: random reference features. Query p: a fraction of those features
/// moved by the planted shift (or warp) with descriptor noise, the rest random
/// outliers, in shuffled order. Global descriptors are one-hot per place, with
/// noise on the query side. Fully determined by the seed.
SynthDataset generate(const SynthSpec& spec);

} // namespace vpr
