#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vpr {

/// Keypoint geometry and detector quality of one local feature. Positions are
/// pixels at the re-ranking resolution; the store never rescales them.
struct Keypoint {
    float x = 0.0f;
    float y = 0.0f;
    float score = 0.0f;
};

/// Local features of one image. Descriptors are stored row-major in a single
/// contiguous buffer of size() * descriptor_dim floats.
struct FeatureSet {
    std::string image_id;
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint16_t descriptor_dim = 0;
    std::vector<Keypoint> keypoints;
    std::vector<float> descriptors;

    std::size_t size() const { return keypoints.size(); }
    bool empty() const { return keypoints.empty(); }

    std::span<const float> descriptor(std::size_t i) const {
        return {descriptors.data() + i * descriptor_dim, descriptor_dim};
    }
    std::span<float> descriptor(std::size_t i) {
        return {descriptors.data() + i * descriptor_dim, descriptor_dim};
    }

    /// Appends a feature; the descriptor length must equal descriptor_dim.
    void push_back(const Keypoint& kp, std::span<const float> desc);
};

struct GlobalDescriptor {
    std::string image_id;
    std::vector<float> vector;
};

enum class ToleranceUnit { SequenceIndex, Meters };

struct Position {
    double east = 0.0;
    double north = 0.0;
};

/// Reference/query lists plus ground truth. In sequence-index mode the ground
/// truth lists acceptable reference indices per query; in meters mode every
/// listed image carries a planar position and ground truth is derived from it.
struct DatasetManifest {
    std::vector<std::string> reference_ids;
    std::vector<std::string> query_ids;
    std::map<std::string, std::vector<std::size_t>> ground_truth;
    std::map<std::string, Position> positions;
    std::map<std::string, std::string> query_sequences;
    ToleranceUnit tolerance_unit = ToleranceUnit::SequenceIndex;

    /// Throws FormatError on any dangling id, out-of-range index or missing position.
    void validate() const;
};

DatasetManifest parse_manifest(std::string_view json_text);
DatasetManifest load_manifest(const std::filesystem::path& path);
std::string manifest_to_json(const DatasetManifest& manifest);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// VPRF feature files ---------------------------------------------------------

inline constexpr std::size_t kFeatureHeaderBytes = 20;
inline constexpr std::uint16_t kFormatVersion = 1;

/// Descriptor norms within this distance of 1 are accepted as-is.
inline constexpr double kUnitNormTolerance = 1e-4;
/// Norm drift up to this bound is repaired on load; anything larger is rejected.
inline constexpr double kRenormalizeLimit = 1e-3;

struct LoadDiagnostics {
    std::size_t renormalized = 0;
};

std::size_t feature_file_size(std::size_t feature_count, std::size_t descriptor_dim);

std::vector<std::byte> serialize_features(const FeatureSet& set);
FeatureSet parse_features(std::span<const std::byte> bytes, LoadDiagnostics* diag = nullptr);

FeatureSet load_feature_file(const std::filesystem::path& path, LoadDiagnostics* diag = nullptr);
void write_feature_file(const FeatureSet& set, const std::filesystem::path& path);

/// Checks the FeatureSet invariants (bounds, finite values, unit norms).
void validate_feature_set(const FeatureSet& set);

// VPRG global-descriptor files -----------------------------------------------

std::vector<std::byte> serialize_global_descriptors(std::span<const GlobalDescriptor> descriptors);
std::vector<GlobalDescriptor> parse_global_descriptors(std::span<const std::byte> bytes,
                                                       LoadDiagnostics* diag = nullptr);
std::vector<GlobalDescriptor> load_global_descriptor_file(const std::filesystem::path& path,
                                                          LoadDiagnostics* diag = nullptr);
void write_global_descriptor_file(std::span<const GlobalDescriptor> descriptors,
                                  const std::filesystem::path& path);

// Database -------------------------------------------------------------------

struct DatabaseSizeReport {
    std::size_t reference_count = 0;
    std::uint64_t feature_bytes = 0;
    std::uint64_t descriptor_bytes = 0;
    std::uint64_t total() const { return feature_bytes + descriptor_bytes; }
};

/// Path of the feature file for `image_id` under `feature_dir`.
std::filesystem::path feature_path(const std::filesystem::path& feature_dir, std::string_view image_id);

/**
 * Read-only reference database: local features and global descriptors of all
 * reference images, addressable by sequence index or id, plus the global
 * descriptors of the queries. Query local features are fetched on demand,
 * either from the feature directory or from an in-memory table.
 *
 * Immutable after construction; concurrent reads are safe.
 */
class Database {
public:
    /// Loads every reference listed in the manifest. Features are read from
    /// `<feature_dir>/<id>.vprf`; global descriptors from all `*.vprg` files in
    /// `descriptor_dir`. Throws LoadError naming the first missing id.
    static Database load(const DatasetManifest& manifest,
                         const std::filesystem::path& feature_dir,
                         const std::filesystem::path& descriptor_dir);

    /// Builds a database from in-memory artifacts (synthetic data, bindings).
    /// `globals` must cover every reference; query entries are optional.
    static Database from_memory(DatasetManifest manifest,
                                std::vector<FeatureSet> references,
                                std::vector<GlobalDescriptor> globals,
                                std::vector<FeatureSet> queries = {});

    std::size_t size() const { return references_.size(); }
    const DatasetManifest& manifest() const { return manifest_; }

    const FeatureSet& reference(std::size_t index) const;
    const FeatureSet& reference(std::string_view id) const;
    std::optional<std::size_t> reference_index(std::string_view id) const;

    std::size_t global_dim() const { return global_dim_; }
    std::span<const float> reference_descriptor(std::size_t index) const;
    std::span<const float> query_descriptor(std::string_view id) const;

    /// Query local features; loaded from disk when not held in memory.
    FeatureSet query_features(std::string_view id) const;

    const DatabaseSizeReport& size_report() const { return sizes_; }
    std::size_t renormalized_descriptors() const { return renormalized_; }

private:
    Database() = default;
    void index_globals(std::vector<GlobalDescriptor> globals);

    DatasetManifest manifest_;
    std::vector<FeatureSet> references_;
    std::unordered_map<std::string, std::size_t> reference_lookup_;
    std::size_t global_dim_ = 0;
    std::vector<float> reference_globals_;
    std::unordered_map<std::string, std::vector<float>> query_globals_;
    std::unordered_map<std::string, FeatureSet> query_features_;
    std::optional<std::filesystem::path> feature_dir_;
    DatabaseSizeReport sizes_;
    std::size_t renormalized_ = 0;
};

} // namespace vpr
