#pragma once

#include "vpr/feature_store.hpp"
#include "vpr/pipeline.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace vpr {

struct ToleranceSpec {
    enum class Mode { Index, Meters };
    Mode mode = Mode::Index;
    std::vector<double> values{1, 2, 5};

    static ToleranceSpec index_default() { return {Mode::Index, {1, 2, 5}}; }
    static ToleranceSpec meters_default() { return {Mode::Meters, {25}}; }

    /// Values must be positive and ascending.
    void validate() const;
};

struct MetricGroundTruth {
    /// query id -> (nearest reference index, distance in meters)
    std::map<std::string, std::pair<std::size_t, double>> matched;
    std::vector<std::string> dropped;
};

/// Nearest reference (lowest index on ties) for each query; queries whose
/// nearest reference is farther than `max_dist` meters are dropped.
MetricGroundTruth build_ground_truth_metric(std::span<const Position> reference_positions,
                                            std::span<const std::pair<std::string, Position>> queries,
                                            double max_dist = 5.0);

/// Ranked reference indices returned for one query, best first.
struct QueryOutcome {
    std::string query_id;
    std::vector<std::size_t> ranked;
};

std::vector<QueryOutcome> outcomes_from(std::span<const RankedResult> results);

using IndexGroundTruth = std::map<std::string, std::vector<std::size_t>>;

/// Percent of ground-truthed queries whose rank-1 reference lies within v
/// sequence indices of an acceptable reference, per tolerance v. Queries
/// absent from `gt` are not evaluated; nullopt when none are evaluated.
std::optional<std::vector<double>> recall_at_1(std::span<const QueryOutcome> outcomes, const IndexGroundTruth& gt,
                                               const ToleranceSpec& tol);

/// Percent of queries with a true position whose top-N contains a reference
/// within `threshold` meters of it, per N.
std::optional<std::vector<double>> recall_at_n(std::span<const QueryOutcome> outcomes,
                                               std::span<const Position> reference_positions,
                                               const std::map<std::string, Position>& query_positions,
                                               std::span<const std::size_t> n_values, double threshold = 25.0);

struct StageSummary {
    double mean = 0.0;
    double p95 = 0.0;
};

struct TimingSummary {
    std::size_t queries = 0;
    StageSummary filtering, feature_load, matching_score, total;
};

TimingSummary summarize_timings(std::span<const StageTimings> timings);

struct EvalConfig {
    ToleranceSpec tolerances = ToleranceSpec::index_default();
    std::vector<std::size_t> n_values{1, 5, 10};
    double metric_threshold = 25.0;
    double ground_truth_max_dist = 5.0;
};

struct QueryFailure {
    std::string query_id;
    std::optional<std::size_t> rank1;
    std::vector<std::size_t> ground_truth;
    std::vector<bool> passed;
};

struct EvalReport {
    std::string scorer;
    std::size_t k_candidates = 0;
    bool combined = false;
    EvalConfig config;
    std::size_t queries = 0;
    std::size_t evaluated = 0;
    std::vector<std::string> dropped;
    std::optional<std::vector<double>> recall_at_1;
    std::map<std::string, std::vector<double>> per_sequence;
    std::optional<std::vector<double>> recall_at_n;
    std::vector<QueryFailure> failures;
    DatabaseSizeReport sizes;
    std::optional<TimingSummary> timings;
};

/// Scores a finished run against the manifest's ground truth. In meters mode
/// index ground truth comes from build_ground_truth_metric and Recall@N is
/// reported as well.
EvalReport evaluate(std::span<const RankedResult> results, const Database& db, const PipelineConfig& pipeline,
                    const EvalConfig& cfg = {});

/// evaluate() plus per-stage timing statistics.
EvalReport bench_report(std::span<const RankedResult> results, const Database& db, const PipelineConfig& pipeline,
                        const EvalConfig& cfg = {});

std::string report_to_json(const EvalReport& report);
std::string report_to_text(const EvalReport& report);
std::string failures_to_csv(const EvalReport& report);

} // namespace vpr
