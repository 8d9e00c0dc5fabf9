#pragma once

#include "vpr/aggregate.hpp"
#include "vpr/anchor.hpp"
#include "vpr/feature_store.hpp"
#include "vpr/histogram.hpp"
#include "vpr/ransac.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vpr {

enum class ScorerKind { Histogram, Anchor, Aggregate, Ransac };

ScorerKind parse_scorer(std::string_view name);
std::string_view to_string(ScorerKind kind);

/// Final score c * s_f + s_r.
struct CombineConfig {
    double c = 1e6;
};

struct PipelineConfig {
    std::size_t k_candidates = 50;
    ScorerKind scorer = ScorerKind::Histogram;
    std::optional<CombineConfig> combine;
    HistogramConfig histogram;
    AnchorConfig anchor;
    AggregateConfig aggregate;
    RansacConfig ransac;
    /// Worker threads for candidate re-ranking; 0 = hardware concurrency.
    unsigned jobs = 1;

    void validate() const;
};

struct Candidate {
    std::size_t reference_index = 0;
    double filtering_score = 0.0;
};

struct FilterResult {
    std::vector<Candidate> candidates;
    /// k exceeded the database size; every reference was returned.
    bool truncated = false;
};

/// The k references with the highest inner product to `query`, descending,
/// ties to the lower index.
FilterResult filter_topk(std::span<const float> query, const Database& db, std::size_t k);

struct CandidateScore {
    double score = 0.0;
    std::size_t matches = 0;
    std::string diagnostic;
};

/// Matches, weighs and scores one query/reference pair with the configured
/// scorer. `stream` selects the RANSAC random stream.
CandidateScore score_candidate(const FeatureSet& query, const FeatureSet& reference, const PipelineConfig& cfg,
                               std::uint64_t stream);

inline double combined_score(double c, double filtering_score, double rerank_score) {
    return c * filtering_score + rerank_score;
}

struct RankedEntry {
    std::size_t reference_index = 0;
    double filtering_score = 0.0;
    double rerank_score = 0.0;
    double final_score = 0.0;
    std::size_t matches = 0;
    std::string diagnostic;
};

struct StageTimings {
    double filtering = 0.0;
    double feature_load = 0.0;
    double matching_score = 0.0;
    double total = 0.0;
};

struct RankedResult {
    std::string query_id;
    std::vector<RankedEntry> entries;
    StageTimings timings;
    bool truncated = false;
};

/// Orders entries by final score, then filtering score, then lower index.
void sort_entries(std::vector<RankedEntry>& entries);

RankedResult rerank(const FeatureSet& query, std::span<const Candidate> candidates, const Database& db,
                    const PipelineConfig& cfg);

/// Filtering, query feature load, then re-ranking, each stage timed.
RankedResult recognize(std::string_view query_id, const Database& db, const PipelineConfig& cfg);

/// One JSON object (no trailing newline). Timings are optional so that
/// result files can be compared byte-for-byte across runs.
std::string result_to_json(const RankedResult& result, bool include_timings);

} // namespace vpr
