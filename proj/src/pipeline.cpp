#include "vpr/pipeline.hpp"

#include "vpr/errors.hpp"
#include "vpr/matcher.hpp"
#include "vpr/parallel.hpp"
#include "vpr/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace vpr {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

ImageDims dims_of(const FeatureSet& set) {
    return {static_cast<double>(set.width), static_cast<double>(set.height)};
}

} // namespace

ScorerKind parse_scorer(std::string_view name) {
    if (name == "histogram") return ScorerKind::Histogram;
    if (name == "anchor") return ScorerKind::Anchor;
    if (name == "aggregate") return ScorerKind::Aggregate;
    if (name == "ransac") return ScorerKind::Ransac;
    throw ContractError("unknown scorer \"" + std::string(name) + "\" (expected histogram, anchor, aggregate or ransac)");
}

std::string_view to_string(ScorerKind kind) {
    switch (kind) {
    case ScorerKind::Histogram: return "histogram";
    case ScorerKind::Anchor: return "anchor";
    case ScorerKind::Aggregate: return "aggregate";
    case ScorerKind::Ransac: return "ransac";
    }
    return "?";
}

void PipelineConfig::validate() const {
    if (k_candidates < 1) throw ContractError("pipeline: k_candidates must be >= 1");
    if (combine && !(combine->c > 0.0 && std::isfinite(combine->c))) throw ContractError("pipeline: c must be > 0");
    histogram.validate();
    anchor.validate();
    ransac.validate();
}

FilterResult filter_topk(std::span<const float> query, const Database& db, std::size_t k) {
    if (query.size() != db.global_dim()) {
        throw ContractError("filter_topk: query descriptor has dimension " + std::to_string(query.size()) +
                            ", database uses " + std::to_string(db.global_dim()));
    }
    FilterResult out;
    out.candidates.resize(db.size());
    for (std::size_t i = 0; i < db.size(); ++i) {
        const auto ref = db.reference_descriptor(i);
        double dot = 0.0;
        for (std::size_t d = 0; d < query.size(); ++d) dot += static_cast<double>(query[d]) * ref[d];
        out.candidates[i] = {i, dot};
    }
    if (k > db.size()) {
        out.truncated = true;
        k = db.size();
    }
    auto better = [](const Candidate& x, const Candidate& y) {
        if (x.filtering_score != y.filtering_score) return x.filtering_score > y.filtering_score;
        return x.reference_index < y.reference_index;
    };
    std::partial_sort(out.candidates.begin(), out.candidates.begin() + static_cast<std::ptrdiff_t>(k),
                      out.candidates.end(), better);
    out.candidates.resize(k);
    return out;
}

CandidateScore score_candidate(const FeatureSet& query, const FeatureSet& reference, const PipelineConfig& cfg,
                               std::uint64_t stream) {
    CandidateScore out;
    MatchSet ms = match_features(query, reference);
    out.matches = ms.size();
    switch (cfg.scorer) {
    case ScorerKind::Histogram:
        ms = weigh_matches(std::move(ms), cfg.histogram.weight_scheme, query, reference);
        out.score = histogram_score(ms, dims_of(query), cfg.histogram).score;
        break;
    case ScorerKind::Anchor:
        ms = weigh_matches(std::move(ms), cfg.anchor.weight_scheme, query, reference);
        out.score = anchor_score(ms, query, reference, cfg.anchor);
        break;
    case ScorerKind::Aggregate: {
        if (query.width != reference.width || query.height != reference.height) {
            throw ContractError("aggregate: query and candidate image sizes differ");
        }
        ms = weigh_matches(std::move(ms), cfg.aggregate.weight_scheme, query, reference);
        const auto r = aggregate_score_detailed(ms, dims_of(query));
        out.score = r.score;
        if (r.clamped) out.diagnostic = std::to_string(r.clamped) + " residuals exceeded the image size";
        break;
    }
    case ScorerKind::Ransac: {
        RansacConfig rc = cfg.ransac;
        rc.rng_seed = derive_seed(cfg.ransac.rng_seed, stream);
        out.score = static_cast<double>(ransac_score(ms, query, reference, rc).score);
        break;
    }
    }
    return out;
}

void sort_entries(std::vector<RankedEntry>& entries) {
    std::sort(entries.begin(), entries.end(), [](const RankedEntry& x, const RankedEntry& y) {
        if (x.final_score != y.final_score) return x.final_score > y.final_score;
        if (x.filtering_score != y.filtering_score) return x.filtering_score > y.filtering_score;
        return x.reference_index < y.reference_index;
    });
}

RankedResult rerank(const FeatureSet& query, std::span<const Candidate> candidates, const Database& db,
                    const PipelineConfig& cfg) {
    cfg.validate();
    RankedResult result;
    result.query_id = query.image_id;
    result.entries.resize(candidates.size());
    const auto start = Clock::now();
    parallel_for(candidates.size(), cfg.jobs, [&](std::size_t n) {
        const auto& cand = candidates[n];
        RankedEntry& e = result.entries[n];
        e.reference_index = cand.reference_index;
        e.filtering_score = cand.filtering_score;
        try {
            const auto s = score_candidate(query, db.reference(cand.reference_index), cfg, cand.reference_index);
            e.rerank_score = s.score;
            e.matches = s.matches;
            e.diagnostic = s.diagnostic;
        } catch (const std::exception& ex) {
            e.rerank_score = 0.0;
            e.diagnostic = std::string("scoring failed: ") + ex.what();
        }
        e.final_score = cfg.combine ? combined_score(cfg.combine->c, e.filtering_score, e.rerank_score)
                                    : e.rerank_score;
    });
    sort_entries(result.entries);
    result.timings.matching_score = seconds_since(start);
    return result;
}

RankedResult recognize(std::string_view query_id, const Database& db, const PipelineConfig& cfg) {
    cfg.validate();
    const auto start = Clock::now();

    auto t = Clock::now();
    const auto filtered = filter_topk(db.query_descriptor(query_id), db, cfg.k_candidates);
    const double filtering = seconds_since(t);

    t = Clock::now();
    FeatureSet query = db.query_features(query_id);
    query.image_id = std::string(query_id);
    const double feature_load = seconds_since(t);

    RankedResult result = rerank(query, filtered.candidates, db, cfg);
    result.truncated = filtered.truncated;
    result.timings.filtering = filtering;
    result.timings.feature_load = feature_load;
    result.timings.total = seconds_since(start);
    return result;
}

std::string result_to_json(const RankedResult& result, bool include_timings) {
    nlohmann::ordered_json doc;
    doc["query_id"] = result.query_id;
    auto entries = nlohmann::ordered_json::array();
    for (const auto& e : result.entries) {
        nlohmann::ordered_json j;
        j["index"] = e.reference_index;
        j["s_f"] = e.filtering_score;
        j["s_r"] = e.rerank_score;
        j["final"] = e.final_score;
        j["matches"] = e.matches;
        if (!e.diagnostic.empty()) j["diagnostic"] = e.diagnostic;
        entries.push_back(std::move(j));
    }
    doc["entries"] = std::move(entries);
    if (result.truncated) doc["truncated"] = true;
    if (include_timings) {
        doc["timings"] = {{"filtering", result.timings.filtering},
                          {"feature_load", result.timings.feature_load},
                          {"matching_score", result.timings.matching_score},
                          {"total", result.timings.total}};
    }
    return doc.dump();
}

} // namespace vpr
