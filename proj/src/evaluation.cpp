#include "vpr/evaluation.hpp"

#include "vpr/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace vpr {

using ojson = nlohmann::ordered_json;

namespace {

double distance(const Position& p, const Position& q) {
    return std::hypot(p.east - q.east, p.north - q.north);
}

bool within_tolerance(std::size_t rank1, const std::vector<std::size_t>& gt, double tol) {
    for (auto g : gt) {
        const double diff = rank1 > g ? static_cast<double>(rank1 - g) : static_cast<double>(g - rank1);
        if (diff <= tol) return true;
    }
    return false;
}

StageSummary summarize(std::vector<double> v) {
    StageSummary s;
    if (v.empty()) return s;
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    std::sort(v.begin(), v.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(v.size())));
    s.p95 = v[std::max<std::size_t>(rank, 1) - 1];
    return s;
}

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

std::string tolerance_label(double v) {
    if (v == std::floor(v)) return std::to_string(static_cast<long long>(v));
    return fixed(v, 2);
}

} // namespace

void ToleranceSpec::validate() const {
    if (values.empty()) throw ContractError("tolerances: at least one value required");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] > 0.0)) throw ContractError("tolerances: values must be positive");
        if (i > 0 && !(values[i] > values[i - 1])) throw ContractError("tolerances: values must be ascending");
    }
}

MetricGroundTruth build_ground_truth_metric(std::span<const Position> reference_positions,
                                            std::span<const std::pair<std::string, Position>> queries,
                                            double max_dist) {
    if (reference_positions.empty()) throw ContractError("build_ground_truth_metric: no reference positions");
    MetricGroundTruth gt;
    for (const auto& [qid, qpos] : queries) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < reference_positions.size(); ++i) {
            const double d = distance(qpos, reference_positions[i]);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        if (best_d > max_dist) {
            gt.dropped.push_back(qid);
        } else {
            gt.matched[qid] = {best, best_d};
        }
    }
    return gt;
}

std::vector<QueryOutcome> outcomes_from(std::span<const RankedResult> results) {
    std::vector<QueryOutcome> out;
    out.reserve(results.size());
    for (const auto& r : results) {
        QueryOutcome o{r.query_id, {}};
        for (const auto& e : r.entries) o.ranked.push_back(e.reference_index);
        out.push_back(std::move(o));
    }
    return out;
}

std::optional<std::vector<double>> recall_at_1(std::span<const QueryOutcome> outcomes, const IndexGroundTruth& gt,
                                               const ToleranceSpec& tol) {
    tol.validate();
    std::vector<std::size_t> hits(tol.values.size(), 0);
    std::size_t evaluated = 0;
    for (const auto& o : outcomes) {
        auto it = gt.find(o.query_id);
        if (it == gt.end()) continue;
        ++evaluated;
        if (o.ranked.empty()) continue;
        for (std::size_t t = 0; t < tol.values.size(); ++t) {
            if (within_tolerance(o.ranked.front(), it->second, tol.values[t])) ++hits[t];
        }
    }
    if (evaluated == 0) return std::nullopt;
    std::vector<double> out;
    for (auto h : hits) out.push_back(100.0 * static_cast<double>(h) / static_cast<double>(evaluated));
    return out;
}

std::optional<std::vector<double>> recall_at_n(std::span<const QueryOutcome> outcomes,
                                               std::span<const Position> reference_positions,
                                               const std::map<std::string, Position>& query_positions,
                                               std::span<const std::size_t> n_values, double threshold) {
    std::vector<std::size_t> hits(n_values.size(), 0);
    std::size_t evaluated = 0;
    for (const auto& o : outcomes) {
        auto it = query_positions.find(o.query_id);
        if (it == query_positions.end()) continue;
        ++evaluated;
        // rank of the first correct reference
        std::size_t first_hit = SIZE_MAX;
        for (std::size_t r = 0; r < o.ranked.size(); ++r) {
            if (o.ranked[r] >= reference_positions.size()) throw ContractError("recall_at_n: reference index out of range");
            if (distance(it->second, reference_positions[o.ranked[r]]) <= threshold) {
                first_hit = r;
                break;
            }
        }
        for (std::size_t k = 0; k < n_values.size(); ++k) {
            if (first_hit < n_values[k]) ++hits[k];
        }
    }
    if (evaluated == 0) return std::nullopt;
    std::vector<double> out;
    for (auto h : hits) out.push_back(100.0 * static_cast<double>(h) / static_cast<double>(evaluated));
    return out;
}

TimingSummary summarize_timings(std::span<const StageTimings> timings) {
    TimingSummary s;
    s.queries = timings.size();
    std::vector<double> f, l, m, t;
    for (const auto& x : timings) {
        f.push_back(x.filtering);
        l.push_back(x.feature_load);
        m.push_back(x.matching_score);
        t.push_back(x.total);
    }
    s.filtering = summarize(std::move(f));
    s.feature_load = summarize(std::move(l));
    s.matching_score = summarize(std::move(m));
    s.total = summarize(std::move(t));
    return s;
}

EvalReport evaluate(std::span<const RankedResult> results, const Database& db, const PipelineConfig& pipeline,
                    const EvalConfig& cfg) {
    cfg.tolerances.validate();
    const auto& manifest = db.manifest();
    EvalReport report;
    report.scorer = std::string(to_string(pipeline.scorer));
    report.k_candidates = pipeline.k_candidates;
    report.combined = pipeline.combine.has_value();
    report.config = cfg;
    report.queries = results.size();
    report.sizes = db.size_report();

    const auto outcomes = outcomes_from(results);

    IndexGroundTruth gt;
    std::vector<Position> ref_positions;
    std::map<std::string, Position> query_positions;
    if (manifest.tolerance_unit == ToleranceUnit::SequenceIndex) {
        gt = manifest.ground_truth;
        for (const auto& o : outcomes) {
            if (!gt.count(o.query_id)) report.dropped.push_back(o.query_id);
        }
    } else {
        for (const auto& id : manifest.reference_ids) ref_positions.push_back(manifest.positions.at(id));
        std::vector<std::pair<std::string, Position>> queries;
        for (const auto& o : outcomes) {
            const auto& p = manifest.positions.at(o.query_id);
            queries.emplace_back(o.query_id, p);
            query_positions[o.query_id] = p;
        }
        const auto metric = build_ground_truth_metric(ref_positions, queries, cfg.ground_truth_max_dist);
        for (const auto& [qid, m] : metric.matched) gt[qid] = {m.first};
        report.dropped = metric.dropped;
    }

    report.recall_at_1 = recall_at_1(outcomes, gt, cfg.tolerances);
    report.evaluated = 0;
    for (const auto& o : outcomes) report.evaluated += gt.count(o.query_id);

    if (!manifest.query_sequences.empty()) {
        std::map<std::string, std::vector<QueryOutcome>> by_seq;
        for (const auto& o : outcomes) {
            if (auto it = manifest.query_sequences.find(o.query_id); it != manifest.query_sequences.end()) {
                by_seq[it->second].push_back(o);
            }
        }
        for (const auto& [seq, group] : by_seq) {
            if (auto r = recall_at_1(group, gt, cfg.tolerances)) report.per_sequence[seq] = *r;
        }
    }

    if (manifest.tolerance_unit == ToleranceUnit::Meters) {
        report.recall_at_n = recall_at_n(outcomes, ref_positions, query_positions, cfg.n_values, cfg.metric_threshold);
    }

    for (const auto& o : outcomes) {
        auto it = gt.find(o.query_id);
        if (it == gt.end()) continue;
        QueryFailure f;
        f.query_id = o.query_id;
        if (!o.ranked.empty()) f.rank1 = o.ranked.front();
        f.ground_truth = it->second;
        bool all = true;
        for (double v : cfg.tolerances.values) {
            const bool ok = f.rank1 && within_tolerance(*f.rank1, f.ground_truth, v);
            f.passed.push_back(ok);
            all = all && ok;
        }
        if (!all) report.failures.push_back(std::move(f));
    }
    return report;
}

EvalReport bench_report(std::span<const RankedResult> results, const Database& db, const PipelineConfig& pipeline,
                        const EvalConfig& cfg) {
    EvalReport report = evaluate(results, db, pipeline, cfg);
    std::vector<StageTimings> timings;
    for (const auto& r : results) timings.push_back(r.timings);
    report.timings = summarize_timings(timings);
    return report;
}

std::string report_to_json(const EvalReport& r) {
    ojson doc;
    doc["scorer"] = r.scorer;
    doc["k_candidates"] = r.k_candidates;
    doc["combined"] = r.combined;
    doc["queries"] = r.queries;
    doc["evaluated"] = r.evaluated;
    doc["dropped"] = r.dropped;

    ojson recall = ojson::object();
    recall["mode"] = r.config.tolerances.mode == ToleranceSpec::Mode::Index ? "index" : "meters";
    recall["tolerances"] = r.config.tolerances.values;
    recall["values"] = r.recall_at_1 ? ojson(*r.recall_at_1) : ojson(nullptr);
    doc["recall_at_1"] = recall;
    if (!r.per_sequence.empty()) {
        ojson seq = ojson::object();
        for (const auto& [name, v] : r.per_sequence) seq[name] = v;
        doc["per_sequence"] = seq;
    }
    if (r.recall_at_n) {
        doc["recall_at_n"] = {{"threshold_m", r.config.metric_threshold},
                              {"n", r.config.n_values},
                              {"values", *r.recall_at_n}};
    }
    doc["database"] = {{"references", r.sizes.reference_count},
                       {"feature_bytes", r.sizes.feature_bytes},
                       {"descriptor_bytes", r.sizes.descriptor_bytes},
                       {"total_bytes", r.sizes.total()}};
    if (r.timings) {
        auto stage = [](const StageSummary& s) { return ojson{{"mean", s.mean}, {"p95", s.p95}}; };
        doc["timings"] = {{"queries", r.timings->queries},
                          {"filtering", stage(r.timings->filtering)},
                          {"feature_load", stage(r.timings->feature_load)},
                          {"matching_score", stage(r.timings->matching_score)},
                          {"total", stage(r.timings->total)}};
    }
    doc["failures"] = r.failures.size();
    return doc.dump(2) + "\n";
}

std::string report_to_text(const EvalReport& r) {
    std::ostringstream out;
    out << "scorer " << r.scorer << ", K = " << r.k_candidates << (r.combined ? ", combined score" : "") << '\n';
    out << "queries " << r.queries << ", evaluated " << r.evaluated << ", dropped " << r.dropped.size() << "\n\n";

    const auto& tol = r.config.tolerances.values;
    out << "Recall@1 [%]" << std::string(6, ' ');
    for (double v : tol) {
        const auto label = "tol " + tolerance_label(v);
        out << std::string(label.size() < 10 ? 10 - label.size() : 1, ' ') << label;
    }
    out << '\n';
    auto row = [&](const std::string& name, const std::vector<double>& vals) {
        out << name << std::string(name.size() < 18 ? 18 - name.size() : 1, ' ');
        for (double v : vals) {
            const auto s = fixed(v, 1);
            out << std::string(s.size() < 10 ? 10 - s.size() : 1, ' ') << s;
        }
        out << '\n';
    };
    if (r.recall_at_1) {
        row("all", *r.recall_at_1);
    } else {
        out << "all               (no evaluated queries)\n";
    }
    for (const auto& [name, v] : r.per_sequence) row(name, v);

    if (r.recall_at_n) {
        out << "\nRecall@N [%] within " << tolerance_label(r.config.metric_threshold) << " m\n";
        std::vector<double> vals = *r.recall_at_n;
        out << std::string(18, ' ');
        for (auto n : r.config.n_values) {
            const auto label = "@" + std::to_string(n);
            out << std::string(label.size() < 10 ? 10 - label.size() : 1, ' ') << label;
        }
        out << '\n';
        row("all", vals);
    }

    out << "\nDatabase: " << r.sizes.reference_count << " references, features " << r.sizes.feature_bytes
        << " B, global descriptors " << r.sizes.descriptor_bytes << " B, total " << r.sizes.total() << " B\n";

    if (r.timings) {
        out << "\nStage time per query [s]      mean        p95\n";
        auto t = [&](const char* name, const StageSummary& s) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%-24s %10.5f %10.5f\n", name, s.mean, s.p95);
            out << buf;
        };
        t("filtering", r.timings->filtering);
        t("feature load", r.timings->feature_load);
        t("matching + score", r.timings->matching_score);
        t("total", r.timings->total);
    }
    return out.str();
}

std::string failures_to_csv(const EvalReport& r) {
    std::ostringstream out;
    out << "query_id,rank1,gt";
    for (double v : r.config.tolerances.values) out << ",tol_" << tolerance_label(v);
    out << '\n';
    for (const auto& f : r.failures) {
        out << f.query_id << ',' << (f.rank1 ? std::to_string(*f.rank1) : std::string()) << ',';
        for (std::size_t i = 0; i < f.ground_truth.size(); ++i) out << (i ? ";" : "") << f.ground_truth[i];
        for (bool p : f.passed) out << ',' << (p ? 1 : 0);
        out << '\n';
    }
    return out.str();
}

} // namespace vpr
