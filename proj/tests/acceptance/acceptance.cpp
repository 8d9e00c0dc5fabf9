// Acceptance suite: one PASS/FAIL line per criterion.
//
// Exit status is 0 when every criterion passes or fails only in a part listed
// as a known deviation (printed as such); 1 otherwise.

#include "support.hpp"
#include "vpr/aggregate.hpp"
#include "vpr/anchor.hpp"
#include "vpr/evaluation.hpp"
#include "vpr/histogram.hpp"
#include "vpr/matcher.hpp"
#include "vpr/pipeline.hpp"
#include "vpr/ransac.hpp"
#include "vpr/synthetic.hpp"

#include <Eigen/Dense>

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

using namespace vpr;
using namespace vpr::testing;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Verdict {
    bool pass = true;
    /// Set when the only failing part is a documented deviation.
    bool known_deviation = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double total_weight(const MatchSet& ms) {
    double s = 0.0;
    for (const auto& m : ms.matches) s += m.weight;
    return s;
}

// -- oracle equivalence ------------------------------------------------------

Verdict oracle_equivalence() {
    constexpr int kFixtures = 200;
    Verdict v;

    int matcher_bad = 0;
    for (int s = 0; s < kFixtures; ++s) {
        Rng rng(derive_seed(1, s));
        const auto dim = static_cast<std::uint16_t>(s % 10 == 0 ? 512 : 4 + uniform_index(rng, 125));
        const auto a = random_feature_set(rng, uniform_index(rng, 160), dim);
        const auto b = random_feature_set(rng, uniform_index(rng, 160), dim);
        const auto ms = match_features(a, b);
        std::vector<std::pair<std::uint32_t, std::uint32_t>> got;
        for (const auto& m : ms.matches) got.emplace_back(m.idx_a, m.idx_b);
        if (got != oracle_mutual_nn(a, b)) ++matcher_bad;
    }

    int anchor_bad = 0;
    for (int s = 0; s < kFixtures; ++s) {
        Rng rng(derive_seed(2, s));
        AnchorConfig cfg;
        cfg.grid_bins = 4 + static_cast<int>(uniform_index(rng, 20));
        cfg.window = 1 + static_cast<int>(uniform_index(rng, 12));
        cfg.tolerance = uniform(rng, 0.5, 6.0);
        const auto a = random_feature_set(rng, 300, 4, 336, 336);
        const auto b = random_feature_set(rng, 300, 4, 320 + static_cast<std::uint32_t>(uniform_index(rng, 40)), 240);
        const auto ms = random_pairing(rng, a, b, 1 + uniform_index(rng, 250));
        const auto mat = build_bin_matrix(ms, a, b, cfg);
        const auto oracle_mat = oracle_bin_matrix(ms, a, b, cfg.grid_bins);
        bool same = mat.present() == oracle_mat.size();
        for (const auto& [cell, o] : oracle_mat) {
            const auto& c = mat.at(cell.first, cell.second);
            same = same && c && c->mx == o.mx && c->my == o.my && c->weight == o.w;
        }
        if (!same || anchor_score(mat, cfg) != oracle_anchor_score(oracle_mat, cfg.grid_bins, cfg.window, cfg.tolerance))
            ++anchor_bad;
    }

    int aggregate_bad = 0;
    for (int s = 0; s < kFixtures; ++s) {
        Rng rng(derive_seed(3, s));
        const ImageDims dims{std::floor(uniform(rng, 50, 640)), std::floor(uniform(rng, 50, 640))};
        const auto ms = random_shift_matches(rng, uniform_index(rng, 300), dims.width, dims.height);
        if (aggregate_score(ms, dims) != oracle_aggregate(ms, dims.width, dims.height)) ++aggregate_bad;
    }

    int hist_exact_bad = 0, hist_trunc_bad = 0;
    double worst_exact = 0.0, worst_trunc = 0.0, worst_trunc_sumw = 0.0;
    for (int s = 0; s < kFixtures; ++s) {
        Rng rng(derive_seed(4, s));
        const auto ms = random_shift_matches(rng, 30, 336, 336);
        const auto oracle = oracle_histogram(ms, 336, 336, 15.0, 22.5);
        HistogramConfig exact;
        exact.truncation_radius = std::numeric_limits<double>::infinity();
        const double e = std::abs(histogram_score(ms, {336, 336}, exact).score - oracle.max) / oracle.max;
        worst_exact = std::max(worst_exact, e);
        if (e > 1e-12) ++hist_exact_bad;
        const double diff = std::abs(histogram_score(ms, {336, 336}, HistogramConfig{}).score - oracle.max);
        worst_trunc = std::max(worst_trunc, diff / oracle.max);
        worst_trunc_sumw = std::max(worst_trunc_sumw, diff / total_weight(ms));
        if (diff > 1.2e-4 * oracle.max) ++hist_trunc_bad;
    }

    const bool core_ok = matcher_bad == 0 && anchor_bad == 0 && aggregate_bad == 0 && hist_exact_bad == 0;
    v.pass = core_ok && hist_trunc_bad == 0;
    v.known_deviation = core_ok && hist_trunc_bad > 0;
    v.detail = fmt("%d fixtures each; mismatches matcher=%d anchor=%d aggregate=%d; histogram untruncated max rel err "
                   "%.2e; 3-sigma truncated vs untruncated: %d/%d above 1.2e-4 rel (worst %.2e rel, %.2e of sum w; "
                   "exp(-9/2)*sum w bound %s)",
                   kFixtures, matcher_bad, anchor_bad, aggregate_bad, worst_exact, hist_trunc_bad, kFixtures,
                   worst_trunc, worst_trunc_sumw, worst_trunc_sumw <= std::exp(-4.5) ? "holds" : "violated");
    return v;
}

// -- closed-form checks ------------------------------------------------------

Verdict histogram_spot_checks() {
    Verdict v;
    int center_bad = 0, bound_bad = 0;
    for (int s = 0; s < 200; ++s) {
        Rng rng(derive_seed(5, s));
        const ImageDims dims{std::floor(uniform(rng, 40, 640)), std::floor(uniform(rng, 40, 640))};
        HistogramConfig cfg;
        cfg.bin_size = uniform(rng, 5, 40);
        cfg.sigma = uniform(rng, 5, 40);
        const ShiftHistogram grid(dims, cfg.bin_size);
        MatchSet one;
        Match m;
        m.shift_x = grid.center_x(uniform_index(rng, grid.cols()));
        m.shift_y = grid.center_y(uniform_index(rng, grid.rows()));
        m.weight = uniform(rng, 0.0, 2.0);
        one.matches.push_back(m);
        if (histogram_score(one, dims, cfg).score != m.weight) ++center_bad;

        const auto ms = random_shift_matches(rng, uniform_index(rng, 200), dims.width, dims.height);
        if (histogram_score(ms, dims, cfg).score > total_weight(ms)) ++bound_bad;
    }
    v.pass = center_bad == 0 && bound_bad == 0;
    v.detail = fmt("200 fixtures; bin-center vote != w: %d; score > sum w: %d", center_bad, bound_bad);
    return v;
}

Verdict anchor_translation() {
    Verdict v;
    int cell_bad = 0, total_bad = 0, fixtures = 0;
    for (int s = 0; s < 50; ++s) {
        Rng rng(derive_seed(6, s));
        AnchorConfig cfg;
        cfg.window = 1 + static_cast<int>(uniform_index(rng, 10));
        cfg.tolerance = uniform(rng, 0.5, 5);
        const int g = cfg.grid_bins;
        const int dx = static_cast<int>(uniform_index(rng, 5)) - 2, dy = static_cast<int>(uniform_index(rng, 5)) - 2;
        // one feature at the center of each chosen cell, moved by (dx, dy) cells in B
        FeatureSet a{"a", 336, 336, 1, {}, {}}, b{"b", 336, 336, 1, {}, {}};
        const float d[1] = {1.0f};
        const double cell = 336.0 / g;
        MatchSet ms;
        for (int j = 2; j < g - 2; ++j)
            for (int i = 2; i < g - 2; ++i) {
                if (uniform01(rng) > 0.6) continue;
                a.push_back({static_cast<float>((i + 0.5) * cell), static_cast<float>((j + 0.5) * cell), 1}, d);
                b.push_back({static_cast<float>((i + dx + 0.5) * cell), static_cast<float>((j + dy + 0.5) * cell), 1}, d);
                Match m;
                m.idx_a = m.idx_b = static_cast<std::uint32_t>(a.size() - 1);
                m.weight = uniform(rng, 0.1, 2.0);
                ms.matches.push_back(m);
            }
        const auto mat = build_bin_matrix(ms, a, b, cfg);
        double closed_form = 0.0;
        for (int j = 0; j < g; ++j)
            for (int i = 0; i < g; ++i) {
                const auto& c = mat.at(i, j);
                if (!c) continue;
                int neighbours = 0;
                for (int l = std::max(0, j - cfg.window); l <= std::min(g - 1, j + cfg.window); ++l)
                    for (int k = std::max(0, i - cfg.window); k <= std::min(g - 1, i + cfg.window); ++k)
                        if ((k != i || l != j) && mat.at(k, l)) ++neighbours;
                const double expect = c->weight * (cfg.tolerance * neighbours);
                double per_neighbour = 0.0;
                for (int n = 0; n < neighbours; ++n) per_neighbour += cfg.tolerance;
                if (anchor_cell_score(mat, i, j, cfg) != c->weight * per_neighbour ||
                    std::abs(anchor_cell_score(mat, i, j, cfg) - expect) > 1e-12 * expect)
                    ++cell_bad;
                closed_form += c->weight * per_neighbour;
            }
        if (anchor_score(mat, cfg) != closed_form) ++total_bad;
        ++fixtures;
    }
    v.pass = cell_bad == 0 && total_bad == 0;
    v.detail = fmt("%d translated grids; anchors off t-per-neighbour: %d; totals off closed form: %d", fixtures, cell_bad,
                   total_bad);
    return v;
}

Verdict aggregate_closed_forms() {
    Verdict v;
    int single_bad = 0;
    for (int s = 0; s < 200; ++s) {
        Rng rng(derive_seed(7, s));
        const ImageDims dims{std::floor(uniform(rng, 10, 1000)), std::floor(uniform(rng, 10, 1000))};
        MatchSet ms;
        Match m;
        m.shift_x = uniform(rng, -dims.width, dims.width);
        m.shift_y = uniform(rng, -dims.height, dims.height);
        m.weight = uniform(rng, 0, 2);
        ms.matches.push_back(m);
        if (aggregate_score(ms, dims) != (dims.width * dims.width + dims.height * dims.height) * m.weight) ++single_bad;
    }
    MatchSet two;
    two.matches.resize(2);
    two.matches[0].weight = two.matches[1].weight = 1.0;
    two.matches[1].shift_x = 20.0;
    const double worked = aggregate_score(two, {336, 336});
    v.pass = single_bad == 0 && worked == 438344.0;
    v.detail = fmt("n=1 mismatches: %d/200; two-match example = %.1f (expected 438344)", single_bad, worked);
    return v;
}

Verdict combined_score_checks() {
    Verdict v;
    // full precision through the pipeline
    SynthSpec spec;
    spec.n_places = 20;
    spec.outlier_fraction = 0.3;
    spec.global_noise_sigma = 0.5;
    const auto data = generate(spec);
    const auto db = data.database();
    int precision_bad = 0, order_bad = 0, mono_bad = 0, checked = 0;
    for (double c : {1e6, 1.0, 250.0}) {
        PipelineConfig cfg;
        cfg.k_candidates = 20;
        cfg.combine = CombineConfig{c};
        for (const auto& q : data.manifest.query_ids) {
            const auto r = recognize(q, db, cfg);
            for (std::size_t i = 0; i < r.entries.size(); ++i) {
                const auto& e = r.entries[i];
                if (e.final_score != c * e.filtering_score + e.rerank_score) ++precision_bad;
                if (i > 0 && e.final_score > r.entries[i - 1].final_score) ++order_bad;
                ++checked;
            }
        }
    }
    // raising either score never lowers an entry's rank
    Rng rng(8);
    for (int t = 0; t < 500; ++t) {
        const double c = std::pow(10.0, uniform(rng, -3, 7));
        std::vector<RankedEntry> table(2 + uniform_index(rng, 30));
        for (std::size_t i = 0; i < table.size(); ++i) {
            table[i].reference_index = i;
            table[i].filtering_score = uniform(rng, -1, 1);
            table[i].rerank_score = uniform(rng, 0, 1e4);
            table[i].final_score = combined_score(c, table[i].filtering_score, table[i].rerank_score);
        }
        auto rank_of = [](std::vector<RankedEntry> tb, std::size_t id) {
            sort_entries(tb);
            for (std::size_t i = 0; i < tb.size(); ++i)
                if (tb[i].reference_index == id) return i;
            return tb.size();
        };
        const std::size_t id = uniform_index(rng, table.size());
        const std::size_t before = rank_of(table, id);
        auto up_f = table, up_r = table;
        up_f[id].filtering_score += uniform(rng, 1e-6, 1);
        up_f[id].final_score = combined_score(c, up_f[id].filtering_score, up_f[id].rerank_score);
        up_r[id].rerank_score += uniform(rng, 1e-6, 1e4);
        up_r[id].final_score = combined_score(c, up_r[id].filtering_score, up_r[id].rerank_score);
        if (rank_of(up_f, id) > before || rank_of(up_r, id) > before) ++mono_bad;
    }
    v.pass = precision_bad == 0 && order_bad == 0 && mono_bad == 0;
    v.detail = fmt("%d pipeline entries: final != c*s_f+s_r: %d, misordered: %d; 500 random tables, rank drops: %d",
                   checked, precision_bad, order_bad, mono_bad);
    return v;
}

// -- ransac ------------------------------------------------------------------

Verdict ransac_planted() {
    Verdict v;
    std::string counts;
    int off = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(derive_seed(9, seed));
        Eigen::Matrix3d h;
        h << uniform(rng, 0.8, 1.2), uniform(rng, -0.2, 0.2), uniform(rng, -30, 30), uniform(rng, -0.2, 0.2),
            uniform(rng, 0.8, 1.2), uniform(rng, -30, 30), uniform(rng, -4e-4, 4e-4), uniform(rng, -4e-4, 4e-4), 1.0;
        std::vector<PointPair> pairs;
        for (int k = 0; k < 35; ++k) {
            const double x = uniform(rng, 0, 336), y = uniform(rng, 0, 336);
            const Eigen::Vector2d q = (h * Eigen::Vector3d(x, y, 1)).hnormalized();
            pairs.push_back({x, y, q.x(), q.y()});
        }
        for (int k = 0; k < 15; ++k)
            pairs.push_back({uniform(rng, 0, 336), uniform(rng, 0, 336), uniform(rng, 0, 336), uniform(rng, 0, 336)});
        for (std::size_t i = pairs.size(); i > 1; --i) std::swap(pairs[i - 1], pairs[uniform_index(rng, i)]);
        Homography truth;
        truth.m = h;
        const auto planted = count_inliers(truth, pairs, 8.0);
        RansacConfig cfg;
        cfg.reprojection_threshold = 8.0;
        cfg.rng_seed = seed;
        const auto r = ransac_score(pairs, cfg, 336.0 * 336.0);
        const long diff = static_cast<long>(r.score) - static_cast<long>(planted);
        if (std::abs(diff) > 2) ++off;
        counts += fmt("%s%zu/%zu", counts.empty() ? "" : " ", r.score, planted);
    }
    Rng rng(10);
    std::vector<PointPair> identity;
    for (int k = 0; k < 50; ++k) {
        const double x = uniform(rng, 0, 336), y = uniform(rng, 0, 336);
        identity.push_back({x, y, x, y});
    }
    const auto id = ransac_score(identity, RansacConfig{}, 336.0 * 336.0);
    v.pass = off == 0 && id.score == 50 && id.iterations < 2000;
    v.detail = fmt("found/planted over 10 seeds: %s; identity: score %zu after %d iterations", counts.c_str(), id.score,
                   id.iterations);
    return v;
}

// -- synthetic end to end ----------------------------------------------------

double recall1(const SynthDataset& data, ScorerKind kind, std::size_t k) {
    const auto db = data.database();
    PipelineConfig cfg;
    cfg.scorer = kind;
    cfg.k_candidates = k;
    std::vector<RankedResult> results;
    for (const auto& q : data.manifest.query_ids) results.push_back(recognize(q, db, cfg));
    EvalConfig ec;
    ec.tolerances = ToleranceSpec{ToleranceSpec::Mode::Index, {1}};
    const auto report = evaluate(results, db, cfg, ec);
    return report.recall_at_1 ? report.recall_at_1->front() : 0.0;
}

Verdict synthetic_end_to_end(double& elapsed) {
    const auto start = Clock::now();
    Verdict v;
    SynthSpec clean;
    clean.n_places = 100;
    const auto clean_data = generate(clean);
    std::string clean_detail;
    bool clean_ok = true;
    for (auto kind : {ScorerKind::Histogram, ScorerKind::Anchor, ScorerKind::Aggregate, ScorerKind::Ransac}) {
        const double r = recall1(clean_data, kind, 10);
        clean_ok = clean_ok && r == 100.0;
        clean_detail += fmt("%s%s=%.1f", clean_detail.empty() ? "" : " ", std::string(to_string(kind)).c_str(), r);
    }
    SynthSpec noisy = clean;
    noisy.outlier_fraction = 0.4;
    noisy.descriptor_noise_sigma = 0.1;
    const auto noisy_data = generate(noisy);
    const double hist = recall1(noisy_data, ScorerKind::Histogram, 10);
    const double agg = recall1(noisy_data, ScorerKind::Aggregate, 10);
    elapsed = since(start);
    v.pass = clean_ok && hist >= agg;
    v.detail = fmt("clean Recall@1: %s; 40%% outliers, sigma 0.1: histogram=%.1f aggregate=%.1f",
                   clean_detail.c_str(), hist, agg);
    return v;
}

// -- metric ground truth -----------------------------------------------------

Verdict metric_ground_truth() {
    Verdict v;
    int wrong = 0, accounting_bad = 0;
    std::size_t total_dropped = 0, total_queries = 0;
    for (int s = 0; s < 200; ++s) {
        Rng rng(derive_seed(11, s));
        std::vector<Position> refs(1 + uniform_index(rng, 150));
        for (auto& p : refs) p = {uniform(rng, 0, 80), uniform(rng, 0, 80)};
        if (s % 4 == 0) refs.push_back(refs.front());  // exact duplicate: lower index must win
        std::vector<std::pair<std::string, Position>> queries;
        for (int q = 0; q < 60; ++q)
            queries.push_back({"q" + std::to_string(q), {uniform(rng, 0, 80), uniform(rng, 0, 80)}});
        if (s % 4 == 0) queries.push_back({"dup", refs.front()});
        const auto gt = build_ground_truth_metric(refs, queries, 5.0);
        std::vector<std::string> oracle_dropped;
        for (const auto& [id, pos] : queries) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < refs.size(); ++i) {
                const double d = std::sqrt((refs[i].east - pos.east) * (refs[i].east - pos.east) +
                                           (refs[i].north - pos.north) * (refs[i].north - pos.north));
                if (d < best_d) {
                    best_d = d;
                    best = i;
                }
            }
            if (best_d > 5.0) {
                oracle_dropped.push_back(id);
            } else if (!gt.matched.count(id) || gt.matched.at(id).first != best) {
                ++wrong;
            }
        }
        if (gt.dropped != oracle_dropped || gt.matched.size() + gt.dropped.size() != queries.size()) ++accounting_bad;
        total_dropped += gt.dropped.size();
        total_queries += queries.size();
    }

    // through evaluate(): a metric synthetic run with two queries pushed out of range
    SynthSpec spec;
    spec.n_places = 15;
    auto data = generate(spec);
    data.manifest.tolerance_unit = ToleranceUnit::Meters;
    data.manifest.ground_truth.clear();
    data.manifest.positions.at("query_0004").north += 5.5;
    data.manifest.positions.at("query_0009").north += 4.5;
    const auto db = data.database();
    PipelineConfig cfg;
    cfg.k_candidates = 5;
    std::vector<RankedResult> results;
    for (const auto& q : data.manifest.query_ids) results.push_back(recognize(q, db, cfg));
    EvalConfig ec;
    ec.tolerances = ToleranceSpec::meters_default();
    const auto report = evaluate(results, db, cfg, ec);
    const bool eval_ok = report.dropped == std::vector<std::string>{"query_0004"} && report.evaluated == 14 &&
                         report.queries == 15;

    v.pass = wrong == 0 && accounting_bad == 0 && eval_ok;
    v.detail = fmt("200 fixtures, %zu queries (%zu dropped): wrong nearest %d, accounting mismatches %d; "
                   "evaluate(): dropped=%zu evaluated=%zu",
                   total_queries, total_dropped, wrong, accounting_bad, report.dropped.size(), report.evaluated);
    return v;
}

// -- performance ---------------------------------------------------------------

Verdict performance() {
    Verdict v;
    constexpr std::size_t kQueries = 4;
    auto run = [&](std::size_t places, ScorerKind kind, double& filtering) {
        SynthSpec spec;
        spec.n_places = places;
        spec.features_per_image = 1000;
        spec.descriptor_dim = 512;
        spec.outlier_fraction = 0.5;
        spec.descriptor_noise_sigma = 0.1;
        spec.global_noise_sigma = 0.5;
        const auto data = generate(spec);
        const auto db = data.database();
        PipelineConfig cfg;
        cfg.k_candidates = 50;
        cfg.scorer = kind;
        cfg.jobs = 1;
        double rerank = 0.0;
        filtering = 0.0;
        for (std::size_t q = 0; q < kQueries; ++q) {
            // the same queries at every database size; best of two runs per
            // query so a scheduler stall does not count as compute time
            double best_rerank = std::numeric_limits<double>::infinity();
            double best_filter = std::numeric_limits<double>::infinity();
            for (int rep = 0; rep < 2; ++rep) {
                const auto r = recognize(data.manifest.query_ids[q * 12], db, cfg);
                best_rerank = std::min(best_rerank, r.timings.matching_score);
                best_filter = std::min(best_filter, r.timings.filtering);
            }
            rerank += best_rerank;
            filtering += best_filter;
        }
        filtering /= kQueries;
        return rerank / kQueries;
    };
    std::string detail;
    bool fast = true;
    double filt = 0.0;
    for (auto kind : {ScorerKind::Histogram, ScorerKind::Anchor, ScorerKind::Aggregate, ScorerKind::Ransac}) {
        const double t = run(50, kind, filt);
        fast = fast && t <= 1.0;
        detail += fmt("%s%s %.3fs", detail.empty() ? "" : ", ", std::string(to_string(kind)).c_str(), t);
    }
    double filt_small = 0.0, filt_large = 0.0;
    const double small = run(50, ScorerKind::Histogram, filt_small);
    const double large = run(200, ScorerKind::Histogram, filt_large);
    const double ratio = large / small;
    const bool flat = ratio <= 1.25 && ratio >= 0.8;
    v.pass = fast && flat;
    v.detail = fmt("K=50, 1000 features, D=512, 1 thread, mean matching+score per query (best of 2): %s; "
                   "database 50 -> 200 refs: %.3fs -> %.3fs (x%.2f), filtering %.4fs -> %.4fs",
                   detail.c_str(), small, large, ratio, filt_small, filt_large);
    return v;
}

// -- determinism ---------------------------------------------------------------

int shell(const std::string& cmd) {
    const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Verdict determinism() {
    Verdict v;
    TempDir dir("acceptance_det");
    const std::string cli = VPR_CLI_PATH;
    const auto data = dir.path() / "data";
    if (shell(cli + " synth --out " + data.string() +
              " --n-places 30 --outlier-fraction 0.4 --descriptor-noise-sigma 0.15 --global-noise-sigma 0.6 --seed 5") !=
        0) {
        v.pass = false;
        v.detail = "synth failed";
        return v;
    }
    const std::string args = " --manifest " + (data / "manifest.json").string() + " --features " +
                             (data / "features").string() + " --descriptors " + (data / "descriptors").string() +
                             " --k-candidates 10 --seed 42";
    int differing = 0, runs = 0;
    std::string failed;
    for (const char* scorer : {"histogram", "anchor", "aggregate", "ransac"}) {
        std::vector<std::string> reports;
        int idx = 0;
        for (const char* jobs : {"1", "1", "4", "0"}) {
            const auto out = dir.path() / (std::string(scorer) + std::to_string(idx++));
            if (shell(cli + " eval" + args + " --scorer " + scorer + " --jobs " + jobs + " --out " + out.string()) != 0) {
                failed += std::string(" ") + scorer;
                continue;
            }
            reports.push_back(slurp(out / "report.json") + slurp(out / "results.jsonl"));
            ++runs;
        }
        for (const auto& r : reports)
            if (r != reports.front()) ++differing;
    }
    v.pass = differing == 0 && failed.empty() && runs == 16;
    v.detail = fmt("4 scorers x runs with --jobs 1,1,4,0: %d runs, %d outputs differ from the first%s%s", runs,
                   differing, failed.empty() ? "" : "; failed:", failed.c_str());
    return v;
}

} // namespace

int main() {
    const auto start = Clock::now();
    struct Line {
        const char* name;
        Verdict verdict;
    };
    std::vector<Line> lines;
    auto timed = [&](const char* name, const std::function<Verdict()>& fn) {
        const auto t = Clock::now();
        auto v = fn();
        std::fprintf(stderr, "  [%s done in %.1fs]\n", name, since(t));
        lines.push_back({name, std::move(v)});
    };

    timed("oracle-equivalence", oracle_equivalence);
    timed("histogram-spot-checks", histogram_spot_checks);
    timed("anchor-translation", anchor_translation);
    timed("aggregate-closed-forms", aggregate_closed_forms);
    timed("combined-score", combined_score_checks);
    timed("ransac-planted-model", ransac_planted);
    double e2e_seconds = 0.0;
    timed("synthetic-end-to-end", [&] { return synthetic_end_to_end(e2e_seconds); });
    const std::size_t e2e_line = lines.size() - 1;
    timed("metric-ground-truth", metric_ground_truth);
    timed("performance-envelope", performance);
    timed("determinism", determinism);

    // the suite runtime bound belongs to the end-to-end criterion
    const double suite = since(start);
    auto& e2e = lines[e2e_line].verdict;
    e2e.pass = e2e.pass && suite < 300.0;
    e2e.detail += fmt("; end-to-end %.1fs, full suite %.1fs (limit 300s)", e2e_seconds, suite);

    int hard_failures = 0;
    for (const auto& l : lines) {
        const char* status = l.verdict.pass ? "PASS" : "FAIL";
        const char* note = (!l.verdict.pass && l.verdict.known_deviation) ? " [known deviation, see notes]" : "";
        std::printf("%s %s: %s%s\n", status, l.name, l.verdict.detail.c_str(), note);
        if (!l.verdict.pass && !l.verdict.known_deviation) ++hard_failures;
    }
    std::fflush(stdout);
    return hard_failures == 0 ? 0 : 1;
}
