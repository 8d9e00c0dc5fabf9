#include "vpr/matcher.hpp"

#include "vpr/errors.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <sstream>

namespace vpr {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

// Upper bound on the disagreement between two float-GEMM similarity entries
// and their exact values, for descriptors of (near) unit norm.
float similarity_slack(std::size_t dim) {
    constexpr double u = std::numeric_limits<float>::epsilon() / 2;
    return static_cast<float>(1.1 * (2.0 * static_cast<double>(dim) + 16.0) * u + 1e-7);
}

Eigen::VectorXf half_squared_norms(const FeatureSet& set) {
    // Eight partial sums; the result only feeds the slack-guarded ranking.
    Eigen::VectorXf out(static_cast<Eigen::Index>(set.size()));
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto d = set.descriptor(i);
        double acc[8] = {};
        std::size_t k = 0;
        for (; k + 8 <= d.size(); k += 8)
            for (std::size_t l = 0; l < 8; ++l) acc[l] += static_cast<double>(d[k + l]) * d[k + l];
        for (; k < d.size(); ++k) acc[0] += static_cast<double>(d[k]) * d[k];
        const double sq = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
        out[static_cast<Eigen::Index>(i)] = static_cast<float>(0.5 * sq);
    }
    return out;
}

} // namespace

WeightScheme parse_weight_scheme(std::string_view name) {
    if (name == "fs" || name == "FS") return WeightScheme::FS;
    if (name == "dmf" || name == "DMF") return WeightScheme::DMF;
    throw ContractError("unknown weight scheme \"" + std::string(name) + "\" (expected fs or dmf)");
}

std::string_view to_string(WeightScheme scheme) {
    return scheme == WeightScheme::FS ? "fs" : "dmf";
}

std::size_t tie_break_nn(std::span<const double> distances) {
    if (distances.empty()) throw ContractError("tie_break_nn: empty distance list");
    std::size_t best = 0;
    for (std::size_t i = 1; i < distances.size(); ++i) {
        if (distances[i] < distances[best]) best = i;
    }
    return best;
}

double squared_distance(std::span<const float> a, std::span<const float> b) {
    double sq = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
        sq += d * d;
    }
    return sq;
}

MatchSet match_features(const FeatureSet& a, const FeatureSet& b) {
    if (a.descriptor_dim != b.descriptor_dim) {
        throw ContractError("match_features: descriptor dimension mismatch (" + std::to_string(a.descriptor_dim) +
                            " vs " + std::to_string(b.descriptor_dim) + ")");
    }
    MatchSet ms;
    ms.query_id = a.image_id;
    ms.candidate_id = b.image_id;
    if (a.empty() || b.empty()) return ms;

    const auto na = static_cast<Eigen::Index>(a.size());
    const auto nb = static_cast<Eigen::Index>(b.size());
    const auto dim = static_cast<Eigen::Index>(a.descriptor_dim);
    const ConstRowMap da(a.descriptors.data(), na, dim);
    const ConstRowMap db(b.descriptors.data(), nb, dim);

    RowMatrix sim(na, nb);
    sim.noalias() = da * db.transpose();

    // sim(i,j) - |b_j|^2/2 ranks j by -|a_i - b_j|^2/2 (row scan);
    // sim(i,j) - |a_i|^2/2 ranks i likewise for a fixed column.
    const auto ha = half_squared_norms(a);
    const auto hb = half_squared_norms(b);
    const float slack = similarity_slack(a.descriptor_dim);
    constexpr double inf = std::numeric_limits<double>::infinity();

    // One pass over sim for both maxima; max and subtraction are exact float
    // operations, so vectorising them does not change the thresholds.
    Eigen::VectorXf row_best(na);
    Eigen::RowVectorXf col_best = Eigen::RowVectorXf::Constant(nb, -std::numeric_limits<float>::infinity());
    const Eigen::RowVectorXf hb_row = hb.transpose();
    for (Eigen::Index i = 0; i < na; ++i) {
        const auto row = sim.row(i);
        row_best[i] = (row - hb_row).maxCoeff();
        col_best = col_best.cwiseMax((row.array() - ha[i]).matrix());
    }

    std::vector<std::uint32_t> row_nn(static_cast<std::size_t>(na));
    std::vector<double> row_d2(static_cast<std::size_t>(na));
    for (Eigen::Index i = 0; i < na; ++i) {
        const float* row = sim.data() + i * nb;
        const float cutoff = row_best[i] - slack;
        double best_d2 = inf;
        std::uint32_t best_j = 0;
        for (Eigen::Index j = 0; j < nb; ++j) {
            if (row[j] - hb[j] < cutoff) continue;
            const double d2 = squared_distance(a.descriptor(i), b.descriptor(j));
            if (d2 < best_d2) {
                best_d2 = d2;
                best_j = static_cast<std::uint32_t>(j);
            }
        }
        row_nn[i] = best_j;
        row_d2[i] = best_d2;
    }

    Eigen::RowVectorXf col_cutoff = col_best.array() - slack;
    std::vector<double> col_d2(static_cast<std::size_t>(nb), inf);
    std::vector<std::uint32_t> col_nn(static_cast<std::size_t>(nb), 0);
    for (Eigen::Index i = 0; i < na; ++i) {
        const float* row = sim.data() + i * nb;
        for (Eigen::Index j = 0; j < nb; ++j) {
            if (row[j] - ha[i] < col_cutoff[j]) continue;
            const double d2 = (static_cast<std::uint32_t>(j) == row_nn[i])
                                  ? row_d2[i]
                                  : squared_distance(a.descriptor(i), b.descriptor(j));
            if (d2 < col_d2[j]) {
                col_d2[j] = d2;
                col_nn[j] = static_cast<std::uint32_t>(i);
            }
        }
    }

    for (Eigen::Index i = 0; i < na; ++i) {
        const std::uint32_t j = row_nn[i];
        if (col_nn[j] != static_cast<std::uint32_t>(i)) continue;
        const auto& ka = a.keypoints[i];
        const auto& kb = b.keypoints[j];
        Match m;
        m.idx_a = static_cast<std::uint32_t>(i);
        m.idx_b = j;
        m.distance = std::sqrt(row_d2[i]);
        m.weight = 1.0;
        m.shift_x = static_cast<double>(ka.x) - static_cast<double>(kb.x);
        m.shift_y = static_cast<double>(ka.y) - static_cast<double>(kb.y);
        ms.matches.push_back(m);
    }
    return ms;
}

MatchSet weigh_matches(MatchSet ms, WeightScheme scheme, const FeatureSet& a, const FeatureSet& b) {
    for (auto& m : ms.matches) {
        if (m.idx_a >= a.size() || m.idx_b >= b.size()) {
            throw ContractError("weigh_matches: match index out of range");
        }
        if (scheme == WeightScheme::FS) {
            m.weight = static_cast<double>(a.keypoints[m.idx_a].score) + static_cast<double>(b.keypoints[m.idx_b].score);
        } else {
            m.weight = std::max(0.0, 2.0 - m.distance);
        }
    }
    return ms;
}

std::string match_dump_csv(const MatchSet& ms) {
    std::ostringstream out;
    out.precision(17);
    out << "idx_a,idx_b,distance,weight,shift_x,shift_y\n";
    for (const auto& m : ms.matches) {
        out << m.idx_a << ',' << m.idx_b << ',' << m.distance << ',' << m.weight << ',' << m.shift_x << ','
            << m.shift_y << '\n';
    }
    return out.str();
}

} // namespace vpr
