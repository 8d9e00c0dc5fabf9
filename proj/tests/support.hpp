#pragma once

// Test fixtures and brute-force oracles. Nothing here calls into the code
// paths it is used to check.

#include "vpr/feature_store.hpp"
#include "vpr/matcher.hpp"
#include "vpr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace vpr::testing {

inline FeatureSet random_feature_set(Rng& rng, std::size_t n, std::uint16_t dim, std::uint32_t width = 336,
                                     std::uint32_t height = 336, std::string id = "img") {
    FeatureSet set{std::move(id), width, height, dim, {}, {}};
    std::vector<float> desc(dim);
    for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        std::vector<double> tmp(dim);
        for (auto& v : tmp) {
            v = gaussian(rng);
            sq += v * v;
        }
        for (std::size_t k = 0; k < dim; ++k) desc[k] = static_cast<float>(tmp[k] / std::sqrt(sq));
        Keypoint kp{static_cast<float>(uniform(rng, 0.0, width)), static_cast<float>(uniform(rng, 0.0, height)),
                    static_cast<float>(uniform(rng, 0.0, 1.0))};
        kp.x = std::min(kp.x, std::nextafter(static_cast<float>(width), 0.0f));
        kp.y = std::min(kp.y, std::nextafter(static_cast<float>(height), 0.0f));
        set.push_back(kp, desc);
    }
    return set;
}

/// MatchSet with random in-range shifts and weights; indices are synthetic.
inline MatchSet random_shift_matches(Rng& rng, std::size_t n, double width, double height, double max_weight = 2.0) {
    MatchSet ms;
    for (std::size_t k = 0; k < n; ++k) {
        Match m;
        m.idx_a = static_cast<std::uint32_t>(k);
        m.idx_b = static_cast<std::uint32_t>(k);
        m.shift_x = uniform(rng, -width + 1e-9, width - 1e-9);
        m.shift_y = uniform(rng, -height + 1e-9, height - 1e-9);
        m.weight = uniform(rng, 0.0, max_weight);
        m.distance = 2.0 - std::min(2.0, m.weight);
        ms.matches.push_back(m);
    }
    return ms;
}

/// Random bijective pairing between a and b with positions taken from the sets.
inline MatchSet random_pairing(Rng& rng, const FeatureSet& a, const FeatureSet& b, std::size_t n) {
    std::vector<std::uint32_t> ia(a.size()), ib(b.size());
    for (std::size_t i = 0; i < ia.size(); ++i) ia[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 0; i < ib.size(); ++i) ib[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = ia.size(); i > 1; --i) std::swap(ia[i - 1], ia[uniform_index(rng, i)]);
    for (std::size_t i = ib.size(); i > 1; --i) std::swap(ib[i - 1], ib[uniform_index(rng, i)]);
    MatchSet ms;
    n = std::min({n, a.size(), b.size()});
    for (std::size_t k = 0; k < n; ++k) {
        Match m;
        m.idx_a = ia[k];
        m.idx_b = ib[k];
        m.weight = uniform(rng, 0.0, 2.0);
        m.shift_x = static_cast<double>(a.keypoints[m.idx_a].x) - b.keypoints[m.idx_b].x;
        m.shift_y = static_cast<double>(a.keypoints[m.idx_a].y) - b.keypoints[m.idx_b].y;
        ms.matches.push_back(m);
    }
    return ms;
}

// -- matcher ---------------------------------------------------------------

inline double oracle_d2(const FeatureSet& a, std::size_t i, const FeatureSet& b, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.descriptor_dim; ++k) {
        const double d = static_cast<double>(a.descriptors[i * a.descriptor_dim + k]) -
                         static_cast<double>(b.descriptors[j * b.descriptor_dim + k]);
        s += d * d;
    }
    return s;
}

/// O(n^2) mutual nearest neighbours; ties to the lowest index.
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> oracle_mutual_nn(const FeatureSet& a, const FeatureSet& b) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    if (a.empty() || b.empty()) return out;
    std::vector<std::size_t> nn_ab(a.size()), nn_ba(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < b.size(); ++j) {
            const double d = oracle_d2(a, i, b, j);
            if (d < best) {
                best = d;
                nn_ab[i] = j;
            }
        }
    }
    for (std::size_t j = 0; j < b.size(); ++j) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = oracle_d2(a, i, b, j);
            if (d < best) {
                best = d;
                nn_ba[j] = i;
            }
        }
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (nn_ba[nn_ab[i]] == i) out.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(nn_ab[i]));
    }
    return out;
}

// -- histogram -------------------------------------------------------------

struct OracleHistogram {
    std::size_t cols = 0, rows = 0;
    std::vector<double> bins;
    double max = 0.0;
    std::size_t argmax = 0;
};

/// Exact all-bin Gaussian voting, no truncation.
inline OracleHistogram oracle_histogram(const MatchSet& ms, double width, double height, double bin, double sigma) {
    OracleHistogram h;
    h.cols = static_cast<std::size_t>(std::ceil(2 * width / bin));
    h.rows = static_cast<std::size_t>(std::ceil(2 * height / bin));
    h.bins.assign(h.cols * h.rows, 0.0);
    for (std::size_t r = 0; r < h.rows; ++r) {
        for (std::size_t c = 0; c < h.cols; ++c) {
            const double cx = -width + (c + 0.5) * bin;
            const double cy = -height + (r + 0.5) * bin;
            double s = 0.0;
            for (const auto& m : ms.matches) {
                const double dx = m.shift_x - cx, dy = m.shift_y - cy;
                s += m.weight * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            }
            h.bins[r * h.cols + c] = s;
            if (s > h.max) {
                h.max = s;
                h.argmax = r * h.cols + c;
            }
        }
    }
    return h;
}

// -- anchor ----------------------------------------------------------------

struct OracleCell {
    int mx, my;
    double w;
};

/// Hash-map vote tally per (A-cell, B-cell).
inline std::map<std::pair<int, int>, OracleCell> oracle_bin_matrix(const MatchSet& ms, const FeatureSet& a,
                                                                   const FeatureSet& b, int g) {
    auto cell = [g](double pos, double extent) {
        int c = static_cast<int>(std::floor(pos * g / extent));
        return std::clamp(c, 0, g - 1);
    };
    std::map<std::pair<int, int>, std::map<std::pair<int, int>, double>> tally;  // (ai,aj) -> (row,col) of B -> sum
    for (const auto& m : ms.matches) {
        const auto& ka = a.keypoints[m.idx_a];
        const auto& kb = b.keypoints[m.idx_b];
        tally[{cell(ka.x, a.width), cell(ka.y, a.height)}][{cell(kb.y, b.height), cell(kb.x, b.width)}] += m.weight;
    }
    std::map<std::pair<int, int>, OracleCell> out;
    for (const auto& [acell, votes] : tally) {
        std::optional<OracleCell> best;
        for (const auto& [rc, w] : votes) {
            if (w > 0.0 && (!best || w > best->w)) best = OracleCell{rc.second, rc.first, w};
        }
        if (best) out[acell] = *best;
    }
    return out;
}

/// Quadruple loop over anchors and all grid cells.
inline double oracle_anchor_score(const std::map<std::pair<int, int>, OracleCell>& mat, int g, int window, double t) {
    double total = 0.0;
    for (int j = 0; j < g; ++j) {
        for (int i = 0; i < g; ++i) {
            auto anchor = mat.find({i, j});
            if (anchor == mat.end()) continue;
            double sum = 0.0;
            for (int l = 0; l < g; ++l) {
                for (int k = 0; k < g; ++k) {
                    if (std::abs(k - i) > window || std::abs(l - j) > window || (k == i && l == j)) continue;
                    auto other = mat.find({k, l});
                    if (other == mat.end()) continue;
                    const double rx = (i - k) - (anchor->second.mx - other->second.mx);
                    const double ry = (j - l) - (anchor->second.my - other->second.my);
                    sum += std::max(t - std::sqrt(rx * rx + ry * ry), 0.0);
                }
            }
            total += anchor->second.w * sum;
        }
    }
    return total;
}

// -- aggregate -------------------------------------------------------------

inline double oracle_aggregate(const MatchSet& ms, double width, double height) {
    if (ms.empty()) return 0.0;
    double mx = 0.0, my = 0.0;
    for (const auto& m : ms.matches) {
        mx += m.shift_x;
        my += m.shift_y;
    }
    mx /= static_cast<double>(ms.size());
    my /= static_cast<double>(ms.size());
    double s = 0.0;
    for (const auto& m : ms.matches) {
        const double cx = std::max(0.0, width - std::abs(m.shift_x - mx));
        const double cy = std::max(0.0, height - std::abs(m.shift_y - my));
        s += m.weight * (cx * cx + cy * cy);
    }
    return s;
}

// -- misc ------------------------------------------------------------------

/// Fresh, empty temporary directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("vpr_test_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace vpr::testing
