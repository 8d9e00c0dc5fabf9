#include "vpr/anchor.hpp"

#include "vpr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace vpr {

void AnchorConfig::validate() const {
    if (grid_bins < 2) throw ContractError("anchor: grid_bins must be >= 2");
    if (window < 1) throw ContractError("anchor: window must be >= 1");
    if (!(tolerance > 0.0)) throw ContractError("anchor: tolerance must be > 0");
}

BinMatchMatrix::BinMatchMatrix(int grid_bins)
    : grid_bins_(grid_bins), cells_(static_cast<std::size_t>(grid_bins) * static_cast<std::size_t>(grid_bins)) {}

std::size_t BinMatchMatrix::index(int i, int j) const {
    if (i < 0 || j < 0 || i >= grid_bins_ || j >= grid_bins_) {
        throw ContractError("bin matrix cell (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range");
    }
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(grid_bins_) + static_cast<std::size_t>(i);
}

std::size_t BinMatchMatrix::present() const {
    return static_cast<std::size_t>(std::count_if(cells_.begin(), cells_.end(), [](const auto& c) { return c.has_value(); }));
}

std::string BinMatchMatrix::dump() const {
    std::ostringstream out;
    out.precision(10);
    for (int j = 0; j < grid_bins_; ++j) {
        for (int i = 0; i < grid_bins_; ++i) {
            if (const auto& c = at(i, j)) out << i << ' ' << j << " -> " << c->mx << ' ' << c->my << ' ' << c->weight << '\n';
        }
    }
    return out.str();
}

int cell_index(double pos, double extent, int bins) {
    const auto cell = static_cast<long>(std::floor(pos * bins / extent));
    return static_cast<int>(std::clamp(cell, 0L, static_cast<long>(bins) - 1));
}

BinMatchMatrix build_bin_matrix(const MatchSet& ms, const FeatureSet& a, const FeatureSet& b, const AnchorConfig& cfg) {
    cfg.validate();
    const int g = cfg.grid_bins;
    BinMatchMatrix mat(g);

    // votes[a_cell][b_cell] in match order; b_cell keyed row-major so that the
    // first strict maximum is the lowest (row, col) cell.
    std::vector<std::map<int, double>> votes(static_cast<std::size_t>(g) * static_cast<std::size_t>(g));
    for (const auto& m : ms.matches) {
        if (m.idx_a >= a.size() || m.idx_b >= b.size()) throw ContractError("build_bin_matrix: match index out of range");
        const auto& ka = a.keypoints[m.idx_a];
        const auto& kb = b.keypoints[m.idx_b];
        const int ai = cell_index(ka.x, a.width, g);
        const int aj = cell_index(ka.y, a.height, g);
        const int bi = cell_index(kb.x, b.width, g);
        const int bj = cell_index(kb.y, b.height, g);
        votes[static_cast<std::size_t>(aj * g + ai)][bj * g + bi] += m.weight;
    }

    for (int j = 0; j < g; ++j) {
        for (int i = 0; i < g; ++i) {
            const auto& tally = votes[static_cast<std::size_t>(j * g + i)];
            double best = 0.0;
            int best_cell = -1;
            for (const auto& [cell, w] : tally) {
                if (w > best) {
                    best = w;
                    best_cell = cell;
                }
            }
            if (best_cell >= 0) mat.at(i, j) = CellMatch{best_cell % g, best_cell / g, best};
        }
    }
    return mat;
}

double anchor_cell_score(const BinMatchMatrix& mat, int i, int j, const AnchorConfig& cfg) {
    const auto& anchor = mat.at(i, j);
    if (!anchor) throw ContractError("anchor_cell_score: no match stored at anchor cell");
    const int g = mat.grid_bins();
    const int l0 = std::max(0, j - cfg.window), l1 = std::min(g - 1, j + cfg.window);
    const int k0 = std::max(0, i - cfg.window), k1 = std::min(g - 1, i + cfg.window);

    double sum = 0.0;
    for (int l = l0; l <= l1; ++l) {
        for (int k = k0; k <= k1; ++k) {
            if (k == i && l == j && !cfg.include_anchor_cell) continue;
            const auto& other = mat.at(k, l);
            if (!other) continue;
            const double rx = static_cast<double>((i - k) - (anchor->mx - other->mx));
            const double ry = static_cast<double>((j - l) - (anchor->my - other->my));
            sum += std::max(cfg.tolerance - std::sqrt(rx * rx + ry * ry), 0.0);
        }
    }
    return anchor->weight * sum;
}

double anchor_score(const BinMatchMatrix& mat, const AnchorConfig& cfg) {
    cfg.validate();
    double total = 0.0;
    for (int j = 0; j < mat.grid_bins(); ++j) {
        for (int i = 0; i < mat.grid_bins(); ++i) {
            if (mat.at(i, j)) total += anchor_cell_score(mat, i, j, cfg);
        }
    }
    return total;
}

double anchor_score(const MatchSet& ms, const FeatureSet& a, const FeatureSet& b, const AnchorConfig& cfg) {
    return anchor_score(build_bin_matrix(ms, a, b, cfg), cfg);
}

} // namespace vpr
