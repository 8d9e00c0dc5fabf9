#pragma once

#include "vpr/matcher.hpp"

#include <optional>
#include <string>
#include <vector>

namespace vpr {

struct AnchorConfig {
    int grid_bins = 15;
    /// Half-width of the square neighbourhood, in cells.
    int window = 10;
    /// Consistency tolerance t, in cells.
    double tolerance = 3.0;
    WeightScheme weight_scheme = WeightScheme::FS;
    /// Count the anchor cell itself as one of its neighbours (its residual is 0).
    bool include_anchor_cell = false;

    void validate() const;
};

/// Winning B-cell for one A-cell and the vote mass it collected.
struct CellMatch {
    int mx = 0;
    int my = 0;
    double weight = 0.0;
};

/// grid_bins x grid_bins matrix indexed by A-cell (i = column from x, j = row from y).
class BinMatchMatrix {
public:
    explicit BinMatchMatrix(int grid_bins);

    int grid_bins() const { return grid_bins_; }
    const std::optional<CellMatch>& at(int i, int j) const { return cells_[index(i, j)]; }
    std::optional<CellMatch>& at(int i, int j) { return cells_[index(i, j)]; }
    std::size_t present() const;

    /// One line per present entry: "i j -> mi mj w".
    std::string dump() const;

private:
    std::size_t index(int i, int j) const;

    int grid_bins_;
    std::vector<std::optional<CellMatch>> cells_;
};

/// floor(pos * bins / extent), clamped to [0, bins - 1].
int cell_index(double pos, double extent, int bins);

/// Converts feature matches into grid-cell matches by weighted voting; per
/// A-cell the B-cell with the largest vote sum wins (lowest (row, col) on ties).
BinMatchMatrix build_bin_matrix(const MatchSet& ms, const FeatureSet& a, const FeatureSet& b,
                                const AnchorConfig& cfg);

/// Windowed consistency score of the anchor pair stored at (i, j).
double anchor_cell_score(const BinMatchMatrix& mat, int i, int j, const AnchorConfig& cfg);

/// Sum of anchor_cell_score over all present entries, row-major.
double anchor_score(const BinMatchMatrix& mat, const AnchorConfig& cfg);
double anchor_score(const MatchSet& ms, const FeatureSet& a, const FeatureSet& b, const AnchorConfig& cfg);

} // namespace vpr
