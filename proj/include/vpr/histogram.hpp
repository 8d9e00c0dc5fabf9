#pragma once

#include "vpr/matcher.hpp"

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace vpr {

struct ImageDims {
    double width = 0.0;
    double height = 0.0;
};

struct HistogramConfig {
    double bin_size = 15.0;
    double sigma = 22.5;
    /// Kernel support in multiples of sigma; infinity gives exact all-bin voting.
    double truncation_radius = 3.0;
    WeightScheme weight_scheme = WeightScheme::FS;

    void validate() const;
};

/// Gaussian-voted histogram over the shift range [-W, W] x [-H, H].
/// Bin (col, row) has center (-W + (col + 0.5) * bin_size, -H + (row + 0.5) * bin_size);
/// the last column/row may extend beyond the range.
class ShiftHistogram {
public:
    ShiftHistogram(ImageDims dims, double bin_size);

    std::size_t cols() const { return cols_; }
    std::size_t rows() const { return rows_; }
    double bin_size() const { return bin_size_; }
    /// Shift value at the lower corner of bin (0, 0).
    double origin_x() const { return origin_x_; }
    double origin_y() const { return origin_y_; }

    double center_x(std::size_t col) const { return origin_x_ + (static_cast<double>(col) + 0.5) * bin_size_; }
    double center_y(std::size_t row) const { return origin_y_ + (static_cast<double>(row) + 0.5) * bin_size_; }

    double at(std::size_t col, std::size_t row) const { return bins_[row * cols_ + col]; }
    double& at(std::size_t col, std::size_t row) { return bins_[row * cols_ + col]; }
    const std::vector<double>& values() const { return bins_; }

    /// Plain-text grid: header lines then one row of values per histogram row.
    std::string dump() const;

private:
    std::size_t cols_;
    std::size_t rows_;
    double bin_size_;
    double origin_x_;
    double origin_y_;
    std::vector<double> bins_;
};

struct HistogramResult {
    double score = 0.0;
    double dominant_shift_x = 0.0;
    double dominant_shift_y = 0.0;
    /// Set when there were no matches; the shift is then (0, 0).
    bool degenerate = false;
};

/// Accumulates w_k * exp(-|shift_k - center|^2 / (2 sigma^2)) into every bin
/// within truncation_radius * sigma of each shift. Match weights are used as
/// stored in the MatchSet.
ShiftHistogram build_histogram(const MatchSet& ms, ImageDims dims, const HistogramConfig& cfg);

/// Maximum bin (row-major first on ties) and its center as the dominant shift.
HistogramResult histogram_score(const MatchSet& ms, ImageDims dims, const HistogramConfig& cfg);

} // namespace vpr
