#include "vpr/histogram.hpp"

#include "vpr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vpr {

void HistogramConfig::validate() const {
    if (!(bin_size > 0.0) || !std::isfinite(bin_size)) throw ContractError("histogram: bin_size must be > 0");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ContractError("histogram: sigma must be > 0");
    if (!(truncation_radius >= 1.0)) throw ContractError("histogram: truncation_radius must be >= 1");
}

ShiftHistogram::ShiftHistogram(ImageDims dims, double bin_size)
    : bin_size_(bin_size), origin_x_(-dims.width), origin_y_(-dims.height) {
    if (!(dims.width > 0.0) || !(dims.height > 0.0)) throw ContractError("histogram: image dims must be positive");
    cols_ = static_cast<std::size_t>(std::ceil(2.0 * dims.width / bin_size));
    rows_ = static_cast<std::size_t>(std::ceil(2.0 * dims.height / bin_size));
    bins_.assign(cols_ * rows_, 0.0);
}

std::string ShiftHistogram::dump() const {
    std::ostringstream out;
    out.precision(10);
    out << "# origin " << origin_x_ << ' ' << origin_y_ << '\n';
    out << "# bin_size " << bin_size_ << '\n';
    out << "# cols " << cols_ << " rows " << rows_ << '\n';
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) {
            if (c) out << ' ';
            out << at(c, r);
        }
        out << '\n';
    }
    return out.str();
}

ShiftHistogram build_histogram(const MatchSet& ms, ImageDims dims, const HistogramConfig& cfg) {
    cfg.validate();
    ShiftHistogram hist(dims, cfg.bin_size);
    const double inv_two_var = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
    const bool truncated = std::isfinite(cfg.truncation_radius);
    const double reach = cfg.truncation_radius * cfg.sigma;
    const double reach_sq = reach * reach;

    const auto last_col = static_cast<long>(hist.cols()) - 1;
    const auto last_row = static_cast<long>(hist.rows()) - 1;
    // Bin index range whose centers may lie within [lo, hi].
    auto span = [&](double lo, double hi, double origin, long last) {
        const long first = std::max(0L, static_cast<long>(std::floor((lo - origin) / cfg.bin_size - 0.5)));
        const long end = std::min(last, static_cast<long>(std::ceil((hi - origin) / cfg.bin_size - 0.5)));
        return std::pair{first, end};
    };

    std::vector<double> gx(hist.cols());
    for (const auto& m : ms.matches) {
        if (m.weight == 0.0) continue;
        long c0 = 0, c1 = last_col, r0 = 0, r1 = last_row;
        if (truncated) {
            std::tie(c0, c1) = span(m.shift_x - reach, m.shift_x + reach, hist.origin_x(), last_col);
            std::tie(r0, r1) = span(m.shift_y - reach, m.shift_y + reach, hist.origin_y(), last_row);
        }
        // separable kernel: exp(-(dx^2 + dy^2) k) = exp(-dx^2 k) * exp(-dy^2 k)
        for (long c = c0; c <= c1; ++c) {
            const double dx = m.shift_x - hist.center_x(static_cast<std::size_t>(c));
            gx[c] = std::exp(-dx * dx * inv_two_var);
        }
        for (long r = r0; r <= r1; ++r) {
            const double dy = m.shift_y - hist.center_y(static_cast<std::size_t>(r));
            const double dy_sq = dy * dy;
            if (truncated && dy_sq > reach_sq) continue;
            const double wy = m.weight * std::exp(-dy_sq * inv_two_var);
            for (long c = c0; c <= c1; ++c) {
                if (truncated) {
                    const double dx = m.shift_x - hist.center_x(static_cast<std::size_t>(c));
                    if (dx * dx + dy_sq > reach_sq) continue;
                }
                hist.at(static_cast<std::size_t>(c), static_cast<std::size_t>(r)) += wy * gx[c];
            }
        }
    }
    return hist;
}

HistogramResult histogram_score(const MatchSet& ms, ImageDims dims, const HistogramConfig& cfg) {
    HistogramResult result;
    if (ms.empty()) {
        cfg.validate();
        result.degenerate = true;
        return result;
    }
    const ShiftHistogram hist = build_histogram(ms, dims, cfg);
    const auto& v = hist.values();
    const auto best = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
    result.score = v[best];
    result.dominant_shift_x = hist.center_x(best % hist.cols());
    result.dominant_shift_y = hist.center_y(best / hist.cols());
    return result;
}

} // namespace vpr
