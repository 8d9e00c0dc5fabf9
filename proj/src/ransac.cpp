#include "vpr/ransac.hpp"

#include "vpr/errors.hpp"
#include "vpr/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <iomanip>
#include <sstream>

namespace vpr {

namespace {

double triangle_area(const Eigen::Vector2d& p, const Eigen::Vector2d& q, const Eigen::Vector2d& r) {
    return 0.5 * std::abs((q.x() - p.x()) * (r.y() - p.y()) - (q.y() - p.y()) * (r.x() - p.x()));
}

bool has_collinear_triple(const std::array<Eigen::Vector2d, 4>& pts, double min_area) {
    for (int i = 0; i < 4; ++i) {
        for (int j = i + 1; j < 4; ++j) {
            for (int k = j + 1; k < 4; ++k) {
                if (triangle_area(pts[i], pts[j], pts[k]) <= min_area) return true;
            }
        }
    }
    return false;
}

// Similarity moving the centroid to 0 and the mean distance from it to sqrt(2).
struct Normalizer {
    double s, cx, cy;

    explicit Normalizer(const std::array<Eigen::Vector2d, 4>& pts) {
        Eigen::Vector2d c = Eigen::Vector2d::Zero();
        for (const auto& p : pts) c += p;
        c /= 4.0;
        double mean_dist = 0.0;
        for (const auto& p : pts) mean_dist += (p - c).norm();
        mean_dist /= 4.0;
        s = std::sqrt(2.0) / mean_dist;
        cx = c.x();
        cy = c.y();
    }

    Eigen::Vector2d operator()(const Eigen::Vector2d& p) const { return {s * (p.x() - cx), s * (p.y() - cy)}; }

    Eigen::Matrix3d matrix() const {
        Eigen::Matrix3d t;
        t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
        return t;
    }

    Eigen::Matrix3d inverse() const {
        Eigen::Matrix3d t;
        t << 1.0 / s, 0, cx, 0, 1.0 / s, cy, 0, 0, 1;
        return t;
    }
};

} // namespace

void RansacConfig::validate() const {
    if (max_iterations < 1) throw ContractError("ransac: max_iterations must be >= 1");
    if (!(reprojection_threshold > 0.0)) throw ContractError("ransac: reprojection_threshold must be > 0");
    if (!(confidence > 0.0 && confidence < 1.0)) throw ContractError("ransac: confidence must lie in (0, 1)");
}

std::optional<Eigen::Vector2d> Homography::apply(double x, double y) const {
    const Eigen::Vector3d q = m * Eigen::Vector3d(x, y, 1.0);
    if (std::abs(q.z()) < 1e-12 * q.head<2>().norm() || q.z() == 0.0) return std::nullopt;
    return q.hnormalized();
}

Homography Homography::inverse() const {
    Homography h;
    h.m = m.inverse();
    if (h.m(2, 2) != 0.0) h.m /= h.m(2, 2);
    return h;
}

std::string Homography::dump() const {
    std::ostringstream out;
    out << std::setprecision(17);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) out << (r || c ? " " : "") << m(r, c);
    }
    return out.str();
}

std::optional<Homography> fit_homography_4pt(std::span<const PointPair, 4> sample, double min_area) {
    std::array<Eigen::Vector2d, 4> src, dst;
    for (int i = 0; i < 4; ++i) {
        src[i] = {sample[i].xa, sample[i].ya};
        dst[i] = {sample[i].xb, sample[i].yb};
    }
    if (has_collinear_triple(src, min_area) || has_collinear_triple(dst, min_area)) return std::nullopt;

    const Normalizer na(src), nb(dst);

    Eigen::Matrix<double, 8, 9> a;
    for (int i = 0; i < 4; ++i) {
        const Eigen::Vector2d p = na(src[i]);
        const Eigen::Vector2d q = nb(dst[i]);
        a.row(2 * i) << -p.x(), -p.y(), -1, 0, 0, 0, q.x() * p.x(), q.x() * p.y(), q.x();
        a.row(2 * i + 1) << 0, 0, 0, -p.x(), -p.y(), -1, q.y() * p.x(), q.y() * p.y(), q.y();
    }
    // Fix h(8) = 1 and solve the 8x8 system; fall back to the SVD null vector
    // when that system is singular (h(8) near 0 in normalised coordinates).
    Eigen::Matrix<double, 9, 1> h;
    const Eigen::PartialPivLU<Eigen::Matrix<double, 8, 8>> lu(a.leftCols<8>());
    const auto pivots = lu.matrixLU().diagonal().cwiseAbs();
    if (pivots.minCoeff() > 1e-10 * pivots.maxCoeff()) {
        h.head<8>() = lu.solve(-a.col(8));
        h(8) = 1.0;
    } else {
        Eigen::Matrix<double, 9, 9> sq = Eigen::Matrix<double, 9, 9>::Zero();
        sq.topRows<8>() = a;
        const Eigen::JacobiSVD<Eigen::Matrix<double, 9, 9>> svd(sq, Eigen::ComputeFullV);
        h = svd.matrixV().col(8);
    }

    Eigen::Matrix3d hn;
    hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
    Homography out;
    out.m = nb.inverse() * hn * na.matrix();
    if (std::abs(out.m(2, 2)) > 1e-15 * out.m.norm()) out.m /= out.m(2, 2);
    if (!out.m.allFinite()) return std::nullopt;

    const Eigen::PartialPivLU<Eigen::Matrix3d> check(out.m);
    if (!(check.rcond() > 1e-12)) return std::nullopt;
    return out;
}

namespace {

// Pairs transposed to one array per coordinate for the counting loop.
struct PairColumns {
    std::vector<double> xa, ya, xb, yb;

    explicit PairColumns(std::span<const PointPair> pairs) {
        for (auto* v : {&xa, &ya, &xb, &yb}) v->reserve(pairs.size());
        for (const auto& p : pairs) {
            xa.push_back(p.xa);
            ya.push_back(p.ya);
            xb.push_back(p.xb);
            yb.push_back(p.yb);
        }
    }
};

// |H p_a / z - p_b|^2 <= t^2 evaluated as |H p_a - z p_b|^2 <= t^2 z^2 so the
// loop vectorises. Points sent to infinity never count.
std::size_t count_forward(const Eigen::Matrix3d& m, const PairColumns& c, double thr_sq) {
    const double m00 = m(0, 0), m01 = m(0, 1), m02 = m(0, 2);
    const double m10 = m(1, 0), m11 = m(1, 1), m12 = m(1, 2);
    const double m20 = m(2, 0), m21 = m(2, 1), m22 = m(2, 2);
    const std::size_t n = c.xa.size();
    const double* xa = c.xa.data();
    const double* ya = c.ya.data();
    const double* xb = c.xb.data();
    const double* yb = c.yb.data();
    std::size_t count = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double px = m00 * xa[k] + m01 * ya[k] + m02;
        const double py = m10 * xa[k] + m11 * ya[k] + m12;
        const double pz = m20 * xa[k] + m21 * ya[k] + m22;
        const double ex = px - xb[k] * pz, ey = py - yb[k] * pz;
        const double z2 = pz * pz;
        const bool finite = (pz != 0.0) & (z2 >= 1e-24 * (px * px + py * py));
        count += static_cast<std::size_t>(finite & (ex * ex + ey * ey <= thr_sq * z2));
    }
    return count;
}

} // namespace

std::size_t count_inliers(const Homography& h, std::span<const PointPair> pairs, double threshold, bool symmetric) {
    const double thr_sq = threshold * threshold;
    if (!symmetric) return count_forward(h.m, PairColumns(pairs), thr_sq);
    const Homography inv = h.inverse();
    std::size_t count = 0;
    for (const auto& p : pairs) {
        const auto fwd = h.apply(p.xa, p.ya);
        if (!fwd || (*fwd - Eigen::Vector2d(p.xb, p.yb)).squaredNorm() > thr_sq) continue;
        const auto back = inv.apply(p.xb, p.yb);
        if (!back || (*back - Eigen::Vector2d(p.xa, p.ya)).squaredNorm() > thr_sq) continue;
        ++count;
    }
    return count;
}

RansacResult ransac_score(std::span<const PointPair> pairs, const RansacConfig& cfg, double image_area) {
    cfg.validate();
    RansacResult result;
    const std::size_t n = pairs.size();
    if (n < 4) return result;

    Rng rng(cfg.rng_seed);
    const double min_area = 1e-6 * image_area;
    const double log_fail = std::log(1.0 - cfg.confidence);
    double needed = static_cast<double>(cfg.max_iterations);

    const PairColumns columns(pairs);
    const double thr_sq = cfg.reprojection_threshold * cfg.reprojection_threshold;
    std::array<PointPair, 4> sample;
    while (result.iterations < cfg.max_iterations && result.iterations < needed) {
        ++result.iterations;
        std::array<std::size_t, 4> idx{};
        for (int k = 0; k < 4; ++k) {
            bool repeat;
            do {
                idx[k] = static_cast<std::size_t>(uniform_index(rng, n));
                repeat = false;
                for (int q = 0; q < k; ++q) repeat = repeat || idx[q] == idx[k];
            } while (repeat);
            sample[k] = pairs[idx[k]];
        }
        const auto model = fit_homography_4pt(std::span<const PointPair, 4>(sample), min_area);
        if (!model) continue;

        const std::size_t inliers =
            cfg.symmetric_error ? count_inliers(*model, pairs, cfg.reprojection_threshold, true)
                                : count_forward(model->m, columns, thr_sq);
        if (inliers > result.score) {
            result.score = inliers;
            result.model = model;
            // Samples needed so that an all-inlier draw is missed with
            // probability below 1 - confidence.
            const double ratio = static_cast<double>(inliers) / static_cast<double>(n);
            const double p_good = std::pow(ratio, 4);
            if (p_good >= 1.0) {
                needed = 0.0;
            } else if (p_good > 0.0) {
                needed = std::min(needed, std::ceil(log_fail / std::log1p(-p_good)));
            }
        }
    }
    return result;
}

std::vector<PointPair> match_points(const MatchSet& ms, const FeatureSet& a, const FeatureSet& b) {
    std::vector<PointPair> pairs;
    pairs.reserve(ms.size());
    for (const auto& m : ms.matches) {
        if (m.idx_a >= a.size() || m.idx_b >= b.size()) throw ContractError("ransac: match index out of range");
        const auto& ka = a.keypoints[m.idx_a];
        const auto& kb = b.keypoints[m.idx_b];
        pairs.push_back({ka.x, ka.y, kb.x, kb.y});
    }
    return pairs;
}

RansacResult ransac_score(const MatchSet& ms, const FeatureSet& a, const FeatureSet& b, const RansacConfig& cfg) {
    const auto pairs = match_points(ms, a, b);
    return ransac_score(pairs, cfg, static_cast<double>(b.width) * static_cast<double>(b.height));
}

} // namespace vpr
