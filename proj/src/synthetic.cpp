#include "vpr/synthetic.hpp"

#include "vpr/errors.hpp"
#include "vpr/rng.hpp"

#include <cmath>
#include <cstdio>

namespace vpr {

namespace fs = std::filesystem;

namespace {

// Positions live on a 1/256 px lattice so that planted shifts survive the
// float round trip exactly.
float lattice(double v) {
    return static_cast<float>(std::floor(v * 256.0) / 256.0);
}

void random_unit(Rng& rng, std::span<float> out) {
    double sq = 0.0;
    std::vector<double> tmp(out.size());
    for (auto& v : tmp) {
        v = gaussian(rng);
        sq += v * v;
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = static_cast<float>(tmp[k] * inv);
}

void perturb_unit(Rng& rng, std::span<const float> in, double sigma, std::span<float> out) {
    const double per_component = sigma / std::sqrt(static_cast<double>(in.size()));
    std::vector<double> tmp(in.size());
    double sq = 0.0;
    for (std::size_t k = 0; k < in.size(); ++k) {
        tmp[k] = static_cast<double>(in[k]) + per_component * gaussian(rng);
        sq += tmp[k] * tmp[k];
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t k = 0; k < in.size(); ++k) out[k] = static_cast<float>(tmp[k] * inv);
}

std::string numbered(const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04zu", prefix, i);
    return buf;
}

} // namespace

void SynthSpec::validate() const {
    if (n_places == 0) throw ContractError("synth: n_places must be positive");
    if (descriptor_dim == 0) throw ContractError("synth: descriptor_dim must be positive");
    if (width == 0 || height == 0) throw ContractError("synth: image size must be positive");
    if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0)) throw ContractError("synth: outlier_fraction must lie in [0, 1)");
    if (!(descriptor_noise_sigma >= 0.0) || !(global_noise_sigma >= 0.0)) throw ContractError("synth: noise must be >= 0");
    if (warp && features_per_image < 4) throw ContractError("synth: a warp needs at least 4 features per image");
    if (!warp && (std::abs(inlier_shift_x) >= width || std::abs(inlier_shift_y) >= height)) {
        throw ContractError("synth: inlier shift exceeds the image size");
    }
}

SynthDataset generate(const SynthSpec& spec) {
    spec.validate();
    SynthDataset ds;
    const std::size_t n = spec.features_per_image;
    const std::size_t dim = spec.descriptor_dim;
    const double w = spec.width, h = spec.height;
    const std::size_t n_inliers =
        static_cast<std::size_t>(std::llround((1.0 - spec.outlier_fraction) * static_cast<double>(n)));
    const std::size_t gdim = std::max(spec.global_dim, spec.n_places);

    // Reference region whose shifted image stays inside the frame.
    const double x_lo = std::max(0.0, -spec.inlier_shift_x), x_hi = w - std::max(0.0, spec.inlier_shift_x);
    const double y_lo = std::max(0.0, -spec.inlier_shift_y), y_hi = h - std::max(0.0, spec.inlier_shift_y);

    auto warp_point = [&](double x, double y) -> std::optional<std::pair<double, double>> {
        const auto& m = *spec.warp;
        const double z = m[6] * x + m[7] * y + m[8];
        if (std::abs(z) < 1e-12) return std::nullopt;
        const double u = (m[0] * x + m[1] * y + m[2]) / z;
        const double v = (m[3] * x + m[4] * y + m[5]) / z;
        if (!(u >= 0.0 && u < w && v >= 0.0 && v < h)) return std::nullopt;
        return std::pair{u, v};
    };

    for (std::size_t p = 0; p < spec.n_places; ++p) {
        Rng rng(derive_seed(spec.rng_seed, p));
        const auto ref_id = numbered("ref", p);
        const auto query_id = numbered("query", p);

        FeatureSet ref{ref_id, spec.width, spec.height, spec.descriptor_dim, {}, {}};
        ref.keypoints.reserve(n);
        ref.descriptors.resize(n * dim);
        std::vector<std::pair<float, float>> query_pos(n);
        for (std::size_t i = 0; i < n; ++i) {
            Keypoint kp;
            for (int attempt = 0;; ++attempt) {
                if (attempt > 10000) throw ContractError("synth: warp maps too little of the image into the frame");
                if (spec.warp) {
                    kp.x = lattice(uniform(rng, 0.0, w));
                    kp.y = lattice(uniform(rng, 0.0, h));
                    if (auto q = warp_point(kp.x, kp.y)) {
                        query_pos[i] = {lattice(q->first), lattice(q->second)};
                        break;
                    }
                } else {
                    kp.x = lattice(uniform(rng, x_lo, x_hi));
                    kp.y = lattice(uniform(rng, y_lo, y_hi));
                    query_pos[i] = {static_cast<float>(kp.x + spec.inlier_shift_x),
                                    static_cast<float>(kp.y + spec.inlier_shift_y)};
                    if (query_pos[i].first < w && query_pos[i].second < h) break;
                }
            }
            kp.score = static_cast<float>(uniform(rng, 0.05, 1.0));
            ref.keypoints.push_back(kp);
            random_unit(rng, ref.descriptor(i));
        }

        FeatureSet query{query_id, spec.width, spec.height, spec.descriptor_dim, {}, {}};
        query.keypoints.resize(n);
        query.descriptors.resize(n * dim);
        // slot order is a random permutation so inliers are not index-aligned
        std::vector<std::uint32_t> slot(n);
        for (std::size_t i = 0; i < n; ++i) slot[i] = static_cast<std::uint32_t>(i);
        for (std::size_t i = n; i > 1; --i) std::swap(slot[i - 1], slot[uniform_index(rng, i)]);

        std::vector<std::pair<std::uint32_t, std::uint32_t>> planted;
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint32_t s = slot[i];
            Keypoint kp;
            if (i < n_inliers) {
                kp.x = query_pos[i].first;
                kp.y = query_pos[i].second;
                kp.score = static_cast<float>(uniform(rng, 0.05, 1.0));
                if (spec.descriptor_noise_sigma > 0.0) {
                    perturb_unit(rng, ref.descriptor(i), spec.descriptor_noise_sigma, query.descriptor(s));
                } else {
                    auto src = ref.descriptor(i);
                    std::copy(src.begin(), src.end(), query.descriptor(s).begin());
                }
                planted.emplace_back(s, static_cast<std::uint32_t>(i));
            } else {
                kp.x = lattice(uniform(rng, 0.0, w));
                kp.y = lattice(uniform(rng, 0.0, h));
                kp.score = static_cast<float>(uniform(rng, 0.05, 1.0));
                random_unit(rng, query.descriptor(s));
            }
            query.keypoints[s] = kp;
        }
        std::sort(planted.begin(), planted.end());

        GlobalDescriptor rg{ref_id, std::vector<float>(gdim, 0.0f)};
        rg.vector[p] = 1.0f;
        GlobalDescriptor qg{query_id, std::vector<float>(gdim, 0.0f)};
        if (spec.global_noise_sigma > 0.0) {
            perturb_unit(rng, rg.vector, spec.global_noise_sigma, qg.vector);
        } else {
            qg.vector[p] = 1.0f;
        }

        ds.manifest.reference_ids.push_back(ref_id);
        ds.manifest.query_ids.push_back(query_id);
        ds.manifest.ground_truth[query_id] = {p};
        ds.manifest.positions[ref_id] = {spec.place_spacing_m * static_cast<double>(p), 0.0};
        ds.manifest.positions[query_id] = {spec.place_spacing_m * static_cast<double>(p), 0.0};
        ds.references.push_back(std::move(ref));
        ds.queries.push_back(std::move(query));
        ds.reference_globals.push_back(std::move(rg));
        ds.query_globals.push_back(std::move(qg));
        ds.inliers.push_back(std::move(planted));
    }
    ds.manifest.tolerance_unit = ToleranceUnit::SequenceIndex;
    return ds;
}

Database SynthDataset::database() const {
    std::vector<GlobalDescriptor> globals = reference_globals;
    globals.insert(globals.end(), query_globals.begin(), query_globals.end());
    return Database::from_memory(manifest, references, std::move(globals), queries);
}

void SynthDataset::write(const fs::path& dir) const {
    std::error_code ec;
    fs::create_directories(dir / "features", ec);
    if (ec) throw IoError("cannot create " + (dir / "features").string() + ": " + ec.message());
    fs::create_directories(dir / "descriptors", ec);
    if (ec) throw IoError("cannot create " + (dir / "descriptors").string() + ": " + ec.message());
    for (const auto& set : references) write_feature_file(set, feature_path(dir / "features", set.image_id));
    for (const auto& set : queries) write_feature_file(set, feature_path(dir / "features", set.image_id));
    write_global_descriptor_file(reference_globals, dir / "descriptors" / "references.vprg");
    write_global_descriptor_file(query_globals, dir / "descriptors" / "queries.vprg");
    write_manifest(manifest, dir / "manifest.json");
}

} // namespace vpr
