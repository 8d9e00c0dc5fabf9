#include "vpr/aggregate.hpp"
#include "vpr/anchor.hpp"
#include "vpr/errors.hpp"
#include "vpr/evaluation.hpp"
#include "vpr/feature_store.hpp"
#include "vpr/histogram.hpp"
#include "vpr/matcher.hpp"
#include "vpr/pipeline.hpp"
#include "vpr/ransac.hpp"
#include "vpr/synthetic.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

namespace py = pybind11;
using namespace vpr;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

FeatureSet make_feature_set(std::string image_id, std::uint32_t width, std::uint32_t height, FloatArray keypoints,
                            FloatArray descriptors) {
    if (keypoints.ndim() != 2 || keypoints.shape(1) != 3) throw ContractError("keypoints must have shape (N, 3)");
    if (descriptors.ndim() != 2 || descriptors.shape(0) != keypoints.shape(0))
        throw ContractError("descriptors must have shape (N, D)");
    FeatureSet fs;
    fs.image_id = std::move(image_id);
    fs.width = width;
    fs.height = height;
    fs.descriptor_dim = static_cast<std::uint16_t>(descriptors.shape(1));
    const auto kp = keypoints.unchecked<2>();
    for (py::ssize_t i = 0; i < keypoints.shape(0); ++i) fs.keypoints.push_back({kp(i, 0), kp(i, 1), kp(i, 2)});
    fs.descriptors.assign(descriptors.data(), descriptors.data() + descriptors.size());
    validate_feature_set(fs);
    return fs;
}

py::array_t<float> keypoint_array(const FeatureSet& fs) {
    py::array_t<float> out({static_cast<py::ssize_t>(fs.size()), py::ssize_t{3}});
    auto o = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < fs.size(); ++i) {
        const auto s = static_cast<py::ssize_t>(i);
        o(s, 0) = fs.keypoints[i].x;
        o(s, 1) = fs.keypoints[i].y;
        o(s, 2) = fs.keypoints[i].score;
    }
    return out;
}

template <typename T, typename F>
py::array_t<T> column(const MatchSet& ms, F get) {
    py::array_t<T> out(static_cast<py::ssize_t>(ms.size()));
    auto o = out.template mutable_unchecked<1>();
    for (std::size_t i = 0; i < ms.size(); ++i) o(static_cast<py::ssize_t>(i)) = get(ms.matches[i]);
    return out;
}

py::bytes to_bytes(const std::vector<std::byte>& v) {
    return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
}

std::span<const std::byte> as_span(const py::bytes& b) {
    const std::string_view sv = b;
    return {reinterpret_cast<const std::byte*>(sv.data()), sv.size()};
}

py::object homography_or_none(const std::optional<Homography>& h) {
    if (!h) return py::none();
    py::array_t<double> out({py::ssize_t{3}, py::ssize_t{3}});
    auto o = out.mutable_unchecked<2>();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) o(r, c) = h->m(r, c);
    return std::move(out);
}

std::vector<PointPair> pairs_from(DoubleArray src, DoubleArray dst) {
    if (src.ndim() != 2 || src.shape(1) != 2 || dst.ndim() != 2 || dst.shape(1) != 2 || src.shape(0) != dst.shape(0))
        throw ContractError("point arrays must both have shape (N, 2)");
    const auto s = src.unchecked<2>();
    const auto d = dst.unchecked<2>();
    std::vector<PointPair> out;
    for (py::ssize_t i = 0; i < src.shape(0); ++i) out.push_back({s(i, 0), s(i, 1), d(i, 0), d(i, 1)});
    return out;
}

py::dict entry_dict(const RankedEntry& e) {
    py::dict d;
    d["index"] = e.reference_index;
    d["s_f"] = e.filtering_score;
    d["s_r"] = e.rerank_score;
    d["final"] = e.final_score;
    d["matches"] = e.matches;
    if (!e.diagnostic.empty()) d["diagnostic"] = e.diagnostic;
    return d;
}

} // namespace

PYBIND11_MODULE(_vpr, m) {
    m.doc() = "Local-feature re-ranking for visual place recognition";

    static py::exception<FormatError> format_error(m, "FormatError", PyExc_ValueError);
    static py::exception<ContractError> contract_error(m, "ContractError", PyExc_ValueError);
    static py::exception<IoError> io_error(m, "IoError", PyExc_OSError);
    static py::exception<LoadError> load_error(m, "LoadError", PyExc_OSError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const FormatError& e) {
            py::set_error(format_error, e.what());
        } catch (const ContractError& e) {
            py::set_error(contract_error, e.what());
        } catch (const IoError& e) {
            py::set_error(io_error, e.what());
        } catch (const LoadError& e) {
            py::set_error(load_error, e.what());
        }
    });

    // -- features ------------------------------------------------------------

    py::class_<FeatureSet>(m, "FeatureSet")
        .def(py::init(&make_feature_set), py::arg("image_id"), py::arg("width"), py::arg("height"),
             py::arg("keypoints"), py::arg("descriptors"))
        .def_readonly("image_id", &FeatureSet::image_id)
        .def_readonly("width", &FeatureSet::width)
        .def_readonly("height", &FeatureSet::height)
        .def_readonly("descriptor_dim", &FeatureSet::descriptor_dim)
        .def_property_readonly("keypoints", &keypoint_array)
        .def_property_readonly("descriptors",
                               [](const FeatureSet& fs) {
                                   py::array_t<float> out({static_cast<py::ssize_t>(fs.size()),
                                                           static_cast<py::ssize_t>(fs.descriptor_dim)});
                                   if (!fs.descriptors.empty())
                                       std::memcpy(out.mutable_data(), fs.descriptors.data(),
                                                   fs.descriptors.size() * sizeof(float));
                                   return out;
                               })
        .def("__len__", &FeatureSet::size)
        .def("__repr__", [](const FeatureSet& fs) {
            return "<FeatureSet " + fs.image_id + " " + std::to_string(fs.size()) + "x" +
                   std::to_string(fs.descriptor_dim) + ">";
        });

    m.def("load_features", [](const std::filesystem::path& p) { return load_feature_file(p); }, py::arg("path"));
    m.def("write_features", &write_feature_file, py::arg("features"), py::arg("path"));
    m.def("serialize_features", [](const FeatureSet& fs) { return to_bytes(serialize_features(fs)); });
    m.def("parse_features", [](const py::bytes& b) { return parse_features(as_span(b)); }, py::arg("data"));

    m.def(
        "load_global_descriptors",
        [](const std::filesystem::path& p) {
            std::vector<std::pair<std::string, py::array_t<float>>> out;
            for (auto& g : load_global_descriptor_file(p))
                out.emplace_back(g.image_id, py::array_t<float>(static_cast<py::ssize_t>(g.vector.size()), g.vector.data()));
            return out;
        },
        py::arg("path"));
    m.def(
        "write_global_descriptors",
        [](const std::vector<std::pair<std::string, std::vector<float>>>& items, const std::filesystem::path& p) {
            std::vector<GlobalDescriptor> g;
            for (const auto& [id, v] : items) g.push_back({id, v});
            write_global_descriptor_file(g, p);
        },
        py::arg("descriptors"), py::arg("path"));

    // -- matching ------------------------------------------------------------

    py::class_<MatchSet>(m, "MatchSet")
        .def("__len__", &MatchSet::size)
        .def_property_readonly("idx_a", [](const MatchSet& ms) { return column<std::uint32_t>(ms, [](const Match& x) { return x.idx_a; }); })
        .def_property_readonly("idx_b", [](const MatchSet& ms) { return column<std::uint32_t>(ms, [](const Match& x) { return x.idx_b; }); })
        .def_property_readonly("distance", [](const MatchSet& ms) { return column<double>(ms, [](const Match& x) { return x.distance; }); })
        .def_property_readonly("weight", [](const MatchSet& ms) { return column<double>(ms, [](const Match& x) { return x.weight; }); })
        .def_property_readonly("shift", [](const MatchSet& ms) {
            py::array_t<double> out({static_cast<py::ssize_t>(ms.size()), py::ssize_t{2}});
            auto o = out.mutable_unchecked<2>();
            for (std::size_t i = 0; i < ms.size(); ++i) {
                o(static_cast<py::ssize_t>(i), 0) = ms.matches[i].shift_x;
                o(static_cast<py::ssize_t>(i), 1) = ms.matches[i].shift_y;
            }
            return out;
        })
        .def("to_csv", &match_dump_csv);

    m.def(
        "match",
        [](const FeatureSet& a, const FeatureSet& b, std::optional<std::string> weights) {
            auto ms = match_features(a, b);
            if (weights) ms = weigh_matches(std::move(ms), parse_weight_scheme(*weights), a, b);
            return ms;
        },
        py::arg("a"), py::arg("b"), py::arg("weights") = py::none(),
        "Mutual nearest-neighbour matches of a against b, optionally weighted with \"FS\" or \"DMF\".");

    // -- scorers -------------------------------------------------------------

    py::class_<HistogramConfig>(m, "HistogramConfig")
        .def(py::init<>())
        .def_readwrite("bin_size", &HistogramConfig::bin_size)
        .def_readwrite("sigma", &HistogramConfig::sigma)
        .def_readwrite("truncation_radius", &HistogramConfig::truncation_radius)
        .def_property("weight_scheme", [](const HistogramConfig& c) { return std::string(to_string(c.weight_scheme)); },
                      [](HistogramConfig& c, const std::string& s) { c.weight_scheme = parse_weight_scheme(s); });
    py::class_<AnchorConfig>(m, "AnchorConfig")
        .def(py::init<>())
        .def_readwrite("grid_bins", &AnchorConfig::grid_bins)
        .def_readwrite("window", &AnchorConfig::window)
        .def_readwrite("tolerance", &AnchorConfig::tolerance)
        .def_readwrite("include_anchor_cell", &AnchorConfig::include_anchor_cell)
        .def_property("weight_scheme", [](const AnchorConfig& c) { return std::string(to_string(c.weight_scheme)); },
                      [](AnchorConfig& c, const std::string& s) { c.weight_scheme = parse_weight_scheme(s); });
    py::class_<AggregateConfig>(m, "AggregateConfig")
        .def(py::init<>())
        .def_property("weight_scheme", [](const AggregateConfig& c) { return std::string(to_string(c.weight_scheme)); },
                      [](AggregateConfig& c, const std::string& s) { c.weight_scheme = parse_weight_scheme(s); });
    py::class_<RansacConfig>(m, "RansacConfig")
        .def(py::init<>())
        .def_readwrite("max_iterations", &RansacConfig::max_iterations)
        .def_readwrite("reprojection_threshold", &RansacConfig::reprojection_threshold)
        .def_readwrite("confidence", &RansacConfig::confidence)
        .def_readwrite("rng_seed", &RansacConfig::rng_seed)
        .def_readwrite("symmetric_error", &RansacConfig::symmetric_error);

    m.def(
        "histogram_score",
        [](const MatchSet& ms, double width, double height, const HistogramConfig& cfg) {
            const auto r = histogram_score(ms, {width, height}, cfg);
            py::dict d;
            d["score"] = r.score;
            d["dominant_shift"] = py::make_tuple(r.dominant_shift_x, r.dominant_shift_y);
            d["degenerate"] = r.degenerate;
            return d;
        },
        py::arg("matches"), py::arg("width"), py::arg("height"), py::arg("config") = HistogramConfig{});
    m.def(
        "histogram",
        [](const MatchSet& ms, double width, double height, const HistogramConfig& cfg) {
            const auto h = build_histogram(ms, {width, height}, cfg);
            py::array_t<double> out({static_cast<py::ssize_t>(h.rows()), static_cast<py::ssize_t>(h.cols())});
            std::memcpy(out.mutable_data(), h.values().data(), h.values().size() * sizeof(double));
            return py::make_tuple(out, py::make_tuple(h.origin_x(), h.origin_y()));
        },
        py::arg("matches"), py::arg("width"), py::arg("height"), py::arg("config") = HistogramConfig{},
        "Smoothed shift histogram as a (rows, cols) array plus the (x, y) origin of bin (0, 0).");
    m.def(
        "anchor_score",
        [](const MatchSet& ms, const FeatureSet& a, const FeatureSet& b, const AnchorConfig& cfg) {
            return anchor_score(ms, a, b, cfg);
        },
        py::arg("matches"), py::arg("a"), py::arg("b"), py::arg("config") = AnchorConfig{});
    m.def(
        "aggregate_score",
        [](const MatchSet& ms, double width, double height) {
            const auto r = aggregate_score_detailed(ms, {width, height});
            return py::make_tuple(r.score, r.clamped);
        },
        py::arg("matches"), py::arg("width"), py::arg("height"), "Returns (score, clamped_component_count).");
    m.def(
        "ransac_score",
        [](const MatchSet& ms, const FeatureSet& a, const FeatureSet& b, const RansacConfig& cfg) {
            const auto r = ransac_score(ms, a, b, cfg);
            py::dict d;
            d["score"] = r.score;
            d["iterations"] = r.iterations;
            d["homography"] = homography_or_none(r.model);
            return d;
        },
        py::arg("matches"), py::arg("a"), py::arg("b"), py::arg("config") = RansacConfig{});
    m.def(
        "fit_homography",
        [](DoubleArray src, DoubleArray dst, double min_area) {
            const auto pairs = pairs_from(std::move(src), std::move(dst));
            if (pairs.size() != 4) throw ContractError("fit_homography needs exactly 4 correspondences");
            return homography_or_none(fit_homography_4pt(std::span<const PointPair, 4>(pairs.data(), 4), min_area));
        },
        py::arg("src"), py::arg("dst"), py::arg("min_area") = 0.0);
    m.def(
        "count_inliers",
        [](DoubleArray h, DoubleArray src, DoubleArray dst, double threshold, bool symmetric) {
            if (h.ndim() != 2 || h.shape(0) != 3 || h.shape(1) != 3) throw ContractError("homography must be 3x3");
            Homography hom;
            const auto v = h.unchecked<2>();
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) hom.m(r, c) = v(r, c);
            return count_inliers(hom, pairs_from(std::move(src), std::move(dst)), threshold, symmetric);
        },
        py::arg("homography"), py::arg("src"), py::arg("dst"), py::arg("threshold"), py::arg("symmetric") = false);

    // -- pipeline ------------------------------------------------------------

    py::class_<Database>(m, "Database")
        .def_static(
            "load",
            [](const std::filesystem::path& manifest, const std::filesystem::path& features,
               const std::filesystem::path& descriptors) {
                return Database::load(load_manifest(manifest), features, descriptors);
            },
            py::arg("manifest"), py::arg("features"), py::arg("descriptors"))
        .def("__len__", &Database::size)
        .def_property_readonly("reference_ids", [](const Database& db) { return db.manifest().reference_ids; })
        .def_property_readonly("query_ids", [](const Database& db) { return db.manifest().query_ids; })
        .def_property_readonly("global_dim", &Database::global_dim)
        .def("reference", py::overload_cast<std::size_t>(&Database::reference, py::const_), py::arg("index"))
        .def("query_features", &Database::query_features, py::arg("query_id"))
        .def("query_descriptor", [](const Database& db, const std::string& id) {
            const auto v = db.query_descriptor(id);
            return py::array_t<float>(static_cast<py::ssize_t>(v.size()), v.data());
        });

    py::class_<PipelineConfig>(m, "PipelineConfig")
        .def(py::init<>())
        .def_readwrite("k_candidates", &PipelineConfig::k_candidates)
        .def_property("scorer", [](const PipelineConfig& c) { return std::string(to_string(c.scorer)); },
                      [](PipelineConfig& c, const std::string& s) { c.scorer = parse_scorer(s); })
        .def_property(
            "combine_c", [](const PipelineConfig& c) { return c.combine ? std::optional<double>(c.combine->c) : std::nullopt; },
            [](PipelineConfig& c, std::optional<double> v) {
                c.combine = v ? std::optional<CombineConfig>(CombineConfig{*v}) : std::nullopt;
            },
            "Weight c of the filtering score in the combined ranking, or None for re-ranking scores alone.")
        .def_readwrite("histogram", &PipelineConfig::histogram)
        .def_readwrite("anchor", &PipelineConfig::anchor)
        .def_readwrite("aggregate", &PipelineConfig::aggregate)
        .def_readwrite("ransac", &PipelineConfig::ransac)
        .def_readwrite("jobs", &PipelineConfig::jobs)
        .def("validate", &PipelineConfig::validate);

    py::class_<RankedResult>(m, "RankedResult")
        .def_readonly("query_id", &RankedResult::query_id)
        .def_readonly("truncated", &RankedResult::truncated)
        .def_property_readonly("entries",
                               [](const RankedResult& r) {
                                   py::list out;
                                   for (const auto& e : r.entries) out.append(entry_dict(e));
                                   return out;
                               })
        .def_property_readonly("ranked",
                               [](const RankedResult& r) {
                                   std::vector<std::size_t> out;
                                   for (const auto& e : r.entries) out.push_back(e.reference_index);
                                   return out;
                               })
        .def_property_readonly("timings",
                               [](const RankedResult& r) {
                                   py::dict d;
                                   d["filtering"] = r.timings.filtering;
                                   d["feature_load"] = r.timings.feature_load;
                                   d["matching_score"] = r.timings.matching_score;
                                   d["total"] = r.timings.total;
                                   return d;
                               })
        .def("to_json", &result_to_json, py::arg("include_timings") = false);

    m.def(
        "filter_topk",
        [](FloatArray query, const Database& db, std::size_t k) {
            const auto r = filter_topk(std::span<const float>(query.data(), static_cast<std::size_t>(query.size())), db, k);
            std::vector<std::pair<std::size_t, double>> out;
            for (const auto& c : r.candidates) out.emplace_back(c.reference_index, c.filtering_score);
            return out;
        },
        py::arg("query"), py::arg("db"), py::arg("k"), "Top-k (reference index, cosine score) pairs.");
    m.def("recognize", &recognize, py::arg("query_id"), py::arg("db"), py::arg("config") = PipelineConfig{},
          py::call_guard<py::gil_scoped_release>());

    // -- evaluation ------------------------------------------------------------

    m.def("evaluate_json",
          [](const std::vector<RankedResult>& results, const Database& db, const PipelineConfig& cfg, bool bench) {
              return report_to_json(bench ? bench_report(results, db, cfg) : evaluate(results, db, cfg));
          },
          py::arg("results"), py::arg("db"), py::arg("config"), py::arg("bench") = false);
    m.def(
        "recall_at_1",
        [](const std::vector<std::pair<std::string, std::vector<std::size_t>>>& outcomes, const IndexGroundTruth& gt,
           std::vector<double> tolerances) {
            std::vector<QueryOutcome> o;
            for (const auto& [id, ranked] : outcomes) o.push_back({id, ranked});
            return recall_at_1(o, gt, ToleranceSpec{ToleranceSpec::Mode::Index, std::move(tolerances)});
        },
        py::arg("outcomes"), py::arg("ground_truth"), py::arg("tolerances") = std::vector<double>{1, 2, 5},
        "Percent of ground-truth queries whose top result lies within each index tolerance, or None.");

    // -- synthetic data ----------------------------------------------------------

    py::class_<SynthSpec>(m, "SynthSpec")
        .def(py::init<>())
        .def_readwrite("n_places", &SynthSpec::n_places)
        .def_readwrite("features_per_image", &SynthSpec::features_per_image)
        .def_readwrite("descriptor_dim", &SynthSpec::descriptor_dim)
        .def_readwrite("width", &SynthSpec::width)
        .def_readwrite("height", &SynthSpec::height)
        .def_readwrite("inlier_shift_x", &SynthSpec::inlier_shift_x)
        .def_readwrite("inlier_shift_y", &SynthSpec::inlier_shift_y)
        .def_readwrite("outlier_fraction", &SynthSpec::outlier_fraction)
        .def_readwrite("descriptor_noise_sigma", &SynthSpec::descriptor_noise_sigma)
        .def_readwrite("warp", &SynthSpec::warp)
        .def_readwrite("global_noise_sigma", &SynthSpec::global_noise_sigma)
        .def_readwrite("global_dim", &SynthSpec::global_dim)
        .def_readwrite("place_spacing_m", &SynthSpec::place_spacing_m)
        .def_readwrite("rng_seed", &SynthSpec::rng_seed);

    py::class_<SynthDataset>(m, "SynthDataset")
        .def_readonly("references", &SynthDataset::references)
        .def_readonly("queries", &SynthDataset::queries)
        .def_readonly("inliers", &SynthDataset::inliers)
        .def_property_readonly("reference_ids", [](const SynthDataset& d) { return d.manifest.reference_ids; })
        .def_property_readonly("query_ids", [](const SynthDataset& d) { return d.manifest.query_ids; })
        .def_property_readonly("ground_truth", [](const SynthDataset& d) { return d.manifest.ground_truth; })
        .def("database", &SynthDataset::database)
        .def("write", &SynthDataset::write, py::arg("directory"));

    m.def("generate", &generate, py::arg("spec") = SynthSpec{});
}
