// vpr: command-line front end for the re-ranking engine.
//
// Exit codes: 0 success, 1 validation error, 2 I/O error, 3 internal error.

#include "vpr/errors.hpp"
#include "vpr/evaluation.hpp"
#include "vpr/feature_store.hpp"
#include "vpr/pipeline.hpp"
#include "vpr/synthetic.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kValidation = 1, kIo = 2, kInternal = 3 };

struct DataArgs {
    std::string manifest;
    std::string features;
    std::string descriptors;
};

struct PipelineArgs {
    std::size_t k_candidates = 50;
    std::string scorer = "histogram";
    double combine_c = 0.0;
    double bin_size = 15.0;
    double sigma = 22.5;
    double truncation_radius = 3.0;
    std::string histogram_weight = "fs";
    int grid_bins = 15;
    int window = 10;
    double tolerance = 3.0;
    std::string anchor_weight = "fs";
    bool include_anchor_cell = false;
    std::string aggregate_weight = "dmf";
    int max_iterations = 2000;
    double reprojection_threshold = 24.0;
    double confidence = 0.99;
    bool symmetric_error = false;
    std::uint64_t seed = 0;
    unsigned jobs = 0;

    vpr::PipelineConfig build() const {
        vpr::PipelineConfig cfg;
        cfg.k_candidates = k_candidates;
        cfg.scorer = vpr::parse_scorer(scorer);
        if (combine_c != 0.0) cfg.combine = vpr::CombineConfig{combine_c};
        cfg.histogram = {bin_size, sigma, truncation_radius, vpr::parse_weight_scheme(histogram_weight)};
        cfg.anchor = {grid_bins, window, tolerance, vpr::parse_weight_scheme(anchor_weight), include_anchor_cell};
        cfg.aggregate = {vpr::parse_weight_scheme(aggregate_weight)};
        cfg.ransac = {max_iterations, reprojection_threshold, confidence, seed, symmetric_error};
        cfg.jobs = jobs;
        cfg.validate();
        return cfg;
    }
};

struct EvalArgs {
    std::vector<double> tolerances{1, 2, 5};
    std::vector<std::size_t> n_values{1, 5, 10};
    double threshold_m = 25.0;
    double gt_max_dist = 5.0;

    vpr::EvalConfig build() const {
        vpr::EvalConfig cfg;
        cfg.tolerances = {vpr::ToleranceSpec::Mode::Index, tolerances};
        cfg.tolerances.validate();
        cfg.n_values = n_values;
        cfg.metric_threshold = threshold_m;
        cfg.ground_truth_max_dist = gt_max_dist;
        if (!(threshold_m > 0.0) || !(gt_max_dist > 0.0)) throw vpr::ContractError("distances must be positive");
        return cfg;
    }
};

void add_data_options(CLI::App* cmd, DataArgs& a) {
    cmd->add_option("--manifest", a.manifest, "Dataset manifest (JSON)")->required();
    cmd->add_option("--features", a.features, "Directory of <id>.vprf feature files")->required();
    cmd->add_option("--descriptors", a.descriptors, "Directory of .vprg global-descriptor files")->required();
}

void add_pipeline_options(CLI::App* cmd, PipelineArgs& a) {
    cmd->add_option("--k-candidates", a.k_candidates, "Candidates kept by the filtering stage")->capture_default_str();
    cmd->add_option("--scorer", a.scorer, "histogram | anchor | aggregate | ransac")->capture_default_str();
    cmd->add_option("--combine-c", a.combine_c, "Enable final = c * s_f + s_r with this c (e.g. 1e6)");
    cmd->add_option("--bin-size", a.bin_size, "Histogram bin size [px]")->capture_default_str();
    cmd->add_option("--sigma", a.sigma, "Histogram Gaussian sigma [px]")->capture_default_str();
    cmd->add_option("--truncation-radius", a.truncation_radius, "Histogram kernel support [sigma]; inf = exact")
        ->capture_default_str();
    cmd->add_option("--histogram-weight", a.histogram_weight, "fs | dmf")->capture_default_str();
    cmd->add_option("--grid-bins", a.grid_bins, "Anchor grid cells per side")->capture_default_str();
    cmd->add_option("--window", a.window, "Anchor half-window [cells]")->capture_default_str();
    cmd->add_option("--tolerance", a.tolerance, "Anchor consistency tolerance [cells]")->capture_default_str();
    cmd->add_option("--anchor-weight", a.anchor_weight, "fs | dmf")->capture_default_str();
    cmd->add_flag("--include-anchor-cell", a.include_anchor_cell, "Count the anchor cell as its own neighbour");
    cmd->add_option("--aggregate-weight", a.aggregate_weight, "fs | dmf")->capture_default_str();
    cmd->add_option("--max-iterations", a.max_iterations, "RANSAC iteration cap")->capture_default_str();
    cmd->add_option("--reprojection-threshold", a.reprojection_threshold, "RANSAC inlier threshold [px]")
        ->capture_default_str();
    cmd->add_option("--confidence", a.confidence, "RANSAC early-stop confidence")->capture_default_str();
    cmd->add_flag("--symmetric-error", a.symmetric_error, "RANSAC: require forward and backward error below threshold");
    cmd->add_option("--seed", a.seed, "Seed for all randomness")->capture_default_str();
    cmd->add_option("--jobs", a.jobs, "Worker threads (0 = all cores)")->capture_default_str();
}

void add_eval_options(CLI::App* cmd, EvalArgs& a) {
    cmd->add_option("--tolerances", a.tolerances, "Sequence-index tolerances for Recall@1")
        ->delimiter(',')
        ->capture_default_str();
    cmd->add_option("--n-values", a.n_values, "N for metric Recall@N")->delimiter(',')->capture_default_str();
    cmd->add_option("--threshold-m", a.threshold_m, "Metric Recall@N threshold [m]")->capture_default_str();
    cmd->add_option("--gt-max-dist", a.gt_max_dist, "Metric ground truth: drop queries farther than this [m]")
        ->capture_default_str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << text)) throw vpr::IoError("cannot write " + path.string());
}

fs::path prepare_out(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw vpr::IoError("cannot create output directory " + dir + ": " + ec.message());
    return dir;
}

vpr::Database open_database(const DataArgs& a) {
    const auto manifest = vpr::load_manifest(a.manifest);
    return vpr::Database::load(manifest, a.features, a.descriptors);
}

std::vector<vpr::RankedResult> run_all(const vpr::Database& db, const vpr::PipelineConfig& cfg,
                                       const std::vector<std::string>& queries) {
    std::vector<vpr::RankedResult> results;
    results.reserve(queries.size());
    for (const auto& q : queries) results.push_back(vpr::recognize(q, db, cfg));
    return results;
}

void print_sizes(const vpr::DatabaseSizeReport& s) {
    std::cout << "references        " << s.reference_count << '\n'
              << "feature bytes     " << s.feature_bytes << '\n'
              << "descriptor bytes  " << s.descriptor_bytes << '\n'
              << "total bytes       " << s.total() << " (" << static_cast<double>(s.total()) / (1024.0 * 1024.0)
              << " MiB)\n";
}

int cmd_ingest(const std::vector<std::string>& files, const std::string& out_dir) {
    fs::path out;
    if (!out_dir.empty()) out = prepare_out(out_dir);
    for (const auto& f : files) {
        const fs::path path(f);
        vpr::LoadDiagnostics diag;
        if (path.extension() == ".vprg") {
            const auto globals = vpr::load_global_descriptor_file(path, &diag);
            std::cout << f << ": VPRG, " << globals.size() << " descriptors of dim "
                      << (globals.empty() ? 0 : globals.front().vector.size()) << ", renormalized " << diag.renormalized
                      << '\n';
            if (!out.empty()) vpr::write_global_descriptor_file(globals, out / path.filename());
        } else {
            const auto set = vpr::load_feature_file(path, &diag);
            std::cout << f << ": VPRF, " << set.size() << " features, dim " << set.descriptor_dim << ", "
                      << set.width << "x" << set.height << ", renormalized " << diag.renormalized << '\n';
            if (!out.empty()) vpr::write_feature_file(set, out / path.filename());
        }
    }
    return kOk;
}

int cmd_build_db(const DataArgs& data) {
    const auto db = open_database(data);
    std::cout << "database ok\n";
    print_sizes(db.size_report());
    if (db.renormalized_descriptors()) std::cout << "renormalized descriptors " << db.renormalized_descriptors() << '\n';
    return kOk;
}

int cmd_recognize(const DataArgs& data, const PipelineArgs& pargs, std::vector<std::string> queries,
                  const std::string& out_dir) {
    const auto cfg = pargs.build();
    const auto db = open_database(data);
    if (queries.empty()) queries = db.manifest().query_ids;
    std::string lines;
    for (const auto& q : queries) lines += vpr::result_to_json(vpr::recognize(q, db, cfg), true) + "\n";
    if (out_dir.empty()) {
        std::cout << lines;
    } else {
        write_text(prepare_out(out_dir) / "results.jsonl", lines);
    }
    return kOk;
}

int cmd_eval(const DataArgs& data, const PipelineArgs& pargs, const EvalArgs& eargs, const std::string& out_dir,
             bool bench) {
    const auto cfg = pargs.build();
    const auto ecfg = eargs.build();
    const auto out = prepare_out(out_dir);
    const auto db = open_database(data);
    const auto results = run_all(db, cfg, db.manifest().query_ids);

    if (bench) {
        const auto report = vpr::bench_report(results, db, cfg, ecfg);
        write_text(out / "bench.json", vpr::report_to_json(report));
        const auto text = vpr::report_to_text(report);
        write_text(out / "bench.txt", text);
        std::cout << text;
        return kOk;
    }
    const auto report = vpr::evaluate(results, db, cfg, ecfg);
    std::string lines;
    for (const auto& r : results) lines += vpr::result_to_json(r, false) + "\n";
    write_text(out / "results.jsonl", lines);
    write_text(out / "report.json", vpr::report_to_json(report));
    const auto text = vpr::report_to_text(report);
    write_text(out / "report.txt", text);
    write_text(out / "failures.csv", vpr::failures_to_csv(report));
    std::cout << text;
    return kOk;
}

int cmd_synth(const vpr::SynthSpec& spec, bool metric, const std::string& out_dir) {
    auto ds = vpr::generate(spec);
    if (metric) {
        ds.manifest.tolerance_unit = vpr::ToleranceUnit::Meters;
        ds.manifest.ground_truth.clear();
    }
    ds.write(prepare_out(out_dir));
    std::cout << "wrote " << spec.n_places << " places to " << out_dir << '\n';
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stage visual place recognition with model-free re-ranking"};
    app.require_subcommand(1);

    std::vector<std::string> ingest_files;
    std::string ingest_out;
    auto* ingest = app.add_subcommand("ingest", "Validate VPRF/VPRG files, optionally writing normalized copies");
    ingest->add_option("files", ingest_files, "Feature (.vprf) or global-descriptor (.vprg) files")->required();
    ingest->add_option("--out", ingest_out, "Directory for validated copies");

    DataArgs data;
    auto* build_db = app.add_subcommand("build-db", "Validate and index a dataset, print database size");
    add_data_options(build_db, data);

    PipelineArgs pargs;
    EvalArgs eargs;
    std::string out_dir;
    std::vector<std::string> query_ids;
    auto* recognize = app.add_subcommand("recognize", "Rank references for one or more queries (JSON lines)");
    add_data_options(recognize, data);
    add_pipeline_options(recognize, pargs);
    recognize->add_option("--query", query_ids, "Query id (repeatable; default all)");
    recognize->add_option("--out", out_dir, "Write results.jsonl here instead of stdout");

    auto* eval = app.add_subcommand("eval", "Run all queries and write report.json/report.txt/failures.csv");
    add_data_options(eval, data);
    add_pipeline_options(eval, pargs);
    add_eval_options(eval, eargs);
    eval->add_option("--out", out_dir, "Output directory")->required();

    auto* bench = app.add_subcommand("bench", "Timed run writing per-stage timing tables (bench.json/bench.txt)");
    add_data_options(bench, data);
    add_pipeline_options(bench, pargs);
    add_eval_options(bench, eargs);
    bench->add_option("--out", out_dir, "Output directory")->required();

    vpr::SynthSpec spec;
    bool metric = false;
    std::array<double, 9> warp{};
    auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic dataset");
    synth->add_option("--out", out_dir, "Output directory")->required();
    synth->add_option("--n-places", spec.n_places)->capture_default_str();
    synth->add_option("--features-per-image", spec.features_per_image)->capture_default_str();
    synth->add_option("--descriptor-dim", spec.descriptor_dim)->capture_default_str();
    synth->add_option("--width", spec.width)->capture_default_str();
    synth->add_option("--height", spec.height)->capture_default_str();
    synth->add_option("--inlier-shift-x", spec.inlier_shift_x)->capture_default_str();
    synth->add_option("--inlier-shift-y", spec.inlier_shift_y)->capture_default_str();
    synth->add_option("--outlier-fraction", spec.outlier_fraction)->capture_default_str();
    synth->add_option("--descriptor-noise-sigma", spec.descriptor_noise_sigma)->capture_default_str();
    auto* warp_opt = synth->add_option("--warp", warp, "Row-major 3x3 homography reference -> query")->expected(9);
    synth->add_option("--global-noise-sigma", spec.global_noise_sigma)->capture_default_str();
    synth->add_option("--global-dim", spec.global_dim)->capture_default_str();
    synth->add_option("--place-spacing-m", spec.place_spacing_m)->capture_default_str();
    synth->add_flag("--metric", metric, "Write a meters-mode manifest (ground truth from positions)");
    synth->add_option("--seed", spec.rng_seed)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kValidation;
    }

    try {
        if (*ingest) return cmd_ingest(ingest_files, ingest_out);
        if (*build_db) return cmd_build_db(data);
        if (*recognize) return cmd_recognize(data, pargs, query_ids, out_dir);
        if (*eval) return cmd_eval(data, pargs, eargs, out_dir, false);
        if (*bench) return cmd_eval(data, pargs, eargs, out_dir, true);
        if (*synth) {
            if (warp_opt->count()) spec.warp = warp;
            return cmd_synth(spec, metric, out_dir);
        }
    } catch (const vpr::ContractError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const vpr::FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const vpr::LoadError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    } catch (const vpr::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kInternal;
    }
    return kInternal;
}
