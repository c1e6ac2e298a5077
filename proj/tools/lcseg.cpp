// Command-line front end: synth, features, embed, segment, eval and bench.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lcseg/error.hpp"
#include "lcseg/pipeline.hpp"
#include "lcseg/raster_io.hpp"

namespace fs = std::filesystem;
using namespace lcseg;

namespace {

/// Command-line values that override the manifest when given.
struct Overrides {
    std::optional<std::string> method;
    std::optional<double> ridge;
    std::optional<std::string> ridge_mode;
    std::optional<double> label_fraction;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> sampler_seed;
    std::optional<std::uint64_t> kmeans_seed;
    std::optional<double> perplexity;
    std::optional<int> tsne_iters;
    std::optional<std::size_t> pca_dim;
    std::optional<int> repeats;
    std::optional<std::string> tile;
    std::optional<bool> reuse_embedding;
    std::optional<std::string> glcm_normalization;

    void add_to(CLI::App& app, bool clustering) {
        app.add_option("--seed", seed, "t-SNE seed");
        app.add_option("--perplexity", perplexity, "t-SNE perplexity");
        app.add_option("--tsne-iters", tsne_iters, "t-SNE iterations");
        app.add_option("--pca-dim", pca_dim, "PCA dimension before t-SNE (0 = skip)");
        app.add_option("--glcm-normalization", glcm_normalization, "paper or probability")
            ->check(CLI::IsMember({"paper", "probability"}));
        if (!clustering) return;
        app.add_option("--variant", method, "rbf, linear, poly, kmeans-features or kmeans-embedding");
        app.add_option("--ridge", ridge, "CCA ridge value");
        app.add_option("--ridge-mode", ridge_mode, "relative (times trace/dim) or absolute")
            ->check(CLI::IsMember({"relative", "absolute"}));
        app.add_option("--label-fraction", label_fraction, "fraction of truth pixels used for training");
        app.add_option("--sampler-seed", sampler_seed, "seed of the labeled-subset sampler");
        app.add_option("--kmeans-seed", kmeans_seed, "k-means seed");
        app.add_option("--repeats", repeats, "number of repeated experiments");
        app.add_option("--tile", tile, "tile size HxW (0x0 = whole image)");
        app.add_option("--reuse-embedding", reuse_embedding, "share one t-SNE run across repeats");
    }

    RunConfig apply(const RunConfig& base) const {
        // Reuse the manifest parser so flag values get the same validation.
        std::string extra;
        auto put = [&](const char* key, const std::string& value) { extra += std::string(key) + " = " + value + "\n"; };
        auto num = [](auto v) {
            std::ostringstream s;
            s.precision(17);
            s << v;
            return s.str();
        };
        if (method) put("method", *method);
        if (ridge) put("ridge", num(*ridge));
        if (ridge_mode) put("ridge_mode", *ridge_mode);
        if (label_fraction) put("label_fraction", num(*label_fraction));
        if (seed) put("tsne_seed", num(*seed));
        if (sampler_seed) put("sampler_seed", num(*sampler_seed));
        if (kmeans_seed) put("kmeans_seed", num(*kmeans_seed));
        if (perplexity) put("perplexity", num(*perplexity));
        if (tsne_iters) put("tsne_iters", num(*tsne_iters));
        if (pca_dim) put("pca_dim", num(*pca_dim));
        if (repeats) put("repeats", num(*repeats));
        if (tile) put("tile", *tile);
        if (reuse_embedding) put("reuse_embedding", *reuse_embedding ? "true" : "false");
        if (glcm_normalization) put("glcm_normalization", *glcm_normalization);
        return parse_manifest_text(manifest_text(base) + extra, fs::current_path());
    }
};

int exit_code(const Error& e) { return static_cast<int>(e.category()); }

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write '" + path.string() + "'");
    f << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-supervised land-cover segmentation"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Write a synthetic textured scene with its truth mask");
    fs::path synth_out;
    std::string layout = "quadrants";
    std::size_t synth_h = 96, synth_w = 96;
    std::uint64_t synth_seed = 1;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--layout", layout, "quadrants or voronoi")->check(CLI::IsMember({"quadrants", "voronoi"}));
    synth->add_option("--height", synth_h, "rows");
    synth->add_option("--width", synth_w, "columns");
    synth->add_option("--seed", synth_seed, "scene seed");

    // features
    auto* features = app.add_subcommand("features", "Compute the per-pixel feature matrix");
    fs::path feat_manifest, features_out;
    Overrides feat_over;
    features->add_option("--manifest", feat_manifest, "dataset manifest")->required();
    features->add_option("--features-out", features_out, "LSX1 output path")->required();
    feat_over.add_to(*features, false);

    // embed
    auto* embed = app.add_subcommand("embed", "Features, optional PCA and t-SNE");
    fs::path emb_manifest, embedding_out;
    Overrides emb_over;
    embed->add_option("--manifest", emb_manifest, "dataset manifest")->required();
    embed->add_option("--embedding-out", embedding_out, "LSE1 output path")->required();
    emb_over.add_to(*embed, false);

    // segment
    auto* segment_cmd = app.add_subcommand("segment", "Run the full pipeline and score it");
    fs::path seg_manifest, seg_out;
    std::optional<fs::path> seg_cache;
    Overrides seg_over;
    segment_cmd->add_option("--manifest", seg_manifest, "dataset manifest")->required();
    segment_cmd->add_option("--out", seg_out, "output directory")->required();
    segment_cmd->add_option("--cache-dir", seg_cache, "directory for cached features and embeddings");
    seg_over.add_to(*segment_cmd, true);

    // eval
    auto* eval = app.add_subcommand("eval", "Score a label raster against a truth mask");
    fs::path pred_path, truth_path;
    std::optional<fs::path> eval_out;
    int eval_classes = 0;
    eval->add_option("--pred", pred_path, "predicted cluster or class raster")->required();
    eval->add_option("--truth", truth_path, "truth mask")->required();
    eval->add_option("--classes", eval_classes, "class count K")->required();
    eval->add_option("--out", eval_out, "directory for classes.csv and confusion.csv");

    // bench
    auto* bench = app.add_subcommand("bench", "Compare methods on one dataset");
    fs::path bench_manifest, bench_out;
    std::optional<fs::path> bench_cache;
    std::vector<std::string> bench_methods{"kmeans-features", "kmeans-embedding", "linear", "poly", "rbf"};
    Overrides bench_over;
    bench->add_option("--manifest", bench_manifest, "dataset manifest")->required();
    bench->add_option("--out", bench_out, "output directory")->required();
    bench->add_option("--methods", bench_methods, "methods to compare")->delimiter(',');
    bench->add_option("--cache-dir", bench_cache, "directory for cached features and embeddings");
    bench_over.add_to(*bench, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*synth) {
            const auto spec = default_scene(layout == "voronoi" ? SceneLayout::Voronoi : SceneLayout::Quadrants,
                                            synth_h, synth_w);
            const auto manifest = write_scene(generate_scene(spec, synth_seed), spec, synth_out);
            std::cout << manifest.string() << '\n';
        } else if (*features) {
            const RunConfig config = feat_over.apply(parse_manifest(feat_manifest));
            const Inputs inputs = load_inputs(config);
            const Matrix x = assemble_features(inputs.image, config.segment.features);
            save_feature_matrix(x, features_out);
            std::cout << "features: " << x.rows() << " x " << x.cols() << '\n';
        } else if (*embed) {
            const RunConfig config = emb_over.apply(parse_manifest(emb_manifest));
            const Inputs inputs = load_inputs(config);
            const auto stages = embed_image(inputs.image, config.segment);
            save_embedding(stages.embedding.coords, embedding_out);
            std::cout << "embedding: " << stages.embedding.coords.rows() << " x " << stages.embedding.coords.cols()
                      << '\n';
            for (const auto& s : stages.embedding.kl_trajectory) {
                std::cout << "kl " << s.iteration << ' ' << s.value << '\n';
            }
            if (!stages.embedding.unconverged_sigmas.empty()) {
                std::cerr << "warning: " << stages.embedding.unconverged_sigmas.size()
                          << " bandwidth searches did not converge\n";
            }
        } else if (*segment_cmd) {
            const RunConfig config = seg_over.apply(parse_manifest(seg_manifest));
            StageCache cache(seg_cache);
            const auto result = run_pipeline(config, cache);
            write_pipeline_outputs(config, result, seg_out);
            std::cout << pipeline_report_text(config, result);
        } else if (*eval) {
            const LabelMask truth = load_mask(truth_path, eval_classes);
            const LabelMask pred = load_mask(pred_path, eval_classes, Dimensions{truth.height(), truth.width()});
            const auto report = evaluate(pred.labels(), truth);
            if (eval_out) {
                fs::create_directories(*eval_out);
                write_class_csv(report, *eval_out / "classes.csv");
                write_confusion_csv(report, *eval_out / "confusion.csv");
                write_file(*eval_out / "report.txt", summary_text(report));
            }
            std::cout << summary_text(report);
        } else if (*bench) {
            const RunConfig config = bench_over.apply(parse_manifest(bench_manifest));
            std::vector<Method> methods;
            for (const auto& m : bench_methods) methods.push_back(parse_method(m));
            StageCache cache(bench_cache);
            const auto rows = run_bench(config, methods, cache);
            fs::create_directories(bench_out);
            const std::string table = bench_table_csv(rows);
            write_file(bench_out / "bench.csv", table);
            for (const auto& row : rows) {
                RunConfig c = config;
                c.method = row.method;
                write_pipeline_outputs(c, row.result, bench_out / method_name(row.method));
            }
            std::cout << table;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e);
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
