#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lcseg/clustering.hpp"
#include "lcseg/evaluation.hpp"
#include "lcseg/raster.hpp"

namespace lcseg {

// ---- Label sampling ------------------------------------------------------------

/// Keeps a uniformly random `fraction` of the labeled pixels (a shuffled prefix
/// of round(fraction * labeled) pixels, at least one). Redraws up to 100 times
/// until every class present in `truth` keeps a pixel.
LabelMask sample_labels(const LabelMask& truth, double fraction, std::uint64_t seed);

// ---- Synthetic scenes ------------------------------------------------------------

enum class SceneLayout { Quadrants, Voronoi };

struct RegionTexture {
    std::vector<double> base;  ///< intensity per band
    double noise = 0.0;        ///< uniform noise half-width
    int stripe_period = 0;     ///< 0 = none; vertical stripes of this period
    double stripe_amplitude = 0.0;
    int checker_period = 0;    ///< 0 = none; checkerboard square size
    double checker_amplitude = 0.0;
};

struct SceneSpec {
    std::size_t height = 96;
    std::size_t width = 96;
    SceneLayout layout = SceneLayout::Quadrants;
    std::vector<std::string> band_names;  ///< one per band
    std::vector<RegionTexture> regions;   ///< one per class

    int class_count() const { return static_cast<int>(regions.size()); }
    void validate() const;
};

/// Four textures over three bands named R, G, IR.
SceneSpec default_scene(SceneLayout layout, std::size_t height = 96, std::size_t width = 96);

struct SceneData {
    MultiBandImage image;
    LabelMask truth;
};

/// Deterministic for a given spec and seed. Voronoi regions have sinusoidally
/// warped boundaries and each cover at least 5% of the pixels.
SceneData generate_scene(const SceneSpec& spec, std::uint64_t seed);

// ---- Run configuration ----------------------------------------------------------------

enum class Method { Rbf, Linear, Polynomial, KmeansFeatures, KmeansEmbedding };

const char* method_name(Method method);
/// "rbf", "linear", "poly", "kmeans-features" or "kmeans-embedding".
Method parse_method(const std::string& text);

struct BandEntry {
    std::string name;
    std::filesystem::path path;
};

struct RunConfig {
    std::vector<BandEntry> bands;
    std::optional<std::pair<std::string, std::string>> ndvi;  ///< (IR band, red band)
    std::filesystem::path truth;
    SegmentConfig segment;
    Method method = Method::Rbf;
    double label_fraction = 0.05;
    std::size_t tile_height = 0;  ///< 0 = whole image
    std::size_t tile_width = 0;
    std::uint64_t sampler_seed = 1;
    int repeats = 1;
    bool reuse_embedding = true;

    /// Throws ConfigError on inconsistent settings.
    void validate() const;
};

/// key = value lines; '#' starts a comment. Relative paths are resolved
/// against the manifest's directory.
RunConfig parse_manifest_text(const std::string& text, const std::filesystem::path& base_dir);
RunConfig parse_manifest(const std::filesystem::path& path);
/// Every field, with absolute paths and round-trip exact numbers.
std::string manifest_text(const RunConfig& config);
void write_manifest(const RunConfig& config, const std::filesystem::path& path);

/// Writes the scene's bands and truth as 8-bit PGM plus a manifest.txt that
/// points at them. Returns the manifest path.
std::filesystem::path write_scene(const SceneData& scene, const SceneSpec& spec,
                                  const std::filesystem::path& dir);

struct Inputs {
    MultiBandImage image;
    LabelMask truth;
};

/// Loads the bands (plus NDVI when requested) and the truth mask.
Inputs load_inputs(const RunConfig& config);

// ---- Stage cache -------------------------------------------------------------------------

/// 64-bit FNV-1a.
class ContentHash {
public:
    ContentHash& bytes(const void* data, std::size_t size);
    ContentHash& text(const std::string& s);
    template <typename T>
    ContentHash& value(const T& v) {
        return bytes(&v, sizeof v);
    }
    std::uint64_t digest() const noexcept { return state_; }
    std::string hex() const;

private:
    std::uint64_t state_ = 14695981039346656037ull;
};

using TileArtifacts = EmbeddingStages;

/// Keeps the features and embedding of each tile in memory, and the embedding
/// on disk as well when a directory is given. Entries are keyed by a hash of
/// the pixel values and every setting that influences them.
class StageCache {
public:
    explicit StageCache(std::optional<std::filesystem::path> directory = std::nullopt);

    const TileArtifacts& artifacts(const MultiBandImage& image, const SegmentConfig& config);
    std::size_t computed() const noexcept { return computed_; }
    std::size_t disk_hits() const noexcept { return disk_hits_; }

private:
    std::optional<std::filesystem::path> directory_;
    std::map<std::string, TileArtifacts> entries_;
    std::size_t computed_ = 0;
    std::size_t disk_hits_ = 0;
};

// ---- Pipeline ---------------------------------------------------------------------------

struct RepeatResult {
    std::vector<int> labels;  ///< merged class map, row-major
    EvalReport report;
    std::vector<std::size_t> effective_rank;  ///< CCA effective rank per tile
};

struct PipelineResult {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<RepeatResult> repeats;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;  ///< sample standard deviation, 0 for one repeat
    std::vector<double> mean_class_iou;
    double mean_iou = 0.0;
};

/// Per tile: sample labels, segment, map clusters to classes with the tile's
/// training pixels. Tiles are merged and scored against the full truth.
/// Repeat r uses sampler and k-means seeds offset by r; the t-SNE seed is
/// offset as well unless embeddings are reused.
PipelineResult run_pipeline(const RunConfig& config, const Inputs& inputs, StageCache& cache);
PipelineResult run_pipeline(const RunConfig& config, StageCache& cache);

/// Mean and std of accuracy and per-class IOU across repeats.
std::string pipeline_report_text(const RunConfig& config, const PipelineResult& result);

/// Writes labels.pgm (first repeat), labels_rNN.pgm for later repeats,
/// report.txt, classes.csv, confusion.csv and run_manifest.txt.
void write_pipeline_outputs(const RunConfig& config, const PipelineResult& result,
                            const std::filesystem::path& dir);

struct BenchRow {
    Method method;
    PipelineResult result;
};

/// Runs each method on the same inputs, sharing the cache.
std::vector<BenchRow> run_bench(const RunConfig& config, const std::vector<Method>& methods,
                                StageCache& cache);
/// method,mean_accuracy,std_accuracy,mean_iou
std::string bench_table_csv(const std::vector<BenchRow>& rows);

}  // namespace lcseg
