#include "lcseg/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "lcseg/error.hpp"
#include "lcseg/raster_io.hpp"

namespace lcseg {
namespace {

static_assert(std::endian::native == std::endian::little, "cache files assume a little-endian host");

constexpr int kSampleAttempts = 100;

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("manifest key '" + key + "': cannot parse '" + text + "'");
    }
    return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "on") return true;
    if (text == "false" || text == "0" || text == "off") return false;
    throw ConfigError("manifest key '" + key + "': expected true or false");
}

std::pair<std::string, std::string> split_pair(const std::string& key, const std::string& text, char sep) {
    const auto pos = text.find(sep);
    if (pos == std::string::npos) throw ConfigError("manifest key '" + key + "': expected two values");
    return {trim(text.substr(0, pos)), trim(text.substr(pos + 1))};
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& text) {
    std::filesystem::path p(text);
    return p.is_absolute() ? p : base / p;
}

std::filesystem::path absolute_normal(const std::filesystem::path& p) {
    return std::filesystem::absolute(p).lexically_normal();
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& manifest_setters() {
    static const std::map<std::string, Setter> setters = [] {
        std::map<std::string, Setter> m;
        auto size = [](std::size_t RunConfig::*field) {
            return [field](RunConfig& c, const std::string& k, const std::string& v) {
                c.*field = parse_number<std::size_t>(k, v);
            };
        };
        m["classes"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.class_count = parse_number<int>(k, v);
        };
        m["method"] = [](RunConfig& c, const std::string&, const std::string& v) { c.method = parse_method(v); };
        m["label_fraction"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.label_fraction = parse_number<double>(k, v);
        };
        m["tile"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            const auto [h, w] = split_pair(k, v, 'x');
            c.tile_height = parse_number<std::size_t>(k, h);
            c.tile_width = parse_number<std::size_t>(k, w);
        };
        m["tile_height"] = size(&RunConfig::tile_height);
        m["tile_width"] = size(&RunConfig::tile_width);
        m["repeats"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.repeats = parse_number<int>(k, v);
        };
        m["reuse_embedding"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.reuse_embedding = parse_bool(k, v);
        };
        m["sampler_seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.sampler_seed = parse_number<std::uint64_t>(k, v);
        };
        m["tsne_seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.tsne.seed = parse_number<std::uint64_t>(k, v);
        };
        m["kmeans_seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.kmeans_seed = parse_number<std::uint64_t>(k, v);
        };
        m["kmeans_restarts"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.kmeans_restarts = parse_number<int>(k, v);
        };
        m["cell_size"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.features.cell_size = parse_number<std::size_t>(k, v);
        };
        m["patch_size"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.features.patch_size = parse_number<std::size_t>(k, v);
        };
        m["glcm_levels"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.features.glcm_levels = parse_number<int>(k, v);
        };
        m["glcm_offset"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            const auto [r, col] = split_pair(k, v, ',');
            c.segment.features.glcm_offset = {parse_number<int>(k, r), parse_number<int>(k, col)};
        };
        m["glcm_normalization"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            if (v == "paper") {
                c.segment.features.glcm_normalization = GlcmNormalization::Paper;
            } else if (v == "probability") {
                c.segment.features.glcm_normalization = GlcmNormalization::Probability;
            } else {
                throw ConfigError("manifest key '" + k + "': expected paper or probability");
            }
        };
        m["pca_dim"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.pca_dim = parse_number<std::size_t>(k, v);
        };
        m["tsne_dim"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.tsne.out_dim = parse_number<std::size_t>(k, v);
        };
        m["perplexity"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.tsne.perplexity = parse_number<double>(k, v);
        };
        m["perplexity_tolerance"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.tsne.perplexity_tolerance = parse_number<double>(k, v);
        };
        m["tsne_iters"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.tsne.iterations = parse_number<int>(k, v);
        };
        m["learning_rate"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.tsne.learning_rate = parse_number<double>(k, v);
        };
        m["initial_momentum"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.tsne.initial_momentum = parse_number<double>(k, v);
        };
        m["final_momentum"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.tsne.final_momentum = parse_number<double>(k, v);
        };
        m["momentum_switch"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.tsne.momentum_switch_iter = parse_number<int>(k, v);
        };
        m["early_exaggeration"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.tsne.early_exaggeration = parse_number<double>(k, v);
        };
        m["exaggeration_iters"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.tsne.exaggeration_iters = parse_number<int>(k, v);
        };
        m["sigma_search_max_iters"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.tsne.sigma_search_max_iters = parse_number<int>(k, v);
        };
        m["kl_interval"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.tsne.kl_interval = parse_number<int>(k, v);
        };
        m["ridge"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.segment.ridge.value = parse_number<double>(k, v);
        };
        m["ridge_mode"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            if (v == "relative") {
                c.segment.ridge.kind = Ridge::Kind::Relative;
            } else if (v == "absolute") {
                c.segment.ridge.kind = Ridge::Kind::Absolute;
            } else {
                throw ConfigError("manifest key '" + k + "': expected relative or absolute");
            }
        };
        return m;
    }();
    return setters;
}

std::vector<int> region_map(const SceneSpec& spec, std::uint64_t seed) {
    const std::size_t h = spec.height;
    const std::size_t w = spec.width;
    std::vector<int> regions(h * w);
    if (spec.layout == SceneLayout::Quadrants) {
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < w; ++c) {
                regions[r * w + c] = 1 + (r >= h / 2 ? 2 : 0) + (c >= w / 2 ? 1 : 0);
            }
        }
        return regions;
    }
    const int k = spec.class_count();
    const double hd = static_cast<double>(h);
    const double wd = static_cast<double>(w);
    const double amplitude = 0.06 * std::min(hd, wd);
    const double period = 0.5 * std::min(hd, wd);
    constexpr double two_pi = 6.283185307179586;
    for (int attempt = 0; attempt < kSampleAttempts; ++attempt) {
        auto rng = seeded(seed, 0x5eed0000u + static_cast<std::uint64_t>(attempt));
        std::uniform_real_distribution<double> unit(0.15, 0.85);
        std::vector<std::array<double, 2>> sites(static_cast<std::size_t>(k));
        for (auto& s : sites) s = {unit(rng) * hd, unit(rng) * wd};
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < w; ++c) {
                const double rr = static_cast<double>(r);
                const double cc = static_cast<double>(c);
                const double wr = rr + amplitude * std::sin(two_pi * cc / period);
                const double wc = cc + amplitude * std::sin(two_pi * rr / period);
                int best = 0;
                double best_d = std::numeric_limits<double>::infinity();
                for (int s = 0; s < k; ++s) {
                    const double dr = wr - sites[static_cast<std::size_t>(s)][0];
                    const double dc = wc - sites[static_cast<std::size_t>(s)][1];
                    const double d = dr * dr + dc * dc;
                    if (d < best_d) {
                        best_d = d;
                        best = s;
                    }
                }
                regions[r * w + c] = best + 1;
                ++counts[static_cast<std::size_t>(best)];
            }
        }
        const auto smallest = *std::min_element(counts.begin(), counts.end());
        if (static_cast<double>(smallest) >= 0.05 * static_cast<double>(h * w)) return regions;
    }
    throw ConfigError("could not place Voronoi regions covering 5% each");
}

double texture_value(const RegionTexture& t, std::size_t band, std::size_t r, std::size_t c) {
    double v = t.base[band];
    if (t.stripe_period > 0) {
        v += ((c / static_cast<std::size_t>(t.stripe_period)) % 2 == 0 ? 1.0 : -1.0) * t.stripe_amplitude;
    }
    if (t.checker_period > 0) {
        const auto p = static_cast<std::size_t>(t.checker_period);
        v += ((r / p + c / p) % 2 == 0 ? 1.0 : -1.0) * t.checker_amplitude;
    }
    return v;
}

/// Classes present in a mask, ascending.
std::vector<int> present_classes(std::span<const int> labels) {
    std::set<int> seen;
    for (int l : labels) {
        if (l != 0) seen.insert(l);
    }
    return {seen.begin(), seen.end()};
}

void write_binary_matrix(std::ofstream& f, const Matrix& m) {
    const std::uint32_t dims[2] = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
    f.write(reinterpret_cast<const char*>(dims), sizeof dims);
    f.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
}

bool read_binary_matrix(std::ifstream& f, Matrix& m) {
    std::uint32_t dims[2];
    if (!f.read(reinterpret_cast<char*>(dims), sizeof dims)) return false;
    m.resize(dims[0], dims[1]);
    return static_cast<bool>(
        f.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size())));
}

constexpr char kCacheMagic[4] = {'L', 'S', 'C', '1'};

void save_artifacts(const TileArtifacts& a, const std::filesystem::path& path) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot write cache file '" + tmp + "'");
        f.write(kCacheMagic, 4);
        write_binary_matrix(f, a.reduced);
        write_binary_matrix(f, a.embedding.coords);
        const auto samples = static_cast<std::uint32_t>(a.embedding.kl_trajectory.size());
        f.write(reinterpret_cast<const char*>(&samples), sizeof samples);
        for (const auto& s : a.embedding.kl_trajectory) {
            const std::int32_t it = s.iteration;
            f.write(reinterpret_cast<const char*>(&it), sizeof it);
            f.write(reinterpret_cast<const char*>(&s.value), sizeof s.value);
        }
        if (!f) throw DataError("write failed for cache file '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

std::optional<TileArtifacts> load_artifacts(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) return std::nullopt;
    char magic[4];
    if (!f.read(magic, 4) || std::memcmp(magic, kCacheMagic, 4) != 0) return std::nullopt;
    TileArtifacts a;
    if (!read_binary_matrix(f, a.reduced) || !read_binary_matrix(f, a.embedding.coords)) return std::nullopt;
    std::uint32_t samples = 0;
    if (!f.read(reinterpret_cast<char*>(&samples), sizeof samples)) return std::nullopt;
    for (std::uint32_t i = 0; i < samples; ++i) {
        std::int32_t it = 0;
        double v = 0.0;
        if (!f.read(reinterpret_cast<char*>(&it), sizeof it) || !f.read(reinterpret_cast<char*>(&v), sizeof v)) {
            return std::nullopt;
        }
        a.embedding.kl_trajectory.push_back({it, v});
    }
    return a;
}

std::string artifact_key(const MultiBandImage& image, const SegmentConfig& c) {
    ContentHash h;
    h.text("lcseg-stages-1").value(image.height()).value(image.width()).value(image.band_count());
    for (const auto& b : image.bands()) h.bytes(b.values().data(), b.values().size_bytes());
    const auto& f = c.features;
    h.value(f.cell_size).value(f.patch_size).value(f.glcm_levels).value(f.glcm_offset.row).value(f.glcm_offset.col);
    h.value(static_cast<int>(f.glcm_normalization)).value(c.pca_dim);
    const auto& t = c.tsne;
    h.value(t.out_dim).value(t.perplexity).value(t.iterations).value(t.learning_rate).value(t.initial_momentum);
    h.value(t.final_momentum).value(t.momentum_switch_iter).value(t.early_exaggeration).value(t.exaggeration_iters);
    h.value(t.seed).value(t.perplexity_tolerance).value(t.sigma_search_max_iters).value(t.kl_interval);
    return h.hex();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write '" + path.string() + "'");
    f << text;
    if (!f) throw DataError("write failed for '" + path.string() + "'");
}

/// Cluster labels 1..k for one tile under the configured method.
std::vector<int> cluster_tile(const TileArtifacts& a, const std::vector<int>& train, int k,
                              Method method, SegmentConfig config, std::size_t& effective_rank) {
    config.class_count = k;
    KmeansConfig km;
    km.clusters = k;
    km.seed = config.kmeans_seed;
    km.restarts = config.kmeans_restarts;
    switch (method) {
        case Method::KmeansFeatures:
            return run_stage("kmeans", [&] { return kmeans(a.reduced, km).labels; });
        case Method::KmeansEmbedding:
            return run_stage("kmeans", [&] { return kmeans(a.embedding.coords, km).labels; });
        case Method::Rbf: config.variant = CcaVariant::Rbf; break;
        case Method::Linear: config.variant = CcaVariant::Linear; break;
        case Method::Polynomial: config.variant = CcaVariant::Polynomial; break;
    }
    auto result = segment_embedding(a.embedding.coords, train, config);
    effective_rank = result.model.effective;
    return std::move(result.clusters.labels);
}

}  // namespace

// ---- Label sampling ---------------------------------------------------------------------

LabelMask sample_labels(const LabelMask& truth, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0) throw ConfigError("label fraction must lie in (0, 1]");
    std::vector<std::size_t> labeled;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth.labels()[i] != 0) labeled.push_back(i);
    }
    if (labeled.empty()) throw DataError("truth mask has no labeled pixel");
    const auto wanted = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(labeled.size()))));
    const auto classes = present_classes(truth.labels());
    for (int attempt = 0; attempt < kSampleAttempts; ++attempt) {
        auto rng = seeded(seed, static_cast<std::uint64_t>(attempt));
        auto order = labeled;
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<int> out(truth.size(), 0);
        for (std::size_t i = 0; i < wanted; ++i) out[order[i]] = truth.labels()[order[i]];
        if (present_classes(out) == classes) {
            return LabelMask(truth.height(), truth.width(), std::move(out), truth.class_count());
        }
    }
    throw DataError("label sampling kept no pixel of some class after 100 attempts");
}

// ---- Synthetic scenes -------------------------------------------------------------------

void SceneSpec::validate() const {
    if (height < 2 || width < 2) throw ConfigError("scene must be at least 2x2");
    if (band_names.size() < 2) throw ConfigError("scene needs at least two bands");
    if (regions.size() < 2) throw ConfigError("scene needs at least two regions");
    if (layout == SceneLayout::Quadrants && regions.size() != 4) {
        throw ConfigError("quadrant layout needs exactly four regions");
    }
    for (const auto& r : regions) {
        if (r.base.size() != band_names.size()) throw ConfigError("texture needs one base value per band");
        if (r.noise < 0.0 || r.stripe_period < 0 || r.checker_period < 0) {
            throw ConfigError("texture parameters must be nonnegative");
        }
    }
}

SceneSpec default_scene(SceneLayout layout, std::size_t height, std::size_t width) {
    SceneSpec spec;
    spec.height = height;
    spec.width = width;
    spec.layout = layout;
    spec.band_names = {"R", "G", "IR"};
    spec.regions = {
        {{70.0, 150.0, 90.0}, 12.0, 0, 0.0, 0, 0.0},
        {{150.0, 90.0, 170.0}, 12.0, 3, 25.0, 0, 0.0},
        {{200.0, 190.0, 70.0}, 12.0, 0, 0.0, 2, 20.0},
        {{110.0, 120.0, 140.0}, 30.0, 0, 0.0, 0, 0.0},
    };
    return spec;
}

SceneData generate_scene(const SceneSpec& spec, std::uint64_t seed) {
    spec.validate();
    const auto regions = region_map(spec, seed);
    const std::size_t n = spec.height * spec.width;
    std::vector<Band> bands;
    for (std::size_t b = 0; b < spec.band_names.size(); ++b) {
        auto rng = seeded(seed, 0xba0d0000u + b);
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        std::vector<double> values(n);
        for (std::size_t r = 0; r < spec.height; ++r) {
            for (std::size_t c = 0; c < spec.width; ++c) {
                const std::size_t i = r * spec.width + c;
                const auto& t = spec.regions[static_cast<std::size_t>(regions[i] - 1)];
                const double noise = unit(rng) * t.noise;
                values[i] = std::clamp(std::round(texture_value(t, b, r, c) + noise), 0.0, 255.0);
            }
        }
        bands.emplace_back(spec.height, spec.width, std::move(values), spec.band_names[b]);
    }
    return {MultiBandImage(std::move(bands)),
            LabelMask(spec.height, spec.width, regions, spec.class_count())};
}

std::filesystem::path write_scene(const SceneData& scene, const SceneSpec& spec,
                                  const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ostringstream manifest;
    manifest << "# synthetic scene\n";
    for (std::size_t b = 0; b < scene.image.band_count(); ++b) {
        const auto file = spec.band_names[b] + ".pgm";
        save_band(scene.image.band(b), dir / file, RasterFormat::Pgm);
        manifest << "band." << spec.band_names[b] << " = " << file << '\n';
    }
    save_label_map(scene.truth.labels(), {scene.truth.height(), scene.truth.width()}, dir / "truth.pgm");
    manifest << "truth = truth.pgm\n";
    manifest << "classes = " << scene.truth.class_count() << '\n';
    const auto path = dir / "manifest.txt";
    write_text(path, manifest.str());
    return path;
}

// ---- Run configuration ---------------------------------------------------------------------

const char* method_name(Method method) {
    switch (method) {
        case Method::Rbf: return "rbf";
        case Method::Linear: return "linear";
        case Method::Polynomial: return "poly";
        case Method::KmeansFeatures: return "kmeans-features";
        case Method::KmeansEmbedding: return "kmeans-embedding";
    }
    return "?";
}

Method parse_method(const std::string& text) {
    if (text == "kmeans-features") return Method::KmeansFeatures;
    if (text == "kmeans-embedding") return Method::KmeansEmbedding;
    switch (parse_variant(text)) {
        case CcaVariant::Rbf: return Method::Rbf;
        case CcaVariant::Linear: return Method::Linear;
        case CcaVariant::Polynomial: return Method::Polynomial;
    }
    return Method::Rbf;
}

void RunConfig::validate() const {
    if (bands.empty()) throw ConfigError("no bands configured");
    if (truth.empty()) throw ConfigError("no truth mask configured");
    if (segment.class_count < 2 || segment.class_count > 255) throw ConfigError("classes must lie in 2..255");
    if (!(label_fraction > 0.0) || label_fraction > 1.0) throw ConfigError("label fraction must lie in (0, 1]");
    if (repeats < 1) throw ConfigError("repeats must be positive");
    if ((tile_height == 0) != (tile_width == 0)) throw ConfigError("tile height and width must both be set");
    std::set<std::string> names;
    for (const auto& b : bands) {
        if (!names.insert(b.name).second) throw ConfigError("duplicate band '" + b.name + "'");
    }
    if (ndvi) {
        if (!names.count(ndvi->first) || !names.count(ndvi->second)) {
            throw ConfigError("NDVI needs both the IR and the red band to be configured");
        }
        if (names.count("NDVI")) throw ConfigError("band name NDVI is reserved for the derived band");
    }
    segment.features.validate();
    if (segment.tsne.out_dim < 1 || segment.tsne.out_dim > 3) throw ConfigError("t-SNE dimension must be 1..3");
    if (segment.kmeans_restarts < 1) throw ConfigError("k-means restarts must be positive");
}

RunConfig parse_manifest_text(const std::string& text, const std::filesystem::path& base_dir) {
    RunConfig config;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    const auto& setters = manifest_setters();
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("manifest line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.rfind("band.", 0) == 0) {
            config.bands.push_back({key.substr(5), resolve(base_dir, value)});
        } else if (key == "truth") {
            config.truth = resolve(base_dir, value);
        } else if (key == "ndvi") {
            config.ndvi = split_pair(key, value, ',');
        } else if (auto it = setters.find(key); it != setters.end()) {
            it->second(config, key, value);
        } else {
            throw ConfigError("manifest line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
    }
    config.validate();
    return config;
}

RunConfig parse_manifest(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open manifest '" + path.string() + "'");
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_manifest_text(buf.str(), path.parent_path());
}

std::string manifest_text(const RunConfig& c) {
    std::ostringstream out;
    const auto& f = c.segment.features;
    const auto& t = c.segment.tsne;
    out << "# lcseg run manifest\n";
    for (const auto& b : c.bands) out << "band." << b.name << " = " << absolute_normal(b.path).string() << '\n';
    if (c.ndvi) out << "ndvi = " << c.ndvi->first << ',' << c.ndvi->second << '\n';
    out << "truth = " << absolute_normal(c.truth).string() << '\n';
    out << "classes = " << c.segment.class_count << '\n';
    out << "method = " << method_name(c.method) << '\n';
    out << "label_fraction = " << format_double(c.label_fraction) << '\n';
    out << "tile = " << c.tile_height << 'x' << c.tile_width << '\n';
    out << "repeats = " << c.repeats << '\n';
    out << "reuse_embedding = " << (c.reuse_embedding ? "true" : "false") << '\n';
    out << "sampler_seed = " << c.sampler_seed << '\n';
    out << "tsne_seed = " << t.seed << '\n';
    out << "kmeans_seed = " << c.segment.kmeans_seed << '\n';
    out << "kmeans_restarts = " << c.segment.kmeans_restarts << '\n';
    out << "cell_size = " << f.cell_size << '\n';
    out << "patch_size = " << f.patch_size << '\n';
    out << "glcm_levels = " << f.glcm_levels << '\n';
    out << "glcm_offset = " << f.glcm_offset.row << ',' << f.glcm_offset.col << '\n';
    out << "glcm_normalization = "
        << (f.glcm_normalization == GlcmNormalization::Paper ? "paper" : "probability") << '\n';
    out << "pca_dim = " << c.segment.pca_dim << '\n';
    out << "tsne_dim = " << t.out_dim << '\n';
    out << "perplexity = " << format_double(t.perplexity) << '\n';
    out << "perplexity_tolerance = " << format_double(t.perplexity_tolerance) << '\n';
    out << "tsne_iters = " << t.iterations << '\n';
    out << "learning_rate = " << format_double(t.learning_rate) << '\n';
    out << "initial_momentum = " << format_double(t.initial_momentum) << '\n';
    out << "final_momentum = " << format_double(t.final_momentum) << '\n';
    out << "momentum_switch = " << t.momentum_switch_iter << '\n';
    out << "early_exaggeration = " << format_double(t.early_exaggeration) << '\n';
    out << "exaggeration_iters = " << t.exaggeration_iters << '\n';
    out << "sigma_search_max_iters = " << t.sigma_search_max_iters << '\n';
    out << "kl_interval = " << t.kl_interval << '\n';
    out << "ridge = " << format_double(c.segment.ridge.value) << '\n';
    out << "ridge_mode = " << (c.segment.ridge.kind == Ridge::Kind::Relative ? "relative" : "absolute") << '\n';
    return out.str();
}

void write_manifest(const RunConfig& config, const std::filesystem::path& path) {
    write_text(path, manifest_text(config));
}

Inputs load_inputs(const RunConfig& config) {
    config.validate();
    std::vector<Band> bands;
    std::optional<Dimensions> dims;
    for (const auto& entry : config.bands) {
        bands.push_back(load_band(entry.path, RasterFormat::Auto, dims, entry.name));
        dims = Dimensions{bands.back().height(), bands.back().width()};
    }
    MultiBandImage image(std::move(bands));
    if (config.ndvi) {
        const auto find = [&](const std::string& name) -> const Band& {
            for (const auto& b : image.bands()) {
                if (b.name() == name) return b;
            }
            throw ConfigError("band '" + name + "' not found");
        };
        image = image.with_band(derive_ndvi(find(config.ndvi->first), find(config.ndvi->second)));
    }
    LabelMask truth = load_mask(config.truth, config.segment.class_count, dims);
    truth.require_all_classes();
    return {std::move(image), std::move(truth)};
}

// ---- Stage cache -----------------------------------------------------------------------

ContentHash& ContentHash::bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        state_ ^= p[i];
        state_ *= 1099511628211ull;
    }
    return *this;
}

ContentHash& ContentHash::text(const std::string& s) {
    value(s.size());
    return bytes(s.data(), s.size());
}

std::string ContentHash::hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
    return buf;
}

StageCache::StageCache(std::optional<std::filesystem::path> directory) : directory_(std::move(directory)) {
    if (directory_) std::filesystem::create_directories(*directory_);
}

const TileArtifacts& StageCache::artifacts(const MultiBandImage& image, const SegmentConfig& config) {
    const std::string key = artifact_key(image, config);
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    if (directory_) {
        const auto path = *directory_ / (key + ".lsc");
        if (auto loaded = load_artifacts(path)) {
            ++disk_hits_;
            return entries_.emplace(key, std::move(*loaded)).first->second;
        }
        auto stages = embed_image(image, config);
        ++computed_;
        save_artifacts(stages, path);
        return entries_.emplace(key, std::move(stages)).first->second;
    }
    auto stages = embed_image(image, config);
    ++computed_;
    return entries_.emplace(key, std::move(stages)).first->second;
}

// ---- Pipeline ----------------------------------------------------------------------------

PipelineResult run_pipeline(const RunConfig& config, const Inputs& inputs, StageCache& cache) {
    config.validate();
    const std::size_t h = inputs.image.height();
    const std::size_t w = inputs.image.width();
    const int k = config.segment.class_count;
    if (inputs.truth.class_count() != k) throw ConfigError("truth mask and configuration disagree on K");
    const TileLayout layout(h, w, config.tile_height == 0 ? h : config.tile_height,
                            config.tile_width == 0 ? w : config.tile_width);
    const auto tiles = split_tiles(inputs.image, inputs.truth, layout);

    PipelineResult out;
    out.height = h;
    out.width = w;
    for (int r = 0; r < config.repeats; ++r) {
        const auto ur = static_cast<std::uint64_t>(r);
        SegmentConfig seg = config.segment;
        seg.kmeans_seed += ur;
        if (!config.reuse_embedding) seg.tsne.seed += ur;

        RepeatResult rep;
        std::vector<TileLabels> parts;
        for (std::size_t t = 0; t < tiles.size(); ++t) {
            const auto& tile = tiles[t];
            try {
                const auto classes = present_classes(tile.mask.labels());
                std::vector<int> labels(tile.mask.size(), 0);
                if (classes.size() == 1) {
                    std::fill(labels.begin(), labels.end(), classes.front());
                    parts.push_back({tile.region, std::move(labels)});
                    rep.effective_rank.push_back(0);
                    continue;
                }
                const auto train_mask = run_stage("sampling", [&] {
                    return sample_labels(tile.mask, config.label_fraction,
                                         config.sampler_seed + ur + 0x9e3779b97f4a7c15ull * t);
                });
                // Tile-local class ids 1..kt keep the indicator free of empty classes.
                std::vector<int> to_local(static_cast<std::size_t>(k) + 1, 0);
                for (std::size_t i = 0; i < classes.size(); ++i) {
                    to_local[static_cast<std::size_t>(classes[i])] = static_cast<int>(i) + 1;
                }
                const int kt = static_cast<int>(classes.size());
                std::vector<int> train(train_mask.size());
                for (std::size_t i = 0; i < train.size(); ++i) {
                    train[i] = to_local[static_cast<std::size_t>(train_mask.labels()[i])];
                }
                const auto& stages = cache.artifacts(tile.image, seg);
                std::size_t rank = 0;
                const auto clusters = cluster_tile(stages, train, kt, config.method, seg, rank);
                const auto mapping = hungarian_map(clusters, train, kt);
                for (std::size_t i = 0; i < labels.size(); ++i) {
                    labels[i] = classes[static_cast<std::size_t>(mapping[static_cast<std::size_t>(clusters[i] - 1)] - 1)];
                }
                parts.push_back({tile.region, std::move(labels)});
                rep.effective_rank.push_back(rank);
            } catch (...) {
                rethrow_with_prefix("tile " + std::to_string(t) + " at (" + std::to_string(tile.region.row) + "," +
                                    std::to_string(tile.region.col) + "): ");
            }
        }
        const LabelMask merged = merge_tiles(parts, h, w, k);
        rep.labels.assign(merged.labels().begin(), merged.labels().end());
        rep.report = evaluate(rep.labels, inputs.truth);
        out.repeats.push_back(std::move(rep));
    }

    const double n = static_cast<double>(out.repeats.size());
    out.mean_class_iou.assign(static_cast<std::size_t>(k), 0.0);
    for (const auto& rep : out.repeats) {
        out.mean_accuracy += rep.report.accuracy / n;
        for (int c = 0; c < k; ++c) {
            out.mean_class_iou[static_cast<std::size_t>(c)] += rep.report.per_class_iou[static_cast<std::size_t>(c)] / n;
        }
    }
    if (out.repeats.size() > 1) {
        double ss = 0.0;
        for (const auto& rep : out.repeats) ss += std::pow(rep.report.accuracy - out.mean_accuracy, 2);
        out.std_accuracy = std::sqrt(ss / (n - 1.0));
    }
    for (double v : out.mean_class_iou) out.mean_iou += v / static_cast<double>(k);
    return out;
}

PipelineResult run_pipeline(const RunConfig& config, StageCache& cache) {
    const Inputs inputs = load_inputs(config);
    return run_pipeline(config, inputs, cache);
}

std::string pipeline_report_text(const RunConfig& config, const PipelineResult& result) {
    std::ostringstream out;
    out << "method: " << method_name(config.method) << '\n';
    out << "image: " << result.height << 'x' << result.width << '\n';
    out << "repeats: " << result.repeats.size() << '\n';
    out << "accuracy_mean: " << fixed(result.mean_accuracy) << '\n';
    out << "accuracy_std: " << fixed(result.std_accuracy) << '\n';
    out << "mean_iou: " << fixed(result.mean_iou) << '\n';
    for (std::size_t c = 0; c < result.mean_class_iou.size(); ++c) {
        out << "class_iou_mean " << c + 1 << ": " << fixed(result.mean_class_iou[c]) << '\n';
    }
    for (std::size_t r = 0; r < result.repeats.size(); ++r) {
        const auto& rep = result.repeats[r];
        out << "\n[repeat " << r << "]\n";
        out << "cca_effective_rank:";
        for (auto d : rep.effective_rank) out << ' ' << d;
        out << '\n' << summary_text(rep.report);
    }
    return out.str();
}

void write_pipeline_outputs(const RunConfig& config, const PipelineResult& result,
                            const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const Dimensions dims{result.height, result.width};
    for (std::size_t r = 0; r < result.repeats.size(); ++r) {
        char name[48];
        if (r == 0) {
            std::snprintf(name, sizeof name, "labels.pgm");
        } else {
            std::snprintf(name, sizeof name, "labels_r%02zu.pgm", r);
        }
        save_label_map(result.repeats[r].labels, dims, dir / name);
    }
    write_text(dir / "report.txt", pipeline_report_text(config, result));
    if (!result.repeats.empty()) {
        write_class_csv(result.repeats.front().report, dir / "classes.csv");
        write_confusion_csv(result.repeats.front().report, dir / "confusion.csv");
    }
    write_manifest(config, dir / "run_manifest.txt");
}

std::vector<BenchRow> run_bench(const RunConfig& config, const std::vector<Method>& methods, StageCache& cache) {
    const Inputs inputs = load_inputs(config);
    std::vector<BenchRow> rows;
    for (Method m : methods) {
        RunConfig c = config;
        c.method = m;
        rows.push_back({m, run_pipeline(c, inputs, cache)});
    }
    return rows;
}

std::string bench_table_csv(const std::vector<BenchRow>& rows) {
    std::ostringstream out;
    out << "method,mean_accuracy,std_accuracy,mean_iou\n";
    for (const auto& r : rows) {
        out << method_name(r.method) << ',' << fixed(r.result.mean_accuracy) << ',' << fixed(r.result.std_accuracy)
            << ',' << fixed(r.result.mean_iou) << '\n';
    }
    return out.str();
}

}  // namespace lcseg
