#include "lcseg/clustering.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "lcseg/error.hpp"

namespace lcseg {
namespace {

struct Assignment {
    std::vector<int> labels;  // 0-based while iterating
    std::vector<double> dist;
    double inertia = 0.0;
};

void assign(const Matrix& z, const Matrix& centroids, Assignment& out) {
    const Eigen::Index n = z.rows();
    const Eigen::Index k = centroids.rows();
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (Eigen::Index c = 0; c < k; ++c) {
            const double d = (z.row(i) - centroids.row(c)).squaredNorm();
            if (d < best) {
                best = d;
                arg = static_cast<int>(c);
            }
        }
        out.labels[static_cast<std::size_t>(i)] = arg;
        out.dist[static_cast<std::size_t>(i)] = best;
    }
    out.inertia = std::accumulate(out.dist.begin(), out.dist.end(), 0.0);
}

Matrix plus_plus_seeds(const Matrix& z, int k, std::mt19937_64& rng) {
    const Eigen::Index n = z.rows();
    Matrix centroids(k, z.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    centroids.row(0) = z.row(pick(rng));
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = (z.row(i) - centroids.row(0)).squaredNorm();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int c = 1; c < k; ++c) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        Eigen::Index chosen = 0;
        if (total > 0.0) {
            const double target = unit(rng) * total;
            double running = 0.0;
            chosen = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                running += d2[static_cast<std::size_t>(i)];
                if (running > target && d2[static_cast<std::size_t>(i)] > 0.0) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = pick(rng);
        }
        centroids.row(c) = z.row(chosen);
        for (Eigen::Index i = 0; i < n; ++i) {
            auto& d = d2[static_cast<std::size_t>(i)];
            d = std::min(d, (z.row(i) - centroids.row(c)).squaredNorm());
        }
    }
    return centroids;
}

/// Moves the point farthest from its centroid into each empty cluster. Returns
/// false when no donor with more than one member exists.
bool fill_empty_clusters(Assignment& a, int k) {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
    for (int l : a.labels) ++sizes[static_cast<std::size_t>(l)];
    for (int c = 0; c < k; ++c) {
        if (sizes[static_cast<std::size_t>(c)] != 0) continue;
        std::size_t far = a.labels.size();
        double far_d = -1.0;
        for (std::size_t i = 0; i < a.labels.size(); ++i) {
            if (sizes[static_cast<std::size_t>(a.labels[i])] > 1 && a.dist[i] > far_d) {
                far_d = a.dist[i];
                far = i;
            }
        }
        if (far == a.labels.size()) return false;
        --sizes[static_cast<std::size_t>(a.labels[far])];
        a.labels[far] = c;
        a.dist[far] = 0.0;
        ++sizes[static_cast<std::size_t>(c)];
    }
    return true;
}

Matrix centroid_means(const Matrix& z, const std::vector<int>& labels, int k) {
    Matrix sums = Matrix::Zero(k, z.cols());
    std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        sums.row(labels[i]) += z.row(static_cast<Eigen::Index>(i));
        counts[static_cast<std::size_t>(labels[i])] += 1.0;
    }
    for (int c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0.0) sums.row(c) /= counts[static_cast<std::size_t>(c)];
    }
    return sums;
}

std::optional<ClusterAssignment> lloyd(const Matrix& z, const KmeansConfig& cfg, std::mt19937_64& rng) {
    const int k = cfg.clusters;
    Matrix centroids = plus_plus_seeds(z, k, rng);
    Assignment a{std::vector<int>(static_cast<std::size_t>(z.rows())),
                 std::vector<double>(static_cast<std::size_t>(z.rows())), 0.0};
    ClusterAssignment out;
    int it = 0;
    while (it < cfg.max_iters) {
        ++it;
        assign(z, centroids, a);
        out.inertia_history.push_back(a.inertia);
        if (!fill_empty_clusters(a, k)) return std::nullopt;
        const Matrix next = centroid_means(z, a.labels, k);
        const double shift = (next - centroids).rowwise().norm().maxCoeff();
        centroids = next;
        if (shift <= cfg.tol) break;
    }
    assign(z, centroids, a);
    std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
    for (int l : a.labels) ++sizes[static_cast<std::size_t>(l)];
    if (std::find(sizes.begin(), sizes.end(), 0u) != sizes.end()) return std::nullopt;

    out.labels.resize(a.labels.size());
    std::transform(a.labels.begin(), a.labels.end(), out.labels.begin(), [](int l) { return l + 1; });
    out.centroids = std::move(centroids);
    out.inertia = a.inertia;
    out.iterations_used = it;
    return out;
}

}  // namespace

NormalizedVariables row_normalize(const Matrix& u) {
    NormalizedVariables out{u, {}};
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
        const double norm = u.row(i).norm();
        if (norm == 0.0) {
            out.zero_row_indices.push_back(static_cast<std::size_t>(i));
        } else {
            out.z.row(i) /= norm;
        }
    }
    return out;
}

ClusterAssignment kmeans(const Matrix& z, const KmeansConfig& config) {
    if (config.clusters < 1) throw ConfigError("k-means needs at least one cluster");
    if (config.clusters > z.rows()) throw ConfigError("k-means: more clusters than points");
    if (config.restarts < 1 || config.max_iters < 1) throw ConfigError("k-means restarts and iterations must be positive");
    if (!z.allFinite()) throw NumericError("k-means input is not finite");

    std::optional<ClusterAssignment> best;
    for (int r = 0; r < config.restarts; ++r) {
        std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                          static_cast<std::uint32_t>(r)};
        std::mt19937_64 rng(seq);
        auto run = lloyd(z, config, rng);
        if (!run) continue;
        run->restart = r;
        if (!best || run->inertia < best->inertia) best = std::move(run);
    }
    if (!best) throw NumericError("k-means: every restart ended with an empty cluster");
    return std::move(*best);
}

void rethrow_with_prefix(const std::string& prefix) {
    try {
        throw;
    } catch (const Error& e) {
        const std::string what = prefix + e.what();
        switch (e.category()) {
            case Error::Category::Config: throw ConfigError(what);
            case Error::Category::Data: throw DataError(what);
            case Error::Category::Numeric: throw NumericError(what);
        }
        throw;
    }
}

EmbeddingStages embed_image(const MultiBandImage& image, const SegmentConfig& config) {
    EmbeddingStages out;
    out.reduced = run_stage("features", [&] { return assemble_features(image, config.features); });
    if (config.pca_dim > 0) {
        const auto dim = std::min({config.pca_dim, static_cast<std::size_t>(out.reduced.rows()),
                                   static_cast<std::size_t>(out.reduced.cols())});
        out.reduced = run_stage("pca", [&] { return pca_reduce(out.reduced, dim).scores; });
    }
    out.embedding = run_stage("tsne", [&] { return tsne(out.reduced, config.tsne); });
    return out;
}

SegmentResult segment_embedding(const Matrix& embedding, const std::vector<int>& labels,
                                const SegmentConfig& config) {
    if (config.class_count < 2) throw ConfigError("segmentation needs at least two classes");
    SegmentResult out;
    auto canonical = run_stage("cca", [&] {
        return canonical_variables(embedding, labels, config.class_count, config.variant, config.ridge);
    });
    out.u_full = std::move(canonical.u_full);
    out.model = std::move(canonical.model);
    out.rbf_sigma = canonical.rbf_sigma;
    out.normalized = row_normalize(out.u_full);
    KmeansConfig km;
    km.clusters = config.class_count;
    km.seed = config.kmeans_seed;
    km.restarts = config.kmeans_restarts;
    out.clusters = run_stage("kmeans", [&] { return kmeans(out.normalized.z, km); });
    return out;
}

SegmentOutput segment(const MultiBandImage& image, const LabelMask& mask, const SegmentConfig& config) {
    if (config.class_count < 2) throw ConfigError("segmentation needs at least two classes");
    if (mask.class_count() != config.class_count) throw ConfigError("mask and configuration disagree on K");
    if (mask.height() != image.height() || mask.width() != image.width()) {
        throw DataError("mask and image dimensions differ");
    }
    run_stage("labels", [&] { mask.require_all_classes(); });
    SegmentOutput out;
    out.stages = embed_image(image, config);
    const std::vector<int> labels(mask.labels().begin(), mask.labels().end());
    out.result = segment_embedding(out.stages.embedding.coords, labels, config);
    return out;
}

}  // namespace lcseg
