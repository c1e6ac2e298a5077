#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lcseg/cca.hpp"
#include "lcseg/embedding.hpp"
#include "lcseg/features.hpp"

namespace lcseg {

struct NormalizedVariables {
    Matrix z;                                 ///< rows scaled to unit norm
    std::vector<std::size_t> zero_row_indices;  ///< rows left at zero
};

NormalizedVariables row_normalize(const Matrix& u);

struct KmeansConfig {
    int clusters = 2;
    std::uint64_t seed = 1;
    int max_iters = 300;
    /// Lloyd stops once no centroid moves by more than this (Euclidean).
    double tol = 1e-6;
    int restarts = 10;
};

struct ClusterAssignment {
    std::vector<int> labels;  ///< 1..K per row
    Matrix centroids;         ///< K x dim
    double inertia = 0.0;
    int iterations_used = 0;
    int restart = 0;                     ///< index of the winning restart
    std::vector<double> inertia_history;  ///< after each Lloyd assignment step
};

/// Lloyd iterations from k-means++ seeding, best inertia over restarts.
/// Ties between centroids go to the lowest index.
ClusterAssignment kmeans(const Matrix& z, const KmeansConfig& config);

/// Everything Algorithm-level segmentation needs besides the image and mask.
struct SegmentConfig {
    FeatureConfig features;
    std::size_t pca_dim = 50;  ///< 0 skips PCA; clamped to the feature count
    TsneConfig tsne;
    CcaVariant variant = CcaVariant::Rbf;
    Ridge ridge;
    int class_count = 2;
    std::uint64_t kmeans_seed = 1;
    int kmeans_restarts = 10;
};

struct EmbeddingStages {
    Matrix reduced;  ///< features after the optional PCA step
    Embedding embedding;
};

/// Feature matrix followed by the optional PCA step and t-SNE.
EmbeddingStages embed_image(const MultiBandImage& image, const SegmentConfig& config);

struct SegmentResult {
    ClusterAssignment clusters;
    Matrix u_full;
    NormalizedVariables normalized;
    CcaModel model;
    double rbf_sigma = 0.0;
};

/// CCA, row normalisation and k-means over an existing embedding.
/// `labels` has one entry per pixel (0 = unlabeled).
SegmentResult segment_embedding(const Matrix& embedding, const std::vector<int>& labels,
                                const SegmentConfig& config);

struct SegmentOutput {
    EmbeddingStages stages;
    SegmentResult result;
};

/// Features, embedding, CCA and clustering of one image. Errors carry the
/// failing stage in their message.
SegmentOutput segment(const MultiBandImage& image, const LabelMask& mask,
                      const SegmentConfig& config);

/// Rethrows the active exception; library errors keep their category and gain
/// `prefix` in front of the message.
[[noreturn]] void rethrow_with_prefix(const std::string& prefix);

/// Runs `body`, prefixing any library error with "stage <name>: ".
template <typename F>
auto run_stage(const std::string& name, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (...) {
        rethrow_with_prefix("stage " + name + ": ");
    }
}

}  // namespace lcseg
