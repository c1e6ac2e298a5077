#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "lcseg/features.hpp"

namespace lcseg {

// ---- PCA ------------------------------------------------------------------

struct PcaResult {
    Matrix scores;             ///< N x k projections of the centred data
    Eigen::MatrixXd components;  ///< n x k orthonormal principal directions
    Eigen::VectorXd eigenvalues;  ///< k covariance eigenvalues, descending
    Eigen::RowVectorXd mean;      ///< column means removed before projection

    /// Maps scores back to the input space.
    Matrix reconstruct() const;
};

/// Projects the centred rows onto the top `target_dim` principal directions.
/// Each direction's largest-magnitude loading is made positive.
PcaResult pca_reduce(const Matrix& data, std::size_t target_dim);

// ---- Similarities -----------------------------------------------------------

struct SigmaCalibration {
    std::vector<double> sigmas;
    /// Rows whose bisection hit the iteration limit; their best bracket
    /// midpoint is kept.
    std::vector<std::size_t> unconverged;
};

/// Per-point Gaussian bandwidths so that 2^H(P_i) matches the perplexity,
/// H in bits; `tolerance` bounds |H - log2(perplexity)|.
SigmaCalibration calibrate_sigmas(const Matrix& data, double perplexity, double tolerance = 1e-5,
                                  int max_iters = 50);

/// Symmetric joint probabilities p_ij = (p_j|i + p_i|j) / 2N with p_ii = 0.
///
/// Every off-diagonal entry is floored at `floor` and the whole matrix is then
/// rescaled to unit mass. Entries that end up at the floor value are not stored:
/// the matrix keeps a sparse list per row of the entries above it.
class SimilarityModel {
public:
    struct Entry {
        std::uint32_t col;
        double value;
    };

    SimilarityModel(std::size_t n, std::vector<std::vector<Entry>> rows, double floor_value,
                    std::vector<double> sigmas);

    std::size_t size() const noexcept { return n_; }
    /// Value of every off-diagonal entry that is not stored explicitly.
    double floor_value() const noexcept { return floor_; }
    const std::vector<Entry>& row(std::size_t i) const { return rows_[i]; }
    const std::vector<double>& sigmas() const noexcept { return sigmas_; }
    double at(std::size_t i, std::size_t j) const;
    std::size_t stored_entries() const;
    /// Dense N x N copy, for small problems and tests.
    Eigen::MatrixXd dense() const;

private:
    std::size_t n_;
    std::vector<std::vector<Entry>> rows_;  // sorted by column
    double floor_;
    std::vector<double> sigmas_;
};

inline constexpr double kProbabilityFloor = 1e-12;

SimilarityModel joint_probabilities(const Matrix& data, const std::vector<double>& sigmas,
                                    double floor_value = kProbabilityFloor);

// ---- t-SNE ------------------------------------------------------------------

struct TsneConfig {
    std::size_t out_dim = 3;
    double perplexity = 30.0;
    int iterations = 1000;
    double learning_rate = 200.0;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    int momentum_switch_iter = 250;
    double early_exaggeration = 12.0;
    int exaggeration_iters = 250;
    std::uint64_t seed = 1;
    double perplexity_tolerance = 1e-5;
    int sigma_search_max_iters = 50;
    /// KL is evaluated every this many iterations (and at the last one); each
    /// evaluation costs one logarithm per point pair.
    int kl_interval = 50;

    void validate(std::size_t n) const;
};

struct KlSample {
    int iteration;  ///< 1-based iteration after whose update KL was measured
    double value;
};

struct Embedding {
    Matrix coords;  ///< N x m
    std::vector<KlSample> kl_trajectory;
    std::vector<std::size_t> unconverged_sigmas;
};

/// KL(P || Q) of a map; q_ij = (1 + |y_i - y_j|^2)^-1 / Z.
double kl_divergence(const SimilarityModel& p, const Matrix& y);

/// dKL/dy_i = 4 sum_j (p_ij - q_ij)(y_i - y_j)(1 + |y_i - y_j|^2)^-1.
Matrix kl_gradient(const SimilarityModel& p, const Matrix& y);

/// Student-t joint similarities Q of a map (dense, small problems).
Eigen::MatrixXd map_similarities(const Matrix& y);

/// Exact (all pairs) t-SNE; deterministic for a given seed.
Embedding tsne(const Matrix& data, const TsneConfig& config = {});

/// Gradient descent from given joint probabilities and initial coordinates.
Embedding tsne_optimize(const SimilarityModel& p, Matrix initial, const TsneConfig& config);

/// "LSE1" header, u32 N, u32 m, then N*m little-endian float32 row-major.
void save_embedding(const Matrix& coords, const std::filesystem::path& path);
Matrix load_embedding(const std::filesystem::path& path);

}  // namespace lcseg
