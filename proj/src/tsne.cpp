#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "binary_matrix.hpp"
#include "lcseg/embedding.hpp"
#include "lcseg/error.hpp"

namespace lcseg {
namespace {

constexpr std::array<char, 4> kEmbeddingMagic{'L', 'S', 'E', '1'};

// exp(-60) is below double resolution relative to the nearest neighbour's
// weight exp(0), so farther points are skipped in the perplexity search.
constexpr double kExpCutoff = 60.0;

// Conditional probabilities below this fraction of the floor (per 2N) are not
// kept; they change the affected joint entries by less than 1e-3 of the floor.
constexpr double kKeepFraction = 1e-3;

constexpr Eigen::Index kDistanceBlock = 256;

/// Squared Euclidean distances for a block of rows against every row.
class DistanceRows {
public:
    explicit DistanceRows(const Matrix& data) : data_(data), norms_(data.rowwise().squaredNorm()) {}

    /// Fills `block` with distances of rows [first, first + count).
    void compute(Eigen::Index first, Eigen::Index count, Eigen::MatrixXd& block) const {
        block.noalias() = -2.0 * data_.middleRows(first, count) * data_.transpose();
        for (Eigen::Index r = 0; r < count; ++r) {
            block.row(r).array() += norms_(first + r);
            block.row(r).array() += norms_.transpose().array();
            block(r, first + r) = 0.0;
        }
        block = block.cwiseMax(0.0);
    }

private:
    const Matrix& data_;
    Eigen::VectorXd norms_;
};

struct RowEntropy {
    double entropy;  // nats
    double sum;
};

RowEntropy row_entropy(const double* dist, Eigen::Index n, Eigen::Index self, double d_min,
                       double beta) {
    double sum = 0.0;
    double weighted = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (j == self) continue;
        const double x = beta * (dist[j] - d_min);
        if (x > kExpCutoff) continue;
        const double e = std::exp(-x);
        sum += e;
        weighted += x * e;
    }
    return {std::log(sum) + weighted / sum, sum};
}

struct BetaSearch {
    double beta;
    bool converged;
};

BetaSearch search_beta(const double* dist, Eigen::Index n, Eigen::Index self, double target_nats,
                       double tol_nats, int max_iters) {
    double d_min = std::numeric_limits<double>::infinity();
    double d_mean = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (j == self) continue;
        d_min = std::min(d_min, dist[j]);
        d_mean += dist[j];
    }
    d_mean /= static_cast<double>(n - 1);
    const double spread = d_mean - d_min;
    double beta = spread > 0.0 ? 1.0 / spread : 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iters; ++it) {
        const double h = row_entropy(dist, n, self, d_min, beta).entropy;
        if (std::abs(h - target_nats) < tol_nats) return {beta, true};
        if (h > target_nats) {
            lo = beta;
            beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (lo + hi);
        } else {
            hi = beta;
            beta = lo == 0.0 ? beta * 0.5 : 0.5 * (lo + hi);
        }
    }
    return {beta, false};
}

double beta_from_sigma(double sigma) { return 1.0 / (2.0 * sigma * sigma); }

void check_finite(const Matrix& y, int iteration) {
    if (!y.allFinite()) {
        throw NumericError("t-SNE diverged: non-finite coordinates at iteration " +
                           std::to_string(iteration));
    }
}

/// Map coordinates as three contiguous columns; unused dimensions are zero so
/// distances are unaffected.
struct MapColumns {
    std::array<std::vector<double>, 3> c;

    explicit MapColumns(const Matrix& y) {
        if (y.cols() < 1 || y.cols() > 3) throw ConfigError("t-SNE map dimension must be 1, 2 or 3");
        for (Eigen::Index a = 0; a < 3; ++a) {
            c[static_cast<std::size_t>(a)].assign(static_cast<std::size_t>(y.rows()), 0.0);
            if (a >= y.cols()) continue;
            for (Eigen::Index j = 0; j < y.rows(); ++j) c[static_cast<std::size_t>(a)][static_cast<std::size_t>(j)] = y(j, a);
        }
    }
};

/// Gradient of KL(exaggeration * P || Q).
///
/// Every unstored entry of P equals the floor, so the attractive term splits
/// into floor * sum_j w_ij (y_i - y_j) over all pairs plus a correction over
/// the stored entries.
Matrix gradient(const SimilarityModel& p, const Matrix& y, double exaggeration) {
    const Eigen::Index n = y.rows();
    const MapColumns cols(y);
    const double* c0 = cols.c[0].data();
    const double* c1 = cols.c[1].data();
    const double* c2 = cols.c[2].data();
    const double floor_p = exaggeration * p.floor_value();

    Matrix attract(n, 3);
    Matrix repulse(n, 3);
    std::vector<double> z_row(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
        const double y0 = c0[i], y1 = c1[i], y2 = c2[i];
        double z = 0.0, a0 = 0.0, a1 = 0.0, a2 = 0.0, r0 = 0.0, r1 = 0.0, r2 = 0.0;
#pragma omp simd reduction(+ : z, a0, a1, a2, r0, r1, r2)
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d0 = y0 - c0[j];
            const double d1 = y1 - c1[j];
            const double d2 = y2 - c2[j];
            const double w = 1.0 / (1.0 + d0 * d0 + d1 * d1 + d2 * d2);
            const double w2 = w * w;
            z += w;
            a0 += w * d0;
            a1 += w * d1;
            a2 += w * d2;
            r0 += w2 * d0;
            r1 += w2 * d1;
            r2 += w2 * d2;
        }
        const auto& row = p.row(static_cast<std::size_t>(i));
        double s0 = 0.0, s1 = 0.0, s2 = 0.0;
        const std::size_t count = row.size();
        const SimilarityModel::Entry* e = row.data();
#pragma omp simd reduction(+ : s0, s1, s2)
        for (std::size_t k = 0; k < count; ++k) {
            const std::uint32_t j = e[k].col;
            const double d0 = y0 - c0[j];
            const double d1 = y1 - c1[j];
            const double d2 = y2 - c2[j];
            const double coef = (exaggeration * e[k].value - floor_p) / (1.0 + d0 * d0 + d1 * d1 + d2 * d2);
            s0 += coef * d0;
            s1 += coef * d1;
            s2 += coef * d2;
        }
        attract(i, 0) = floor_p * a0 + s0;
        attract(i, 1) = floor_p * a1 + s1;
        attract(i, 2) = floor_p * a2 + s2;
        repulse(i, 0) = r0;
        repulse(i, 1) = r1;
        repulse(i, 2) = r2;
        z_row[static_cast<std::size_t>(i)] = z - 1.0;  // drop the j == i term
    }
    const double z = std::accumulate(z_row.begin(), z_row.end(), 0.0);
    return (4.0 * (attract - repulse / z)).leftCols(y.cols());
}

// Products of this many (1 + d) factors stay far below the double range for
// any map that has not already diverged.
constexpr Eigen::Index kLogBlock = 16;

}  // namespace

// ---- SimilarityModel ---------------------------------------------------------

SimilarityModel::SimilarityModel(std::size_t n, std::vector<std::vector<Entry>> rows,
                                 double floor_value, std::vector<double> sigmas)
    : n_(n), rows_(std::move(rows)), floor_(floor_value), sigmas_(std::move(sigmas)) {
    if (rows_.size() != n_) throw DataError("similarity rows do not match point count");
}

double SimilarityModel::at(std::size_t i, std::size_t j) const {
    if (i == j) return 0.0;
    const auto& r = rows_[i];
    auto it = std::lower_bound(r.begin(), r.end(), j,
                               [](const Entry& e, std::size_t c) { return e.col < c; });
    return it != r.end() && it->col == j ? it->value : floor_;
}

std::size_t SimilarityModel::stored_entries() const {
    std::size_t total = 0;
    for (const auto& r : rows_) total += r.size();
    return total;
}

Eigen::MatrixXd SimilarityModel::dense() const {
    const auto n = static_cast<Eigen::Index>(n_);
    Eigen::MatrixXd out = Eigen::MatrixXd::Constant(n, n, floor_);
    out.diagonal().setZero();
    for (std::size_t i = 0; i < n_; ++i) {
        for (const auto& e : rows_[i]) out(static_cast<Eigen::Index>(i), e.col) = e.value;
    }
    return out;
}

// ---- Calibration --------------------------------------------------------------

SigmaCalibration calibrate_sigmas(const Matrix& data, double perplexity, double tolerance,
                                  int max_iters) {
    const Eigen::Index n = data.rows();
    if (n < 3) throw ConfigError("perplexity calibration needs at least 3 points");
    if (!(perplexity > 0.0) || perplexity >= static_cast<double>(n)) {
        throw ConfigError("perplexity must lie in (0, N)");
    }
    const double target = std::log(perplexity);
    const double tol = tolerance * std::log(2.0);
    SigmaCalibration out;
    out.sigmas.resize(static_cast<std::size_t>(n));
    const DistanceRows distances(data);
    Eigen::MatrixXd block;
    for (Eigen::Index first = 0; first < n; first += kDistanceBlock) {
        const Eigen::Index count = std::min(kDistanceBlock, n - first);
        block.resize(count, n);
        distances.compute(first, count, block);
        const Matrix rows = block;  // row-major for contiguous access
        for (Eigen::Index r = 0; r < count; ++r) {
            const auto i = first + r;
            const auto found = search_beta(rows.row(r).data(), n, i, target, tol, max_iters);
            out.sigmas[static_cast<std::size_t>(i)] = std::sqrt(1.0 / (2.0 * found.beta));
            if (!found.converged) out.unconverged.push_back(static_cast<std::size_t>(i));
        }
    }
    return out;
}

SimilarityModel joint_probabilities(const Matrix& data, const std::vector<double>& sigmas,
                                    double floor_value) {
    const Eigen::Index n = data.rows();
    if (static_cast<std::size_t>(n) != sigmas.size()) {
        throw ConfigError("one sigma per point required");
    }
    if (std::any_of(sigmas.begin(), sigmas.end(), [](double s) { return !(s > 0.0); })) {
        throw ConfigError("sigmas must be positive");
    }
    const double two_n = 2.0 * static_cast<double>(n);
    const double keep = two_n * floor_value * kKeepFraction;

    // Conditional entries, scattered to both (i, j) and (j, i).
    std::vector<std::vector<SimilarityModel::Entry>> acc(static_cast<std::size_t>(n));
    const DistanceRows distances(data);
    Eigen::MatrixXd block;
    for (Eigen::Index first = 0; first < n; first += kDistanceBlock) {
        const Eigen::Index count = std::min(kDistanceBlock, n - first);
        block.resize(count, n);
        distances.compute(first, count, block);
        const Matrix rows = block;
        for (Eigen::Index r = 0; r < count; ++r) {
            const Eigen::Index i = first + r;
            const double* dist = rows.row(r).data();
            const double beta = beta_from_sigma(sigmas[static_cast<std::size_t>(i)]);
            double d_min = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j != i) d_min = std::min(d_min, dist[j]);
            }
            const double sum = row_entropy(dist, n, i, d_min, beta).sum;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) continue;
                const double x = beta * (dist[j] - d_min);
                if (x > kExpCutoff) continue;
                const double c = std::exp(-x) / sum;
                if (c < keep) continue;
                acc[static_cast<std::size_t>(i)].push_back({static_cast<std::uint32_t>(j), c});
                acc[static_cast<std::size_t>(j)].push_back({static_cast<std::uint32_t>(i), c});
            }
        }
    }

    std::vector<std::vector<SimilarityModel::Entry>> rows(static_cast<std::size_t>(n));
    double stored_mass = 0.0;
    std::size_t stored = 0;
    for (std::size_t i = 0; i < acc.size(); ++i) {
        auto& a = acc[i];
        std::stable_sort(a.begin(), a.end(),
                         [](const auto& l, const auto& r) { return l.col < r.col; });
        for (std::size_t k = 0; k < a.size();) {
            double c = 0.0;
            const auto col = a[k].col;
            for (; k < a.size() && a[k].col == col; ++k) c += a[k].value;
            const double p = c / two_n;
            if (p > floor_value) {
                rows[i].push_back({col, p});
                stored_mass += p;
                ++stored;
            }
        }
        a.clear();
        a.shrink_to_fit();
    }
    const double pairs = static_cast<double>(n) * static_cast<double>(n - 1);
    const double total = stored_mass + floor_value * (pairs - static_cast<double>(stored));
    for (auto& r : rows) {
        for (auto& e : r) e.value /= total;
    }
    return SimilarityModel(static_cast<std::size_t>(n), std::move(rows), floor_value / total,
                           sigmas);
}

// ---- Objective ------------------------------------------------------------------

double kl_divergence(const SimilarityModel& p, const Matrix& y) {
    const Eigen::Index n = y.rows();
    if (static_cast<std::size_t>(n) != p.size()) throw ConfigError("map size differs from P");
    const double floor_p = p.floor_value();
    const MapColumns cols(y);
    const double* c0 = cols.c[0].data();
    const double* c1 = cols.c[1].data();
    const double* c2 = cols.c[2].data();

    // KL = sum p log p + sum p log(1 + d) + log Z  (sum p = 1), with the
    // middle sum split into floor * all pairs plus the stored corrections.
    std::vector<double> log_terms(static_cast<std::size_t>(n));
    std::vector<double> z_terms(static_cast<std::size_t>(n));
#pragma omp parallel
    {
        std::vector<double> one_plus_d(static_cast<std::size_t>(n));
#pragma omp for schedule(static)
        for (Eigen::Index i = 0; i < n; ++i) {
            const double y0 = c0[i], y1 = c1[i], y2 = c2[i];
            double* t = one_plus_d.data();
            double z = 0.0;
#pragma omp simd reduction(+ : z)
            for (Eigen::Index j = 0; j < n; ++j) {
                const double d0 = y0 - c0[j];
                const double d1 = y1 - c1[j];
                const double d2 = y2 - c2[j];
                t[j] = 1.0 + d0 * d0 + d1 * d1 + d2 * d2;
                z += 1.0 / t[j];
            }
            double all_log = 0.0;  // the j == i factor is exactly 1
            for (Eigen::Index j0 = 0; j0 < n; j0 += kLogBlock) {
                const Eigen::Index end = std::min(n, j0 + kLogBlock);
                double prod = 1.0;
                for (Eigen::Index j = j0; j < end; ++j) prod *= t[j];
                all_log += std::log(prod);
            }
            double stored = 0.0;
            for (const auto& e : p.row(static_cast<std::size_t>(i))) {
                stored += (e.value - floor_p) * std::log(t[e.col]) + e.value * std::log(e.value);
            }
            const double floor_count =
                static_cast<double>(n - 1) - static_cast<double>(p.row(static_cast<std::size_t>(i)).size());
            log_terms[static_cast<std::size_t>(i)] =
                floor_p * all_log + stored + floor_count * floor_p * std::log(floor_p);
            z_terms[static_cast<std::size_t>(i)] = z - 1.0;
        }
    }
    const double z = std::accumulate(z_terms.begin(), z_terms.end(), 0.0);
    return std::accumulate(log_terms.begin(), log_terms.end(), 0.0) + std::log(z);
}

Matrix kl_gradient(const SimilarityModel& p, const Matrix& y) {
    if (static_cast<std::size_t>(y.rows()) != p.size()) throw ConfigError("map size differs from P");
    return gradient(p, y, 1.0);
}

Eigen::MatrixXd map_similarities(const Matrix& y) {
    const Eigen::Index n = y.rows();
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i != j) q(i, j) = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
        }
    }
    return q / q.sum();
}

// ---- Optimisation -----------------------------------------------------------------

void TsneConfig::validate(std::size_t n) const {
    if (out_dim < 1 || out_dim > 3) throw ConfigError("t-SNE output dimension must be 1, 2 or 3");
    if (n < 4) throw ConfigError("t-SNE needs at least 4 points");
    if (!(perplexity > 0.0) || perplexity >= static_cast<double>(n)) {
        throw ConfigError("perplexity must lie in (0, N)");
    }
    if (iterations < 1) throw ConfigError("t-SNE needs at least one iteration");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (kl_interval < 1) throw ConfigError("KL interval must be positive");
}

Embedding tsne_optimize(const SimilarityModel& p, Matrix y, const TsneConfig& config) {
    config.validate(p.size());
    if (static_cast<std::size_t>(y.rows()) != p.size() ||
        static_cast<std::size_t>(y.cols()) != config.out_dim) {
        throw ConfigError("initial map has the wrong shape");
    }
    Embedding out;
    Matrix velocity = Matrix::Zero(y.rows(), y.cols());
    Matrix gains = Matrix::Ones(y.rows(), y.cols());
    for (int iter = 1; iter <= config.iterations; ++iter) {
        const bool exaggerate = iter <= config.exaggeration_iters;
        const double momentum =
            iter <= config.momentum_switch_iter ? config.initial_momentum : config.final_momentum;
        const Matrix grad = gradient(p, y, exaggerate ? config.early_exaggeration : 1.0);
        for (Eigen::Index k = 0; k < y.size(); ++k) {
            double& g = gains.data()[k];
            const bool same_sign = (grad.data()[k] > 0.0) == (velocity.data()[k] > 0.0);
            g = same_sign ? g * 0.8 : g + 0.2;
            g = std::max(g, 0.01);
            velocity.data()[k] =
                momentum * velocity.data()[k] - config.learning_rate * g * grad.data()[k];
        }
        y += velocity;
        y.rowwise() -= y.colwise().mean();
        check_finite(y, iter);
        if (iter % config.kl_interval == 0 || iter == config.iterations) {
            const double kl = kl_divergence(p, y);
            if (!std::isfinite(kl)) {
                throw NumericError("t-SNE diverged: non-finite KL at iteration " + std::to_string(iter));
            }
            out.kl_trajectory.push_back({iter, kl});
        }
    }
    out.coords = std::move(y);
    return out;
}

Embedding tsne(const Matrix& data, const TsneConfig& config) {
    config.validate(static_cast<std::size_t>(data.rows()));
    const auto calibration = calibrate_sigmas(data, config.perplexity, config.perplexity_tolerance,
                                              config.sigma_search_max_iters);
    const auto p = joint_probabilities(data, calibration.sigmas);
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1e-4);
    Matrix init(data.rows(), static_cast<Eigen::Index>(config.out_dim));
    for (Eigen::Index k = 0; k < init.size(); ++k) init.data()[k] = normal(rng);
    auto out = tsne_optimize(p, std::move(init), config);
    out.unconverged_sigmas = calibration.unconverged;
    return out;
}

void save_embedding(const Matrix& coords, const std::filesystem::path& path) {
    detail::save_float32_matrix(coords, kEmbeddingMagic, path);
}

Matrix load_embedding(const std::filesystem::path& path) {
    return detail::load_float32_matrix(kEmbeddingMagic, path);
}

}  // namespace lcseg
