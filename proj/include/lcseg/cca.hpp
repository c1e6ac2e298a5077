#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lcseg/features.hpp"

namespace lcseg {

/// Regularisation added to both covariance blocks before whitening.
struct Ridge {
    enum class Kind { Relative, Absolute };
    Kind kind = Kind::Relative;
    /// Relative: value * trace(C) / dim(C). Absolute: value.
    double value = 1e-6;

    static Ridge relative(double v) { return {Kind::Relative, v}; }
    static Ridge absolute(double v) { return {Kind::Absolute, v}; }
    double amount(const Eigen::MatrixXd& covariance) const;
};

enum class CcaVariant { Rbf, Linear, Polynomial };

const char* variant_name(CcaVariant variant);
/// Accepts "rbf", "linear", "poly" or "polynomial".
CcaVariant parse_variant(const std::string& text);

/// Row permutation placing labeled pixels first, in their original order.
struct LabeledOrder {
    std::vector<std::size_t> order;     ///< order[r] = original row at position r
    std::vector<std::size_t> position;  ///< inverse permutation
    std::size_t labeled = 0;            ///< N_l
    std::vector<int> labels;            ///< classes of the first N_l rows

    Matrix apply(const Matrix& rows) const;
    /// Maps rows back to the original pixel order.
    Matrix restore(const Matrix& rows) const;
};

/// `labels[i]` is 0 for unlabeled rows and a class id otherwise.
LabeledOrder reorder_labeled_first(const std::vector<int>& labels);

struct DesignMatrices {
    Matrix phi_full;  ///< N x p, column-mean removed, labeled rows first
    Matrix psi;       ///< N_l x K indicator, column-mean removed
    CcaVariant variant = CcaVariant::Rbf;
    double rbf_sigma = 0.0;  ///< 0 unless the variant is RBF
    Matrix centers;          ///< N_l x m labeled embedding rows (RBF only)

    std::size_t labeled() const noexcept { return static_cast<std::size_t>(psi.rows()); }
    /// Top N_l rows of phi_full.
    Matrix phi() const { return phi_full.topRows(psi.rows()); }
};

/// sqrt(mean over all (i, j) of |y_i - c_j|^2). Throws NumericError on zero.
double rbf_sigma(const Matrix& y, const Matrix& centers);

/// phi_ij = exp(-|y_i - c_j|^2 / (2 sigma^2)), centres = first `labeled` rows,
/// then column-mean removal over all rows.
Matrix build_rbf_design(const Matrix& y, std::size_t labeled, double sigma);

/// Y with its column means removed.
Matrix build_linear_design(const Matrix& y);

/// [Y | y_a y_b for a <= b] with column means removed.
Matrix build_polynomial_design(const Matrix& y);

/// One-hot N_l x K matrix (labels 1..K), column-mean removed.
/// Throws DataError("class k has no labeled sample").
Matrix build_indicator(const std::vector<int>& labels, int class_count);

struct CcaModel {
    Eigen::MatrixXd a;             ///< p x K, zero columns past the effective rank
    Eigen::MatrixXd b;             ///< K x K, same layout
    Eigen::VectorXd correlations;  ///< K values, descending, in [0, 1]
    double ridge_phi = 0.0;
    double ridge_psi = 0.0;
    std::size_t retained = 0;   ///< min(p, K)
    std::size_t effective = 0;  ///< retained directions with rho above the rank tolerance
};

inline constexpr double kCcaRankTolerance = 1e-6;

/// Classic CCA by whitening and SVD of C_pp^-1/2 C_pq C_qq^-1/2. Covariances are
/// (1/N_l) X^T X plus the ridge. Directions whose correlation is not above
/// `rank_tolerance` are zeroed.
CcaModel cca_fit(const Matrix& phi, const Matrix& psi, const Ridge& ridge = {},
                 double rank_tolerance = kCcaRankTolerance);

/// U_full = phi_full * A.
Matrix project_canonical(const Matrix& phi_full, const Eigen::MatrixXd& a);

DesignMatrices build_design(const Matrix& y, const LabeledOrder& order, int class_count,
                            CcaVariant variant);

struct CanonicalResult {
    Matrix u_full;  ///< N x K in the original row order
    CcaModel model;
    double rbf_sigma = 0.0;
};

/// Design matrices, CCA fit and projection; `labels` has one entry per row of
/// y (0 = unlabeled).
CanonicalResult canonical_variables(const Matrix& y, const std::vector<int>& labels,
                                    int class_count, CcaVariant variant, const Ridge& ridge = {});

/// The RBF variant of canonical_variables.
CanonicalResult rbf_cca(const Matrix& y, const std::vector<int>& labels, int class_count,
                        const Ridge& ridge = {});

}  // namespace lcseg
