#include "lcseg/cca.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "lcseg/error.hpp"

namespace lcseg {
namespace {

constexpr double kEigenFloor = 1e-12;

Eigen::MatrixXd covariance(const Matrix& x) {
    return (x.transpose() * x) / static_cast<double>(x.rows());
}

Eigen::MatrixXd inverse_sqrt(const Eigen::MatrixXd& c) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
    if (eig.info() != Eigen::Success) throw NumericError("covariance eigendecomposition failed");
    const Eigen::VectorXd scale = eig.eigenvalues().cwiseMax(kEigenFloor).cwiseSqrt().cwiseInverse();
    return eig.eigenvectors() * scale.asDiagonal() * eig.eigenvectors().transpose();
}

Matrix remove_column_means(Matrix x) {
    x.rowwise() -= x.colwise().mean();
    return x;
}

}  // namespace

double Ridge::amount(const Eigen::MatrixXd& c) const {
    if (!(value >= 0.0) || !std::isfinite(value)) throw ConfigError("ridge must be finite and >= 0");
    if (kind == Kind::Absolute) return value;
    return value * c.trace() / static_cast<double>(c.rows());
}

const char* variant_name(CcaVariant variant) {
    switch (variant) {
        case CcaVariant::Rbf: return "rbf";
        case CcaVariant::Linear: return "linear";
        case CcaVariant::Polynomial: return "poly";
    }
    return "?";
}

CcaVariant parse_variant(const std::string& text) {
    if (text == "rbf") return CcaVariant::Rbf;
    if (text == "linear") return CcaVariant::Linear;
    if (text == "poly" || text == "polynomial") return CcaVariant::Polynomial;
    throw ConfigError("unknown CCA variant '" + text + "'");
}

// ---- Row ordering ---------------------------------------------------------------

LabeledOrder reorder_labeled_first(const std::vector<int>& labels) {
    LabeledOrder out;
    out.order.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0) {
            out.order.push_back(i);
            out.labels.push_back(labels[i]);
        }
    }
    out.labeled = out.order.size();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 0) out.order.push_back(i);
    }
    out.position.resize(labels.size());
    for (std::size_t r = 0; r < out.order.size(); ++r) out.position[out.order[r]] = r;
    return out;
}

Matrix LabeledOrder::apply(const Matrix& rows) const {
    if (static_cast<std::size_t>(rows.rows()) != order.size()) {
        throw ConfigError("row count differs from the label vector");
    }
    Matrix out(rows.rows(), rows.cols());
    for (std::size_t r = 0; r < order.size(); ++r) {
        out.row(static_cast<Eigen::Index>(r)) = rows.row(static_cast<Eigen::Index>(order[r]));
    }
    return out;
}

Matrix LabeledOrder::restore(const Matrix& rows) const {
    if (static_cast<std::size_t>(rows.rows()) != order.size()) {
        throw ConfigError("row count differs from the label vector");
    }
    Matrix out(rows.rows(), rows.cols());
    for (std::size_t r = 0; r < order.size(); ++r) {
        out.row(static_cast<Eigen::Index>(order[r])) = rows.row(static_cast<Eigen::Index>(r));
    }
    return out;
}

// ---- Design matrices ---------------------------------------------------------------

double rbf_sigma(const Matrix& y, const Matrix& centers) {
    if (y.rows() == 0 || centers.rows() == 0) throw ConfigError("RBF width needs points and centres");
    if (y.cols() != centers.cols()) throw ConfigError("centres and points differ in dimension");
    // mean_ij |y_i - c_j|^2 = mean |y|^2 + mean |c|^2 - 2 ybar . cbar
    const double yy = y.rowwise().squaredNorm().mean();
    const double cc = centers.rowwise().squaredNorm().mean();
    const double yc = y.colwise().mean().dot(centers.colwise().mean());
    const double mean_sq = yy + cc - 2.0 * yc;
    if (!(mean_sq > 1e-14 * std::max(yy + cc, 1e-300))) {
        throw NumericError("degenerate embedding: RBF width is zero");
    }
    return std::sqrt(mean_sq);
}

Matrix build_rbf_design(const Matrix& y, std::size_t labeled, double sigma) {
    if (!(sigma > 0.0)) throw ConfigError("RBF width must be positive");
    if (labeled == 0 || labeled > static_cast<std::size_t>(y.rows())) {
        throw ConfigError("labeled count must lie in 1..N");
    }
    const auto nl = static_cast<Eigen::Index>(labeled);
    const Matrix centers = y.topRows(nl);
    const Eigen::RowVectorXd c_norm = centers.rowwise().squaredNorm().transpose();
    const Eigen::VectorXd y_norm = y.rowwise().squaredNorm();
    const double inv = 1.0 / (2.0 * sigma * sigma);
    Matrix phi(y.rows(), nl);
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        for (Eigen::Index j = 0; j < nl; ++j) {
            const double d = std::max(0.0, y_norm(i) + c_norm(j) - 2.0 * y.row(i).dot(centers.row(j)));
            phi(i, j) = std::exp(-d * inv);
        }
    }
    return remove_column_means(std::move(phi));
}

Matrix build_linear_design(const Matrix& y) { return remove_column_means(y); }

Matrix build_polynomial_design(const Matrix& y) {
    const Eigen::Index m = y.cols();
    Matrix out(y.rows(), m + m * (m + 1) / 2);
    out.leftCols(m) = y;
    Eigen::Index k = m;
    for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = a; b < m; ++b) {
            out.col(k++) = y.col(a).cwiseProduct(y.col(b));
        }
    }
    return remove_column_means(std::move(out));
}

Matrix build_indicator(const std::vector<int>& labels, int class_count) {
    if (class_count < 1) throw ConfigError("class count must be positive");
    Matrix psi = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), class_count);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int t = labels[i];
        if (t < 1 || t > class_count) {
            throw DataError("label " + std::to_string(t) + " outside 1.." + std::to_string(class_count));
        }
        psi(static_cast<Eigen::Index>(i), t - 1) = 1.0;
    }
    for (int k = 0; k < class_count; ++k) {
        if (psi.col(k).sum() == 0.0) {
            throw DataError("class " + std::to_string(k + 1) + " has no labeled sample");
        }
    }
    return remove_column_means(std::move(psi));
}

DesignMatrices build_design(const Matrix& y, const LabeledOrder& order, int class_count,
                            CcaVariant variant) {
    DesignMatrices out;
    out.variant = variant;
    out.psi = build_indicator(order.labels, class_count);
    const Matrix ordered = order.apply(y);
    switch (variant) {
        case CcaVariant::Rbf: {
            out.centers = ordered.topRows(static_cast<Eigen::Index>(order.labeled));
            out.rbf_sigma = rbf_sigma(ordered, out.centers);
            out.phi_full = build_rbf_design(ordered, order.labeled, out.rbf_sigma);
            break;
        }
        case CcaVariant::Linear: out.phi_full = build_linear_design(ordered); break;
        case CcaVariant::Polynomial: out.phi_full = build_polynomial_design(ordered); break;
    }
    return out;
}

// ---- CCA ---------------------------------------------------------------------------

CcaModel cca_fit(const Matrix& phi, const Matrix& psi, const Ridge& ridge, double rank_tolerance) {
    if (phi.rows() != psi.rows()) throw ConfigError("CCA views differ in row count");
    if (phi.rows() == 0 || phi.cols() == 0 || psi.cols() == 0) throw ConfigError("empty CCA view");
    const Eigen::Index p = phi.cols();
    const Eigen::Index k = psi.cols();

    Eigen::MatrixXd c_pp = covariance(phi);
    Eigen::MatrixXd c_qq = covariance(psi);
    const Eigen::MatrixXd c_pq = (phi.transpose() * psi) / static_cast<double>(phi.rows());
    if (!c_pp.allFinite() || !c_qq.allFinite() || !c_pq.allFinite()) {
        throw NumericError("non-finite covariance");
    }
    CcaModel model;
    model.ridge_phi = ridge.amount(c_pp);
    model.ridge_psi = ridge.amount(c_qq);
    c_pp.diagonal().array() += model.ridge_phi;
    c_qq.diagonal().array() += model.ridge_psi;

    const Eigen::MatrixXd w_p = inverse_sqrt(c_pp);
    const Eigen::MatrixXd w_q = inverse_sqrt(c_qq);
    const Eigen::MatrixXd kmat = w_p * c_pq * w_q;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(kmat, Eigen::ComputeThinU | Eigen::ComputeThinV);

    const Eigen::Index d = std::min(p, k);
    model.retained = static_cast<std::size_t>(d);
    model.a = Eigen::MatrixXd::Zero(p, k);
    model.b = Eigen::MatrixXd::Zero(k, k);
    model.correlations = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < d; ++i) {
        const double rho = std::clamp(svd.singularValues()(i), 0.0, 1.0);
        if (!(rho > rank_tolerance)) break;
        Eigen::VectorXd a = w_p * svd.matrixU().col(i);
        Eigen::VectorXd b = w_q * svd.matrixV().col(i);
        Eigen::Index arg = 0;
        b.cwiseAbs().maxCoeff(&arg);
        if (b(arg) < 0.0) {
            a = -a;
            b = -b;
        }
        model.a.col(i) = a;
        model.b.col(i) = b;
        model.correlations(i) = rho;
        ++model.effective;
    }
    return model;
}

Matrix project_canonical(const Matrix& phi_full, const Eigen::MatrixXd& a) {
    if (phi_full.cols() != a.rows()) throw ConfigError("projection shape mismatch");
    return phi_full * a;
}

CanonicalResult canonical_variables(const Matrix& y, const std::vector<int>& labels,
                                    int class_count, CcaVariant variant, const Ridge& ridge) {
    if (static_cast<std::size_t>(y.rows()) != labels.size()) {
        throw ConfigError("one label per embedding row required");
    }
    const LabeledOrder order = reorder_labeled_first(labels);
    const DesignMatrices design = build_design(y, order, class_count, variant);
    CanonicalResult out;
    out.model = cca_fit(design.phi(), design.psi, ridge);
    out.rbf_sigma = design.rbf_sigma;
    out.u_full = order.restore(project_canonical(design.phi_full, out.model.a));
    return out;
}

CanonicalResult rbf_cca(const Matrix& y, const std::vector<int>& labels, int class_count,
                        const Ridge& ridge) {
    return canonical_variables(y, labels, class_count, CcaVariant::Rbf, ridge);
}

}  // namespace lcseg
