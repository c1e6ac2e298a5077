#include <algorithm>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "lcseg/embedding.hpp"
#include "lcseg/error.hpp"

namespace lcseg {

Matrix PcaResult::reconstruct() const {
    Matrix out = scores * components.transpose();
    out.rowwise() += mean;
    return out;
}

PcaResult pca_reduce(const Matrix& data, std::size_t target_dim) {
    const auto n_rows = static_cast<std::size_t>(data.rows());
    const auto n_cols = static_cast<std::size_t>(data.cols());
    if (target_dim < 1 || target_dim > std::min(n_rows, n_cols)) {
        throw ConfigError("PCA target dimension " + std::to_string(target_dim) +
                          " outside 1.." + std::to_string(std::min(n_rows, n_cols)));
    }
    PcaResult result;
    result.mean = data.colwise().mean();
    const Matrix centred = data.rowwise() - result.mean;
    if (centred.squaredNorm() == 0.0) throw NumericError("zero variance");

    const auto k = static_cast<Eigen::Index>(target_dim);
    const double inv_n = 1.0 / static_cast<double>(n_rows);
    if (n_cols <= n_rows) {
        const Eigen::MatrixXd cov = (centred.transpose() * centred) * inv_n;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
        if (eig.info() != Eigen::Success) throw NumericError("PCA eigendecomposition failed");
        // Ascending order from the solver; keep the last k, largest first.
        result.components = eig.eigenvectors().rightCols(k).rowwise().reverse();
        result.eigenvalues = eig.eigenvalues().tail(k).reverse();
    } else {
        Eigen::BDCSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(centred), Eigen::ComputeThinV);
        result.components = svd.matrixV().leftCols(k);
        result.eigenvalues = svd.singularValues().head(k).array().square().matrix() * inv_n;
    }
    for (Eigen::Index c = 0; c < k; ++c) {
        Eigen::Index arg = 0;
        result.components.col(c).cwiseAbs().maxCoeff(&arg);
        if (result.components(arg, c) < 0.0) result.components.col(c) *= -1.0;
    }
    result.scores = centred * result.components;
    return result;
}

}  // namespace lcseg
