#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "lcseg/embedding.hpp"
#include "lcseg/error.hpp"

using namespace lcseg;
using lcseg::test::gaussian_matrix;

namespace {

double sq_dist(const Matrix& x, Eigen::Index i, Eigen::Index j) { return (x.row(i) - x.row(j)).squaredNorm(); }

/// Conditional distribution p_{.|i} for a Gaussian of width sigma.
std::vector<double> conditional_row(const Matrix& x, Eigen::Index i, double sigma) {
    std::vector<double> p(static_cast<std::size_t>(x.rows()), 0.0);
    double z = 0.0;
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
        if (j == i) continue;
        p[j] = std::exp(-sq_dist(x, i, j) / (2.0 * sigma * sigma));
        z += p[j];
    }
    for (auto& v : p) v /= z;
    return p;
}

double perplexity_of(const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log2(v);
    return std::exp2(h);
}

Eigen::MatrixXd dense_joint_oracle(const Matrix& x, const std::vector<double>& sigmas, double floor_value) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto row = conditional_row(x, i, sigmas[i]);
        for (Eigen::Index j = 0; j < n; ++j) p(i, j) += row[j];
    }
    p = ((p + p.transpose()) / (2.0 * n)).eval();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j) p(i, j) = std::max(p(i, j), floor_value);
    return p / p.sum();
}

double kl_oracle(const Eigen::MatrixXd& p, const Matrix& y) {
    const Eigen::Index n = y.rows();
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j) w(i, j) = 1.0 / (1.0 + sq_dist(y, i, j));
    const Eigen::MatrixXd q = w / w.sum();
    double kl = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j) kl += p(i, j) * std::log(p(i, j) / q(i, j));
    return kl;
}

SimilarityModel model_for(const Matrix& x, double perplexity) {
    return joint_probabilities(x, calibrate_sigmas(x, perplexity).sigmas);
}

}  // namespace

TEST_CASE("PCA of a rotation-only problem preserves distances") {
    const Matrix x = gaussian_matrix(30, 4, 1);
    const auto pca = pca_reduce(x, 4);
    for (Eigen::Index i = 0; i < 30; ++i)
        for (Eigen::Index j = 0; j < 30; ++j)
            REQUIRE(sq_dist(pca.scores, i, j) == doctest::Approx(sq_dist(x, i, j)).epsilon(1e-10));
    const Eigen::MatrixXd gram = pca.components.transpose() * pca.components;
    CHECK(gram.isApprox(Eigen::MatrixXd::Identity(4, 4), 1e-12));
    for (Eigen::Index k = 1; k < 4; ++k) CHECK(pca.eigenvalues(k - 1) >= pca.eigenvalues(k));
}

TEST_CASE("PCA of points on a line") {
    Matrix x(6, 2);
    const double t[6] = {-2.0, -1.0, 0.5, 1.0, 3.0, 4.5};
    for (int i = 0; i < 6; ++i) x.row(i) << t[i], 2.0 * t[i];
    const auto pca = pca_reduce(x, 1);
    CHECK(std::abs(pca.components(0, 0)) == doctest::Approx(1.0 / std::sqrt(5.0)));
    CHECK(std::abs(pca.components(1, 0)) == doctest::Approx(2.0 / std::sqrt(5.0)));
    CHECK(pca.components(1, 0) > 0.0);
    const double mean = (t[0] + t[1] + t[2] + t[3] + t[4] + t[5]) / 6.0;
    for (int i = 0; i < 6; ++i) CHECK(pca.scores(i, 0) == doctest::Approx((t[i] - mean) * std::sqrt(5.0)));
    CHECK((pca.reconstruct() - x).norm() / x.norm() <= 1e-8);
}

TEST_CASE("PCA at full rank reconstructs and rejects bad input") {
    Matrix low = gaussian_matrix(40, 3, 2) * gaussian_matrix(3, 8, 3);
    const auto pca = pca_reduce(low, 3);
    CHECK((pca.reconstruct() - low).norm() / low.norm() <= 1e-8);
    CHECK_THROWS_AS(pca_reduce(low, 9), ConfigError);
    CHECK_THROWS_AS(pca_reduce(Matrix::Constant(5, 3, 2.0), 1), NumericError);
}

TEST_CASE("sigmas of a regular simplex are equal") {
    const Matrix simplex = Matrix::Identity(6, 6) * 3.0;
    const auto cal = calibrate_sigmas(simplex, 4.0);
    for (double s : cal.sigmas) CHECK(s == doctest::Approx(cal.sigmas.front()).epsilon(1e-12));
    // Equal distances give a uniform conditional: perplexity N-1 is the only
    // attainable value, every other target must fail to converge.
    CHECK(cal.unconverged.size() == 6);
    CHECK_THROWS_AS(calibrate_sigmas(simplex, 6.0), ConfigError);
}

TEST_CASE("calibrated perplexity recomputed from the sigmas") {
    const Matrix x = gaussian_matrix(100, 5, 7);
    for (double target : {5.0, 30.0}) {
        const auto cal = calibrate_sigmas(x, target);
        CHECK(cal.unconverged.empty());
        for (Eigen::Index i = 0; i < 100; ++i) {
            REQUIRE(cal.sigmas[i] > 0.0);
            REQUIRE(perplexity_of(conditional_row(x, i, cal.sigmas[i])) == doctest::Approx(target).epsilon(1e-3));
        }
    }
}

TEST_CASE("joint probabilities match the dense construction") {
    const Matrix x = gaussian_matrix(40, 3, 9);
    const auto cal = calibrate_sigmas(x, 8.0);
    const auto p = joint_probabilities(x, cal.sigmas);
    const Eigen::MatrixXd d = p.dense();
    const Eigen::MatrixXd oracle = dense_joint_oracle(x, cal.sigmas, kProbabilityFloor);
    CHECK((d - oracle).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(d.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK((d - d.transpose()).cwiseAbs().maxCoeff() == 0.0);
    for (Eigen::Index i = 0; i < 40; ++i) CHECK(d(i, i) == 0.0);
    CHECK(d.minCoeff() >= 0.0);
    CHECK_THROWS_AS(joint_probabilities(x, std::vector<double>(39, 1.0)), ConfigError);
}

TEST_CASE("probability contracts on a larger sample") {
    const Matrix x = gaussian_matrix(300, 10, 13);
    const auto p = model_for(x, 30.0);
    const Eigen::MatrixXd d = p.dense();
    CHECK(std::abs(d.sum() - 1.0) <= 1e-9);
    CHECK(d.isApprox(d.transpose(), 0.0));
    CHECK(d.diagonal().cwiseAbs().maxCoeff() == 0.0);
    CHECK(p.floor_value() > 0.0);
    for (std::size_t i = 0; i < p.size(); ++i)
        for (const auto& e : p.row(i)) CHECK(e.value > p.floor_value());
}

TEST_CASE("three collinear points") {
    Matrix x(4, 1);
    x << 0.0, 1.0, 10.0, 10.5;
    const auto p = joint_probabilities(x, {1.0, 1.0, 1.0, 1.0}).dense();
    CHECK(p(0, 1) > p(0, 2));
    CHECK(p(0, 1) > p(1, 2));
    CHECK(p(2, 3) > p(1, 2));
}

TEST_CASE("KL divergence and Q against dense oracles") {
    const Matrix x = gaussian_matrix(25, 4, 17);
    const auto p = model_for(x, 6.0);
    const Matrix y = gaussian_matrix(25, 2, 18, 2.0);
    CHECK(kl_divergence(p, y) == doctest::Approx(kl_oracle(p.dense(), y)).epsilon(1e-10));
    const Eigen::MatrixXd q = map_similarities(y);
    CHECK(q.sum() == doctest::Approx(1.0));
    CHECK(q.diagonal().cwiseAbs().maxCoeff() == 0.0);
    CHECK(kl_divergence(p, y) >= 0.0);
}

TEST_CASE("analytic gradient against central differences") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const Matrix x = gaussian_matrix(10, 3, 100 + seed);
        const auto p = model_for(x, 3.0);
        Matrix y = gaussian_matrix(10, 2, 200 + seed);
        const Matrix g = kl_gradient(p, y);
        Matrix fd(10, 2);
        const double h = 1e-5;
        for (Eigen::Index k = 0; k < y.size(); ++k) {
            const double keep = y.data()[k];
            y.data()[k] = keep + h;
            const double up = kl_divergence(p, y);
            y.data()[k] = keep - h;
            const double down = kl_divergence(p, y);
            y.data()[k] = keep;
            fd.data()[k] = (up - down) / (2.0 * h);
        }
        CHECK((g - fd).norm() / fd.norm() <= 1e-4);
    }
}

TEST_CASE("separated blobs stay separable") {
    const double sigma = 1.0;
    Matrix x = gaussian_matrix(40, 5, 23, sigma);
    x.topRows(20).col(0).array() += 100.0 * sigma;
    TsneConfig cfg;
    cfg.perplexity = 10.0;
    cfg.iterations = 500;
    const auto emb = tsne(x, cfg);
    REQUIRE(emb.coords.rows() == 40);
    REQUIRE(emb.coords.cols() == 3);
    CHECK(emb.coords.allFinite());
    const Eigen::RowVectorXd a = emb.coords.topRows(20).colwise().mean();
    const Eigen::RowVectorXd b = emb.coords.bottomRows(20).colwise().mean();
    int correct = 0;
    for (Eigen::Index i = 0; i < 40; ++i) {
        const bool near_a = (emb.coords.row(i) - a).squaredNorm() < (emb.coords.row(i) - b).squaredNorm();
        correct += near_a == (i < 20);
    }
    CHECK(correct == 40);
    for (const auto& s : emb.kl_trajectory) CHECK(s.value >= 0.0);
}

TEST_CASE("t-SNE is deterministic per seed") {
    const Matrix x = gaussian_matrix(60, 6, 29);
    TsneConfig cfg;
    cfg.perplexity = 10.0;
    cfg.iterations = 300;
    const auto a = tsne(x, cfg);
    const auto b = tsne(x, cfg);
    CHECK(a.coords == b.coords);
    cfg.seed = 2;
    CHECK(tsne(x, cfg).coords != a.coords);
}

TEST_CASE("KL window averages do not increase after exaggeration") {
    const Matrix x = gaussian_matrix(80, 6, 31);
    TsneConfig cfg;
    cfg.perplexity = 15.0;
    cfg.iterations = 1000;
    cfg.kl_interval = 1;
    const auto emb = tsne(x, cfg);
    REQUIRE(emb.kl_trajectory.size() == 1000);
    std::vector<double> windows;
    for (std::size_t start = 250; start + 50 <= 1000; start += 50) {
        double s = 0.0;
        for (std::size_t k = start; k < start + 50; ++k) s += emb.kl_trajectory[k].value;
        windows.push_back(s / 50.0);
    }
    for (std::size_t w = 1; w < windows.size(); ++w) CHECK(windows[w] <= windows[w - 1] + 1e-12);
    CHECK(emb.kl_trajectory.back().value <= emb.kl_trajectory[250].value);
}

TEST_CASE("t-SNE configuration errors") {
    const Matrix x = gaussian_matrix(10, 2, 1);
    TsneConfig cfg;
    cfg.perplexity = 10.0;
    CHECK_THROWS_AS(tsne(x, cfg), ConfigError);
    cfg.perplexity = 3.0;
    cfg.out_dim = 4;
    CHECK_THROWS_AS(tsne(x, cfg), ConfigError);
    cfg.out_dim = 2;
    cfg.iterations = 5;
    const auto p = model_for(x, 3.0);
    Matrix start = gaussian_matrix(10, 2, 5);
    CHECK_THROWS_AS(tsne_optimize(p, start.topRows(9), cfg), ConfigError);
    start(3, 1) = std::nan("");
    CHECK_THROWS_AS(tsne_optimize(p, start, cfg), NumericError);
}

TEST_CASE("embedding file round trip") {
    lcseg::test::TempDir dir("lse");
    const Matrix y = gaussian_matrix(9, 2, 4).cast<float>().cast<double>();
    save_embedding(y, dir / "e.lse");
    CHECK(load_embedding(dir / "e.lse") == y);
}
