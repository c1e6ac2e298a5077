#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "lcseg/error.hpp"
#include "lcseg/evaluation.hpp"

using namespace lcseg;

namespace {

double assignment_cost(const Eigen::MatrixXd& cost, const std::vector<int>& a) {
    double s = 0.0;
    for (std::size_t r = 0; r < a.size(); ++r) s += cost(static_cast<Eigen::Index>(r), a[r]);
    return s;
}

double brute_force_min(const Eigen::MatrixXd& cost) {
    std::vector<int> perm(static_cast<std::size_t>(cost.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do best = std::min(best, assignment_cost(cost, perm));
    while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("assignment hand examples") {
    Eigen::MatrixXd c(3, 3);
    c << 4, 1, 3, 2, 0, 5, 3, 2, 2;
    const auto a = solve_assignment(c);
    CHECK(a == std::vector<int>{1, 0, 2});
    CHECK(assignment_cost(c, a) == 5.0);
    CHECK(solve_assignment(Eigen::MatrixXd::Constant(1, 1, 7.0)) == std::vector<int>{0});
    CHECK_THROWS_AS(solve_assignment(Eigen::MatrixXd::Zero(2, 3)), ConfigError);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 2);
    bad(0, 1) = INFINITY;
    CHECK_THROWS_AS(solve_assignment(bad), NumericError);
}

TEST_CASE("assignment matches brute force on contingency tables") {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> counts(0, 500);
    for (int trial = 0; trial < 100; ++trial) {
        const int k = 1 + trial % 6;
        Eigen::MatrixXd table(k, k);
        for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = counts(rng);
        const Eigen::MatrixXd cost = table.maxCoeff() - table.array();
        const auto a = solve_assignment(cost);
        std::vector<int> sorted = a;
        std::sort(sorted.begin(), sorted.end());
        std::vector<int> ids(static_cast<std::size_t>(k));
        std::iota(ids.begin(), ids.end(), 0);
        REQUIRE(sorted == ids);
        REQUIRE(assignment_cost(cost, a) == brute_force_min(cost));
    }
}

TEST_CASE("contingency and mapping") {
    const std::vector<int> pred{1, 1, 2, 2, 3, 0};
    const std::vector<int> truth{2, 2, 3, 3, 1, 1};
    const Eigen::MatrixXd t = contingency(pred, truth, 3);
    CHECK(t(0, 1) == 2.0);
    CHECK(t(1, 2) == 2.0);
    CHECK(t(2, 0) == 1.0);
    CHECK(t.sum() == 5.0);
    CHECK(hungarian_map(pred, truth, 3) == std::vector<int>{2, 3, 1});
    CHECK(apply_mapping(pred, {2, 3, 1}) == std::vector<int>{2, 2, 3, 3, 1, 0});
    CHECK_THROWS_AS(contingency(pred, std::vector<int>{1}, 3), ConfigError);
    CHECK_THROWS_AS(contingency(std::vector<int>{4}, std::vector<int>{1}, 3), DataError);
}

TEST_CASE("perfect relabeled prediction") {
    const LabelMask truth(2, 3, {1, 1, 2, 2, 3, 0}, 3);
    const auto r = evaluate(std::vector<int>{3, 3, 1, 1, 2, 2}, truth);
    CHECK(r.accuracy == 1.0);
    CHECK(r.evaluated == 5);
    CHECK(r.mean_iou == 1.0);
    CHECK(r.mapping == std::vector<int>{2, 3, 1});
}

TEST_CASE("half-correct prediction") {
    const LabelMask truth(1, 4, {1, 1, 2, 2}, 2);
    const auto r = evaluate(std::vector<int>{1, 2, 1, 2}, truth);
    CHECK(r.accuracy == 0.5);
    CHECK(r.per_class_iou[0] == doctest::Approx(1.0 / 3.0));
    CHECK(r.per_class_iou[1] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("absent class scores an IOU of zero") {
    // Class 3 appears nowhere in the truth and the prediction uses it nowhere
    // after mapping.
    const LabelMask truth(1, 4, {1, 1, 2, 2}, 3);
    const auto r = evaluate(std::vector<int>{1, 1, 2, 2}, truth);
    CHECK(r.accuracy == 1.0);
    CHECK(r.per_class_iou[2] == 0.0);
    CHECK(r.mean_iou == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("scores do not depend on cluster ids") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> cls(0, 4);
    std::vector<int> truth(400), pred(400);
    for (std::size_t i = 0; i < 400; ++i) {
        truth[i] = cls(rng);
        pred[i] = (i % 3 == 0) ? 1 + cls(rng) % 4 : std::max(1, truth[i]);
    }
    const LabelMask mask(20, 20, truth, 4);
    const auto base = evaluate(pred, mask);
    const std::vector<int> perm{3, 1, 4, 2};
    std::vector<int> relabeled(400);
    for (std::size_t i = 0; i < 400; ++i) relabeled[i] = perm[static_cast<std::size_t>(pred[i] - 1)];
    const auto other = evaluate(relabeled, mask);
    CHECK(other.accuracy == base.accuracy);
    CHECK(other.per_class_iou == base.per_class_iou);
    CHECK(other.confusion == base.confusion);

    // Accuracy is the confusion trace over the evaluated pixels.
    CHECK(base.accuracy == base.confusion.trace() / double(base.evaluated));
    CHECK(base.confusion.sum() == double(base.evaluated));
    std::size_t labeled = 0;
    for (int t : truth) labeled += t != 0;
    CHECK(base.evaluated == labeled);
}

TEST_CASE("evaluation errors") {
    const LabelMask truth(1, 3, {1, 2, 0}, 2);
    CHECK_THROWS_WITH_AS(evaluate(std::vector<int>{1, 0, 2}, truth), "prediction missing for a labeled truth pixel",
                         DataError);
    CHECK_THROWS_AS(evaluate(std::vector<int>{1, 2}, truth), ConfigError);
    CHECK_THROWS_WITH_AS(evaluate(std::vector<int>{1, 2}, LabelMask(1, 2, {0, 0}, 2)),
                         "ground truth has no labeled pixel", DataError);
}

TEST_CASE("report files") {
    lcseg::test::TempDir dir("eval");
    const LabelMask truth(1, 4, {1, 1, 2, 2}, 2);
    const auto r = evaluate(std::vector<int>{2, 2, 2, 1}, truth);
    write_class_csv(r, dir / "classes.csv");
    write_confusion_csv(r, dir / "confusion.csv");
    CHECK(read_file(dir / "classes.csv") ==
          "class,iou,precision,recall\n1,0.666667,0.666667,1.000000\n2,0.500000,1.000000,0.500000\n");
    CHECK(read_file(dir / "confusion.csv") == "truth,pred_1,pred_2\n1,2,0\n2,1,1\n");
    const std::string s = summary_text(r);
    CHECK(s.find("accuracy: 0.750000") != std::string::npos);
    CHECK(s.find("mapping: 1->2 2->1") != std::string::npos);
}
