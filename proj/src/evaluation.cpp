#include "lcseg/evaluation.hpp"

#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "lcseg/error.hpp"

namespace lcseg {
namespace {

std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write '" + path.string() + "'");
    f << text;
    if (!f) throw DataError("write failed for '" + path.string() + "'");
}

}  // namespace

std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
    const auto n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw ConfigError("assignment cost matrix must be square");
    if (!cost.allFinite()) throw NumericError("assignment costs must be finite");
    // 1-based shortest augmenting path formulation; column 0 is a sentinel.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    for (int row = 1; row <= n; ++row) {
        match[0] = row;
        int col0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[col0] = 1;
            const int r0 = match[col0];
            double delta = inf;
            int col1 = 0;
            for (int c = 1; c <= n; ++c) {
                if (used[c]) continue;
                const double reduced = cost(r0 - 1, c - 1) - u[r0] - v[c];
                if (reduced < minv[c]) {
                    minv[c] = reduced;
                    way[c] = col0;
                }
                if (minv[c] < delta) {
                    delta = minv[c];
                    col1 = c;
                }
            }
            for (int c = 0; c <= n; ++c) {
                if (used[c]) {
                    u[match[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = col1;
        } while (match[col0] != 0);
        do {
            const int col1 = way[col0];
            match[col0] = match[col1];
            col0 = col1;
        } while (col0 != 0);
    }
    std::vector<int> assignment(static_cast<std::size_t>(n), -1);
    for (int c = 1; c <= n; ++c) assignment[static_cast<std::size_t>(match[c] - 1)] = c - 1;
    return assignment;
}

Eigen::MatrixXd contingency(std::span<const int> pred, std::span<const int> truth, int class_count) {
    if (pred.size() != truth.size()) throw ConfigError("prediction and truth differ in length");
    if (class_count < 1) throw ConfigError("class count must be positive");
    Eigen::MatrixXd table = Eigen::MatrixXd::Zero(class_count, class_count);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int p = pred[i];
        const int t = truth[i];
        if (p < 0 || p > class_count || t < 0 || t > class_count) {
            throw DataError("label outside 0.." + std::to_string(class_count));
        }
        if (p != 0 && t != 0) table(p - 1, t - 1) += 1.0;
    }
    return table;
}

std::vector<int> hungarian_map(std::span<const int> pred, std::span<const int> truth, int class_count) {
    const Eigen::MatrixXd table = contingency(pred, truth, class_count);
    const Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(class_count, class_count, table.maxCoeff()) - table;
    auto mapping = solve_assignment(cost);
    for (int& m : mapping) ++m;
    return mapping;
}

std::vector<int> apply_mapping(std::span<const int> pred, const std::vector<int>& mapping) {
    std::vector<int> out(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int p = pred[i];
        if (p < 0 || static_cast<std::size_t>(p) > mapping.size()) throw DataError("cluster id outside the mapping");
        out[i] = p == 0 ? 0 : mapping[static_cast<std::size_t>(p - 1)];
    }
    return out;
}

EvalReport evaluate(std::span<const int> pred, const LabelMask& truth) {
    if (pred.size() != truth.size()) throw ConfigError("prediction and truth differ in size");
    const int k = truth.class_count();
    EvalReport r;
    r.class_count = k;
    r.mapping = hungarian_map(pred, truth.labels(), k);
    const auto mapped = apply_mapping(pred, r.mapping);
    r.confusion = contingency(truth.labels(), mapped, k);  // rows = truth
    for (std::size_t i = 0; i < mapped.size(); ++i) {
        if (truth.labels()[i] == 0) continue;
        if (mapped[i] == 0) throw DataError("prediction missing for a labeled truth pixel");
        ++r.evaluated;
    }
    if (r.evaluated == 0) throw DataError("ground truth has no labeled pixel");
    r.accuracy = r.confusion.trace() / static_cast<double>(r.evaluated);
    for (int c = 0; c < k; ++c) {
        const double tp = r.confusion(c, c);
        const double truth_total = r.confusion.row(c).sum();
        const double pred_total = r.confusion.col(c).sum();
        const double uni = truth_total + pred_total - tp;
        r.per_class_iou.push_back(uni > 0.0 ? tp / uni : 0.0);
        r.precision.push_back(pred_total > 0.0 ? tp / pred_total : 0.0);
        r.recall.push_back(truth_total > 0.0 ? tp / truth_total : 0.0);
    }
    double sum = 0.0;
    for (double v : r.per_class_iou) sum += v;
    r.mean_iou = sum / static_cast<double>(k);
    return r;
}

void write_class_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "class,iou,precision,recall\n";
    for (int c = 0; c < report.class_count; ++c) {
        const auto i = static_cast<std::size_t>(c);
        out << c + 1 << ',' << fixed(report.per_class_iou[i]) << ',' << fixed(report.precision[i]) << ','
            << fixed(report.recall[i]) << '\n';
    }
    write_text(path, out.str());
}

void write_confusion_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "truth";
    for (int c = 1; c <= report.class_count; ++c) out << ",pred_" << c;
    out << '\n';
    for (int t = 0; t < report.class_count; ++t) {
        out << t + 1;
        for (int c = 0; c < report.class_count; ++c) {
            out << ',' << static_cast<std::uint64_t>(report.confusion(t, c));
        }
        out << '\n';
    }
    write_text(path, out.str());
}

std::string summary_text(const EvalReport& report) {
    std::ostringstream out;
    out << "evaluated_pixels: " << report.evaluated << '\n';
    out << "accuracy: " << fixed(report.accuracy) << '\n';
    out << "mean_iou: " << fixed(report.mean_iou) << '\n';
    out << "mapping:";
    for (std::size_t c = 0; c < report.mapping.size(); ++c) out << ' ' << c + 1 << "->" << report.mapping[c];
    out << '\n';
    for (int c = 0; c < report.class_count; ++c) {
        out << "class " << c + 1 << ": iou " << fixed(report.per_class_iou[static_cast<std::size_t>(c)])
            << " precision " << fixed(report.precision[static_cast<std::size_t>(c)]) << " recall "
            << fixed(report.recall[static_cast<std::size_t>(c)]) << '\n';
    }
    return out.str();
}

}  // namespace lcseg
