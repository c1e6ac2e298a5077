#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lcseg/raster.hpp"

namespace lcseg {

/// Minimum-cost perfect matching of a square cost matrix (Kuhn-Munkres with
/// potentials, O(n^3)). Returns assignment[row] = column.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

/// K x K counts: rows = predicted cluster (1..K), columns = truth class (1..K).
/// Pixels whose truth or prediction is 0 are skipped.
Eigen::MatrixXd contingency(std::span<const int> pred, std::span<const int> truth, int class_count);

/// mapping[c - 1] = class assigned to cluster c, maximising total agreement.
std::vector<int> hungarian_map(std::span<const int> pred, std::span<const int> truth, int class_count);

struct EvalReport {
    int class_count = 0;
    std::vector<int> mapping;           ///< cluster -> class, 1-based values
    std::uint64_t evaluated = 0;        ///< pixels with truth != 0
    double accuracy = 0.0;
    Eigen::MatrixXd confusion;          ///< rows = truth, columns = mapped prediction
    std::vector<double> per_class_iou;  ///< 0 when union is empty
    std::vector<double> precision;
    std::vector<double> recall;
    double mean_iou = 0.0;
};

/// Maps `pred` with hungarian_map, then scores it against `truth` on pixels
/// with truth != 0. Throws DataError when no truth pixel is labeled.
EvalReport evaluate(std::span<const int> pred, const LabelMask& truth);

/// Applies a cluster -> class mapping; 0 stays 0.
std::vector<int> apply_mapping(std::span<const int> pred, const std::vector<int>& mapping);

/// class,iou,precision,recall (one row per class).
void write_class_csv(const EvalReport& report, const std::filesystem::path& path);
/// K x K confusion counts with a header row and a truth column.
void write_confusion_csv(const EvalReport& report, const std::filesystem::path& path);
std::string summary_text(const EvalReport& report);

}  // namespace lcseg
