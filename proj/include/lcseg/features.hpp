#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lcseg/raster.hpp"

namespace lcseg {

/// Row-major real matrix; rows are pixels or samples.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr std::size_t kLbpBins = 59;
inline constexpr std::size_t kGlcmStats = 4;

enum class GlcmNormalization {
    Paper,        ///< Raw counts with the 1/L^2 and 1/L prefactors.
    Probability,  ///< Counts divided by their total, no prefactors.
};

struct GlcmOffset {
    int row = 0;
    int col = 1;
};

struct FeatureConfig {
    std::size_t cell_size = 7;      ///< N_c, odd
    std::size_t patch_size = 11;    ///< N_t, odd and > cell_size
    int glcm_levels = 8;            ///< L >= 2
    GlcmOffset glcm_offset{};       ///< nonzero
    GlcmNormalization glcm_normalization = GlcmNormalization::Paper;

    /// Throws ConfigError on violated invariants.
    void validate() const;

    std::size_t per_band_length() const { return cell_size * cell_size + kLbpBins + kGlcmStats; }
    /// Padding needed so every patch pixel has its own 8-neighbourhood.
    std::size_t margin() const;
};

/// A band extended by symmetric reflection; indexed in the coordinates of the
/// original (unpadded) band.
class PaddedBand {
public:
    PaddedBand(const Band& band, std::size_t margin);

    std::size_t margin() const noexcept { return margin_; }
    std::size_t height() const noexcept { return height_; }  ///< unpadded
    std::size_t width() const noexcept { return width_; }    ///< unpadded
    double at(long long row, long long col) const;
    const Band& padded() const noexcept { return padded_; }

private:
    Band padded_;
    std::size_t margin_;
    std::size_t height_;
    std::size_t width_;
};

/// N_c x N_c patch centred at (row, col), flattened row-major.
std::vector<double> cell_vector(const PaddedBand& band, std::size_t row, std::size_t col,
                                std::size_t cell_size);

/// 8-neighbour code; bit i-1 is set when neighbour i >= centre, with neighbours
/// ordered top, top-left, left, bottom-left, bottom, bottom-right, right, top-right.
std::uint8_t lbp_code(const PaddedBand& band, long long row, long long col);

/// Number of circular 0/1 transitions in an 8-bit code.
int circular_transitions(std::uint8_t code);

/// Histogram bin for each of the 256 codes: uniform codes (<= 2 transitions)
/// get bins 0..57 in ascending code order, every other code maps to bin 58.
const std::array<std::uint8_t, 256>& uniform_lbp_bins();

std::array<double, kLbpBins> uniform_lbp_histogram(const PaddedBand& band, std::size_t row,
                                                   std::size_t col, std::size_t patch_size);

/// Square integer patch of gray levels 1..L, row-major.
struct LevelPatch {
    std::size_t size = 0;
    std::vector<int> levels;

    int at(long long row, long long col) const {
        return levels[static_cast<std::size_t>(row) * size + static_cast<std::size_t>(col)];
    }
};

/// Level of one value: 1 + floor(L (v - min) / (max - min)) clamped to [1, L];
/// everything maps to level 1 when max == min.
int quantize_value(double value, int levels, double band_min, double band_max);

LevelPatch quantize_patch(std::span<const double> patch, std::size_t size, int levels,
                          double band_min, double band_max);

/// L x L co-occurrence counts; entry (i-1, j-1) counts level i followed by level j
/// at the offset. Pairs leaving the patch are skipped.
Eigen::MatrixXd glcm(const LevelPatch& patch, int levels, GlcmOffset offset);

/// Contrast, correlation, energy, homogeneity.
std::array<double, kGlcmStats> glcm_stats(const Eigen::MatrixXd& counts,
                                          GlcmNormalization mode = GlcmNormalization::Paper);

/// Per-pixel multi-feature matrix: rows follow row-major pixel order, columns
/// are [cell | LBP histogram | GLCM statistics] per band, bands in order.
Matrix assemble_features(const MultiBandImage& image, const FeatureConfig& config = {});

/// "LSX1" header, u32 N, u32 n, then N*n little-endian float32 row-major.
void save_feature_matrix(const Matrix& features, const std::filesystem::path& path);
Matrix load_feature_matrix(const std::filesystem::path& path);

}  // namespace lcseg
