#include "lcseg/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "binary_matrix.hpp"
#include "lcseg/error.hpp"

namespace lcseg {
namespace {

constexpr std::array<char, 4> kFeatureMagic{'L', 'S', 'X', '1'};

// Neighbour i = 1..8 as (row, col) offsets: top, top-left, left, bottom-left,
// bottom, bottom-right, right, top-right (anti-clockwise).
constexpr std::array<std::array<int, 2>, 8> kNeighbours{{
    {-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1},
}};

std::array<std::uint8_t, 256> build_uniform_bins() {
    std::array<std::uint8_t, 256> bins{};
    std::uint8_t next = 0;
    for (int code = 0; code < 256; ++code) {
        if (circular_transitions(static_cast<std::uint8_t>(code)) <= 2) {
            bins[static_cast<std::size_t>(code)] = next++;
        } else {
            bins[static_cast<std::size_t>(code)] = static_cast<std::uint8_t>(kLbpBins - 1);
        }
    }
    return bins;
}

}  // namespace

void FeatureConfig::validate() const {
    if (cell_size % 2 == 0 || patch_size % 2 == 0) {
        throw ConfigError("cell and patch sizes must be odd");
    }
    if (patch_size <= cell_size) throw ConfigError("patch size must exceed cell size");
    if (glcm_levels < 2) throw ConfigError("GLCM needs at least two gray levels");
    if (glcm_offset.row == 0 && glcm_offset.col == 0) throw ConfigError("GLCM offset must be nonzero");
    if (static_cast<std::size_t>(std::abs(glcm_offset.row)) >= patch_size ||
        static_cast<std::size_t>(std::abs(glcm_offset.col)) >= patch_size) {
        throw ConfigError("GLCM offset does not fit inside the patch");
    }
}

std::size_t FeatureConfig::margin() const {
    return std::max((cell_size - 1) / 2, (patch_size - 1) / 2 + 1);
}

PaddedBand::PaddedBand(const Band& band, std::size_t margin)
    : padded_(symmetric_extend(band, margin)),
      margin_(margin),
      height_(band.height()),
      width_(band.width()) {}

double PaddedBand::at(long long row, long long col) const {
    const long long m = static_cast<long long>(margin_);
    if (row < -m || col < -m || row >= static_cast<long long>(height_) + m ||
        col >= static_cast<long long>(width_) + m) {
        throw ConfigError("pixel (" + std::to_string(row) + "," + std::to_string(col) +
                          ") outside the padded band");
    }
    return padded_.at(static_cast<std::size_t>(row + m), static_cast<std::size_t>(col + m));
}

std::vector<double> cell_vector(const PaddedBand& band, std::size_t row, std::size_t col,
                                std::size_t cell_size) {
    if (row >= band.height() || col >= band.width()) {
        throw ConfigError("cell centre outside the image");
    }
    const long long half = static_cast<long long>(cell_size / 2);
    std::vector<double> out;
    out.reserve(cell_size * cell_size);
    for (long long dr = -half; dr <= half; ++dr) {
        for (long long dc = -half; dc <= half; ++dc) {
            out.push_back(band.at(static_cast<long long>(row) + dr, static_cast<long long>(col) + dc));
        }
    }
    return out;
}

std::uint8_t lbp_code(const PaddedBand& band, long long row, long long col) {
    const double centre = band.at(row, col);
    unsigned code = 0;
    for (std::size_t i = 0; i < kNeighbours.size(); ++i) {
        if (band.at(row + kNeighbours[i][0], col + kNeighbours[i][1]) >= centre) code |= 1u << i;
    }
    return static_cast<std::uint8_t>(code);
}

int circular_transitions(std::uint8_t code) {
    const auto rotated = static_cast<std::uint8_t>((code >> 1) | (code << 7));
    return std::popcount(static_cast<unsigned>(code ^ rotated));
}

const std::array<std::uint8_t, 256>& uniform_lbp_bins() {
    static const auto bins = build_uniform_bins();
    return bins;
}

std::array<double, kLbpBins> uniform_lbp_histogram(const PaddedBand& band, std::size_t row,
                                                   std::size_t col, std::size_t patch_size) {
    const auto& bins = uniform_lbp_bins();
    const long long half = static_cast<long long>(patch_size / 2);
    std::array<double, kLbpBins> hist{};
    for (long long dr = -half; dr <= half; ++dr) {
        for (long long dc = -half; dc <= half; ++dc) {
            const auto code = lbp_code(band, static_cast<long long>(row) + dr,
                                       static_cast<long long>(col) + dc);
            hist[bins[code]] += 1.0;
        }
    }
    return hist;
}

int quantize_value(double value, int levels, double band_min, double band_max) {
    if (!(band_max > band_min)) return 1;
    const double scaled = std::floor(levels * (value - band_min) / (band_max - band_min));
    return std::clamp(1 + static_cast<int>(scaled), 1, levels);
}

LevelPatch quantize_patch(std::span<const double> patch, std::size_t size, int levels,
                          double band_min, double band_max) {
    if (patch.size() != size * size) throw ConfigError("patch is not square");
    LevelPatch out{size, std::vector<int>(patch.size())};
    std::transform(patch.begin(), patch.end(), out.levels.begin(),
                   [&](double v) { return quantize_value(v, levels, band_min, band_max); });
    return out;
}

Eigen::MatrixXd glcm(const LevelPatch& patch, int levels, GlcmOffset offset) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(levels, levels);
    const auto n = static_cast<long long>(patch.size);
    for (long long r = 0; r < n; ++r) {
        const long long r2 = r + offset.row;
        if (r2 < 0 || r2 >= n) continue;
        for (long long c = 0; c < n; ++c) {
            const long long c2 = c + offset.col;
            if (c2 < 0 || c2 >= n) continue;
            g(patch.at(r, c) - 1, patch.at(r2, c2) - 1) += 1.0;
        }
    }
    return g;
}

std::array<double, kGlcmStats> glcm_stats(const Eigen::MatrixXd& counts, GlcmNormalization mode) {
    const double total = counts.sum();
    if (total == 0.0) return {0.0, 0.0, 0.0, 0.0};

    const auto levels = counts.rows();
    const double l = static_cast<double>(levels);
    const bool paper = mode == GlcmNormalization::Paper;
    const Eigen::MatrixXd g = paper ? counts : Eigen::MatrixXd(counts / total);
    const double scale = paper ? 1.0 / (l * l) : 1.0;
    const double sigma_scale = paper ? 1.0 / l : 1.0;

    // Levels are 1-based.
    const Eigen::VectorXd row_marginal = g.rowwise().sum();
    const Eigen::VectorXd col_marginal = g.colwise().sum().transpose();
    const Eigen::VectorXd level = Eigen::VectorXd::LinSpaced(levels, 1.0, l);
    const double mu_r = scale * level.dot(row_marginal);
    const double mu_c = scale * level.dot(col_marginal);
    const double sigma_r =
        sigma_scale * std::sqrt((level.array() - mu_r).square().matrix().dot(row_marginal));
    const double sigma_c =
        sigma_scale * std::sqrt((level.array() - mu_c).square().matrix().dot(col_marginal));
    // A marginal concentrated on one level has zero spread; the raw-count
    // formulas do not centre on the true mean, so test the support as well.
    const bool degenerate = (row_marginal.array() > 0.0).count() <= 1 ||
                            (col_marginal.array() > 0.0).count() <= 1 || sigma_r * sigma_c == 0.0;

    double contrast = 0.0, correlation = 0.0, energy = 0.0, homogeneity = 0.0;
    for (Eigen::Index i = 0; i < levels; ++i) {
        for (Eigen::Index j = 0; j < levels; ++j) {
            const double v = g(i, j);
            if (v == 0.0) continue;
            const double d = std::abs(static_cast<double>(i - j));
            contrast += d * d * v;
            energy += v * v;
            homogeneity += v / (1.0 + d);
            if (!degenerate) {
                correlation += (level(i) - mu_r) * (level(j) - mu_c) * v / (sigma_r * sigma_c);
            }
        }
    }
    return {scale * contrast, scale * correlation, scale * energy, scale * homogeneity};
}

Matrix assemble_features(const MultiBandImage& image, const FeatureConfig& config) {
    config.validate();
    if (image.band_count() == 0) throw DataError("image has no bands");
    const std::size_t h = image.height();
    const std::size_t w = image.width();
    const std::size_t per_band = config.per_band_length();
    const std::size_t margin = config.margin();
    const long long cell_half = static_cast<long long>(config.cell_size / 2);
    const long long patch_half = static_cast<long long>(config.patch_size / 2);
    const auto& bins = uniform_lbp_bins();

    Matrix features(static_cast<Eigen::Index>(h * w),
                    static_cast<Eigen::Index>(per_band * image.band_count()));

    for (std::size_t b = 0; b < image.band_count(); ++b) {
        const Band& band = image.band(b);
        const PaddedBand padded(band, margin);
        const double lo = band.min_value();
        const double hi = band.max_value();

        // LBP bins and gray levels over the region every patch can reach.
        const std::size_t ext = static_cast<std::size_t>(patch_half);
        const std::size_t eh = h + 2 * ext;
        const std::size_t ew = w + 2 * ext;
        std::vector<std::uint8_t> bin_map(eh * ew);
        std::vector<int> level_map(eh * ew);
        for (std::size_t r = 0; r < eh; ++r) {
            for (std::size_t c = 0; c < ew; ++c) {
                const long long pr = static_cast<long long>(r) - patch_half;
                const long long pc = static_cast<long long>(c) - patch_half;
                bin_map[r * ew + c] = bins[lbp_code(padded, pr, pc)];
                level_map[r * ew + c] =
                    quantize_value(padded.at(pr, pc), config.glcm_levels, lo, hi);
            }
        }

        const Eigen::Index col0 = static_cast<Eigen::Index>(b * per_band);
#pragma omp parallel for schedule(static)
        for (long long r = 0; r < static_cast<long long>(h); ++r) {
            LevelPatch patch{config.patch_size, std::vector<int>(config.patch_size * config.patch_size)};
            for (long long c = 0; c < static_cast<long long>(w); ++c) {
                auto row = features.row(r * static_cast<long long>(w) + c);
                Eigen::Index k = col0;
                for (long long dr = -cell_half; dr <= cell_half; ++dr) {
                    for (long long dc = -cell_half; dc <= cell_half; ++dc) {
                        row(k++) = padded.at(r + dr, c + dc);
                    }
                }
                std::array<double, kLbpBins> hist{};
                std::size_t p = 0;
                for (long long dr = -patch_half; dr <= patch_half; ++dr) {
                    const std::size_t mr = static_cast<std::size_t>(r + patch_half + dr);
                    for (long long dc = -patch_half; dc <= patch_half; ++dc) {
                        const std::size_t idx = mr * ew + static_cast<std::size_t>(c + patch_half + dc);
                        hist[bin_map[idx]] += 1.0;
                        patch.levels[p++] = level_map[idx];
                    }
                }
                for (double v : hist) row(k++) = v;
                const auto stats = glcm_stats(glcm(patch, config.glcm_levels, config.glcm_offset),
                                              config.glcm_normalization);
                for (double v : stats) row(k++) = v;
            }
        }
    }
    return features;
}

void save_feature_matrix(const Matrix& features, const std::filesystem::path& path) {
    detail::save_float32_matrix(features, kFeatureMagic, path);
}

Matrix load_feature_matrix(const std::filesystem::path& path) {
    return detail::load_float32_matrix(kFeatureMagic, path);
}

}  // namespace lcseg
