#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "lcseg/raster.hpp"

namespace lcseg {

enum class RasterFormat {
    Auto,     ///< Chosen from the file extension (.pgm, .png, anything else = float32).
    Pgm,      ///< Binary P5, 8 or 16 bit.
    Png,      ///< Grayscale PNG, 8 or 16 bit.
    Float32,  ///< "LSF1" header, then little-endian float32 samples row-major.
};

struct Dimensions {
    std::size_t height = 0;
    std::size_t width = 0;

    bool operator==(const Dimensions&) const = default;
};

RasterFormat format_from_path(const std::filesystem::path& path);

/// Integer rasters keep their raw intensities (no rescaling).
Band load_band(const std::filesystem::path& path, RasterFormat format = RasterFormat::Auto,
               std::optional<Dimensions> expected = std::nullopt, std::string name = {});

/// PGM/PNG output is 8-bit when every value is an integer in [0, 255], 16-bit when
/// every value is an integer in [0, 65535]; other bands need the float32 format.
void save_band(const Band& band, const std::filesystem::path& path,
               RasterFormat format = RasterFormat::Auto);

/// 8-bit mask: 0 = unlabeled, k = class k. Values above class_count are rejected.
LabelMask load_mask(const std::filesystem::path& path, int class_count,
                    std::optional<Dimensions> expected = std::nullopt);

/// Writes labels (0..255) as an 8-bit PGM or PNG chosen by extension.
void save_label_map(std::span<const int> labels, Dimensions dims,
                    const std::filesystem::path& path);

}  // namespace lcseg
