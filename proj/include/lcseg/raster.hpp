#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace lcseg {

/// One co-registered grayscale channel, stored row-major.
class Band {
public:
    Band() = default;
    /// Throws DataError when the value count does not match the dimensions,
    /// the dimensions are empty, or a value is not finite.
    Band(std::size_t height, std::size_t width, std::vector<double> values, std::string name = {});

    static Band filled(std::size_t height, std::size_t width, double value, std::string name = {});

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return values_.size(); }
    const std::string& name() const noexcept { return name_; }

    double at(std::size_t row, std::size_t col) const { return values_[row * width_ + col]; }
    std::span<const double> values() const noexcept { return values_; }

    double min_value() const;
    double max_value() const;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> values_;
    std::string name_;
};

/// Ordered stack of bands sharing the same height and width.
class MultiBandImage {
public:
    MultiBandImage() = default;
    explicit MultiBandImage(std::vector<Band> bands);

    std::size_t height() const noexcept { return bands_.empty() ? 0 : bands_.front().height(); }
    std::size_t width() const noexcept { return bands_.empty() ? 0 : bands_.front().width(); }
    std::size_t band_count() const noexcept { return bands_.size(); }
    std::size_t pixel_count() const noexcept { return height() * width(); }

    const Band& band(std::size_t index) const { return bands_.at(index); }
    const std::vector<Band>& bands() const noexcept { return bands_; }

    /// Returns a copy with `band` appended; the dimensions must agree.
    MultiBandImage with_band(Band band) const;

private:
    std::vector<Band> bands_;
};

/// Per-pixel class labels: 0 = unlabeled, 1..K = class id.
class LabelMask {
public:
    LabelMask() = default;
    LabelMask(std::size_t height, std::size_t width, std::vector<int> labels, int class_count);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return labels_.size(); }
    int class_count() const noexcept { return class_count_; }

    int at(std::size_t row, std::size_t col) const { return labels_[row * width_ + col]; }
    std::span<const int> labels() const noexcept { return labels_; }

    std::size_t labeled_count() const;
    /// Throws DataError unless every class 1..K has at least one pixel.
    void require_all_classes() const;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<int> labels_;
    int class_count_ = 0;
};

/// Rectangular region of a larger raster.
struct TileRegion {
    std::size_t row = 0;
    std::size_t col = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    bool operator==(const TileRegion&) const = default;
};

/// Exact partition of an H x W raster into tiles; edge tiles may be smaller.
class TileLayout {
public:
    TileLayout(std::size_t image_height, std::size_t image_width, std::size_t tile_height,
               std::size_t tile_width);

    std::size_t image_height() const noexcept { return image_height_; }
    std::size_t image_width() const noexcept { return image_width_; }
    std::size_t tile_height() const noexcept { return tile_height_; }
    std::size_t tile_width() const noexcept { return tile_width_; }
    const std::vector<TileRegion>& tiles() const noexcept { return tiles_; }

private:
    std::size_t image_height_;
    std::size_t image_width_;
    std::size_t tile_height_;
    std::size_t tile_width_;
    std::vector<TileRegion> tiles_;
};

struct ImageTile {
    TileRegion region;
    MultiBandImage image;
    LabelMask mask;
};

/// Labels predicted for one tile, already expressed in the global class ids.
struct TileLabels {
    TileRegion region;
    std::vector<int> labels;
};

/// NDVI = (IR - R) / (IR + R), 0 where IR + R == 0.
Band derive_ndvi(const Band& ir, const Band& red);

/// Edge-inclusive symmetric padding: the outside mirrors the image about its
/// boundary, so the first padded row equals the first image row.
/// Requires 1 <= margin < min(H, W).
Band mirror_pad(const Band& band, std::size_t margin);

/// Same reflection as mirror_pad without the margin limit; the reflection is
/// applied repeatedly when the margin exceeds the image size.
Band symmetric_extend(const Band& band, std::size_t margin);

/// Maps a possibly out-of-range coordinate onto [0, extent) under the
/// edge-inclusive symmetric reflection.
std::size_t reflect_index(long long index, std::size_t extent);

Band crop(const Band& band, const TileRegion& region);

std::vector<ImageTile> split_tiles(const MultiBandImage& image, const LabelMask& mask,
                                   const TileLayout& layout);

/// Throws DataError("uncovered pixel") or DataError("overlapping tiles").
LabelMask merge_tiles(const std::vector<TileLabels>& tiles, std::size_t height, std::size_t width,
                      int class_count);

}  // namespace lcseg
