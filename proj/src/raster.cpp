#include "lcseg/raster.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lcseg/error.hpp"

namespace lcseg {

Band::Band(std::size_t height, std::size_t width, std::vector<double> values, std::string name)
    : height_(height), width_(width), values_(std::move(values)), name_(std::move(name)) {
    if (height_ == 0 || width_ == 0) {
        throw DataError("band '" + name_ + "' has empty dimensions");
    }
    if (values_.size() != height_ * width_) {
        throw DataError("band '" + name_ + "' holds " + std::to_string(values_.size()) +
                        " values for " + std::to_string(height_) + "x" + std::to_string(width_));
    }
    if (!std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); })) {
        throw DataError("band '" + name_ + "' contains non-finite values");
    }
}

Band Band::filled(std::size_t height, std::size_t width, double value, std::string name) {
    return Band(height, width, std::vector<double>(height * width, value), std::move(name));
}

double Band::min_value() const { return *std::min_element(values_.begin(), values_.end()); }

double Band::max_value() const { return *std::max_element(values_.begin(), values_.end()); }

MultiBandImage::MultiBandImage(std::vector<Band> bands) : bands_(std::move(bands)) {
    if (bands_.empty()) {
        throw DataError("multi-band image needs at least one band");
    }
    for (const auto& b : bands_) {
        if (b.height() != bands_.front().height() || b.width() != bands_.front().width()) {
            throw DataError("band '" + b.name() + "' dimensions differ from band '" +
                            bands_.front().name() + "'");
        }
    }
}

MultiBandImage MultiBandImage::with_band(Band band) const {
    auto bands = bands_;
    bands.push_back(std::move(band));
    return MultiBandImage(std::move(bands));
}

LabelMask::LabelMask(std::size_t height, std::size_t width, std::vector<int> labels, int class_count)
    : height_(height), width_(width), labels_(std::move(labels)), class_count_(class_count) {
    if (labels_.size() != height_ * width_) {
        throw DataError("label mask size does not match its dimensions");
    }
    if (class_count_ < 1) {
        throw ConfigError("label mask needs at least one class");
    }
    for (int v : labels_) {
        if (v < 0 || v > class_count_) {
            throw DataError("label " + std::to_string(v) + " outside 0.." +
                            std::to_string(class_count_));
        }
    }
}

std::size_t LabelMask::labeled_count() const {
    return static_cast<std::size_t>(
        std::count_if(labels_.begin(), labels_.end(), [](int v) { return v != 0; }));
}

void LabelMask::require_all_classes() const {
    std::vector<bool> seen(static_cast<std::size_t>(class_count_) + 1, false);
    for (int v : labels_) seen[static_cast<std::size_t>(v)] = true;
    for (int k = 1; k <= class_count_; ++k) {
        if (!seen[static_cast<std::size_t>(k)]) {
            throw DataError("class " + std::to_string(k) + " has no pixel in the mask");
        }
    }
}

TileLayout::TileLayout(std::size_t image_height, std::size_t image_width, std::size_t tile_height,
                       std::size_t tile_width)
    : image_height_(image_height),
      image_width_(image_width),
      tile_height_(tile_height),
      tile_width_(tile_width) {
    if (image_height == 0 || image_width == 0 || tile_height == 0 || tile_width == 0) {
        throw ConfigError("tile layout needs positive image and tile dimensions");
    }
    for (std::size_t r = 0; r < image_height; r += tile_height) {
        for (std::size_t c = 0; c < image_width; c += tile_width) {
            tiles_.push_back({r, c, std::min(tile_height, image_height - r),
                              std::min(tile_width, image_width - c)});
        }
    }
}

Band derive_ndvi(const Band& ir, const Band& red) {
    if (ir.height() != red.height() || ir.width() != red.width()) {
        throw DataError("NDVI inputs differ in dimensions");
    }
    std::vector<double> out(ir.size());
    auto a = ir.values();
    auto b = red.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double sum = a[i] + b[i];
        out[i] = sum == 0.0 ? 0.0 : (a[i] - b[i]) / sum;
    }
    return Band(ir.height(), ir.width(), std::move(out), "NDVI");
}

std::size_t reflect_index(long long index, std::size_t extent) {
    const auto n = static_cast<long long>(extent);
    const long long period = 2 * n;
    long long m = index % period;
    if (m < 0) m += period;
    return static_cast<std::size_t>(m < n ? m : period - 1 - m);
}

Band symmetric_extend(const Band& band, std::size_t margin) {
    const std::size_t h = band.height() + 2 * margin;
    const std::size_t w = band.width() + 2 * margin;
    const auto off = static_cast<long long>(margin);
    std::vector<double> out(h * w);
    for (std::size_t r = 0; r < h; ++r) {
        const std::size_t sr = reflect_index(static_cast<long long>(r) - off, band.height());
        for (std::size_t c = 0; c < w; ++c) {
            const std::size_t sc = reflect_index(static_cast<long long>(c) - off, band.width());
            out[r * w + c] = band.at(sr, sc);
        }
    }
    return Band(h, w, std::move(out), band.name());
}

Band mirror_pad(const Band& band, std::size_t margin) {
    if (margin == 0) {
        throw ConfigError("mirror padding margin must be at least 1");
    }
    if (margin >= std::min(band.height(), band.width())) {
        throw ConfigError("mirror padding margin " + std::to_string(margin) +
                          " too large for a " + std::to_string(band.height()) + "x" +
                          std::to_string(band.width()) + " band");
    }
    return symmetric_extend(band, margin);
}

Band crop(const Band& band, const TileRegion& region) {
    if (region.row + region.height > band.height() || region.col + region.width > band.width()) {
        throw DataError("crop region exceeds band");
    }
    std::vector<double> out;
    out.reserve(region.height * region.width);
    for (std::size_t r = 0; r < region.height; ++r) {
        for (std::size_t c = 0; c < region.width; ++c) {
            out.push_back(band.at(region.row + r, region.col + c));
        }
    }
    return Band(region.height, region.width, std::move(out), band.name());
}

std::vector<ImageTile> split_tiles(const MultiBandImage& image, const LabelMask& mask,
                                   const TileLayout& layout) {
    if (layout.image_height() != image.height() || layout.image_width() != image.width() ||
        mask.height() != image.height() || mask.width() != image.width()) {
        throw DataError("tile layout, image and mask dimensions disagree");
    }
    std::vector<ImageTile> tiles;
    tiles.reserve(layout.tiles().size());
    for (const auto& region : layout.tiles()) {
        std::vector<Band> bands;
        for (const auto& b : image.bands()) bands.push_back(crop(b, region));
        std::vector<int> labels;
        labels.reserve(region.height * region.width);
        for (std::size_t r = 0; r < region.height; ++r) {
            for (std::size_t c = 0; c < region.width; ++c) {
                labels.push_back(mask.at(region.row + r, region.col + c));
            }
        }
        tiles.push_back({region, MultiBandImage(std::move(bands)),
                         LabelMask(region.height, region.width, std::move(labels),
                                   mask.class_count())});
    }
    return tiles;
}

LabelMask merge_tiles(const std::vector<TileLabels>& tiles, std::size_t height, std::size_t width,
                      int class_count) {
    std::vector<int> labels(height * width, 0);
    std::vector<bool> covered(height * width, false);
    for (const auto& tile : tiles) {
        const auto& g = tile.region;
        if (g.row + g.height > height || g.col + g.width > width) {
            throw DataError("tile exceeds merged raster");
        }
        if (tile.labels.size() != g.height * g.width) {
            throw DataError("tile label count does not match its region");
        }
        for (std::size_t r = 0; r < g.height; ++r) {
            for (std::size_t c = 0; c < g.width; ++c) {
                const std::size_t idx = (g.row + r) * width + g.col + c;
                if (covered[idx]) throw DataError("overlapping tiles");
                covered[idx] = true;
                labels[idx] = tile.labels[r * g.width + c];
            }
        }
    }
    if (std::find(covered.begin(), covered.end(), false) != covered.end()) {
        throw DataError("uncovered pixel");
    }
    return LabelMask(height, width, std::move(labels), class_count);
}

}  // namespace lcseg
