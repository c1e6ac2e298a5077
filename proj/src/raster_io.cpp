#include "lcseg/raster_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <csetjmp>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <vector>

#include "lcseg/error.hpp"

namespace lcseg {
namespace {

struct RawRaster {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;
};

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open raster '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for '" + path.string() + "'");
}

std::uint32_t read_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void append_u32_le(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

// ---- PGM ------------------------------------------------------------------

RawRaster decode_pgm(const std::vector<unsigned char>& bytes, const std::string& label) {
    std::size_t pos = 0;
    auto next_token = [&]() -> std::string {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        std::string tok;
        while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') {
            tok.push_back(static_cast<char>(bytes[pos++]));
        }
        return tok;
    };
    if (next_token() != "P5") throw DataError("'" + label + "' is not a binary PGM (P5)");
    std::size_t w = 0, h = 0;
    unsigned long maxval = 0;
    try {
        w = std::stoul(next_token());
        h = std::stoul(next_token());
        maxval = std::stoul(next_token());
    } catch (const std::exception&) {
        throw DataError("malformed PGM header in '" + label + "'");
    }
    if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) {
        throw DataError("unsupported PGM header in '" + label + "'");
    }
    ++pos;  // single whitespace after maxval
    const std::size_t bytes_per_sample = maxval < 256 ? 1 : 2;
    const std::size_t need = w * h * bytes_per_sample;
    if (pos > bytes.size() || bytes.size() - pos < need) throw DataError("truncated raster");
    RawRaster r{h, w, std::vector<double>(w * h)};
    for (std::size_t i = 0; i < w * h; ++i) {
        if (bytes_per_sample == 1) {
            r.values[i] = bytes[pos + i];
        } else {
            r.values[i] = (bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1];
        }
    }
    return r;
}

std::vector<unsigned char> encode_pgm(std::span<const double> values, Dimensions dims,
                                      bool sixteen_bit) {
    const std::string header = "P5\n" + std::to_string(dims.width) + " " +
                               std::to_string(dims.height) + "\n" +
                               (sixteen_bit ? "65535" : "255") + "\n";
    std::vector<unsigned char> out(header.begin(), header.end());
    for (double v : values) {
        const auto s = static_cast<std::uint32_t>(v);
        if (sixteen_bit) out.push_back(static_cast<unsigned char>(s >> 8));
        out.push_back(static_cast<unsigned char>(s & 0xffu));
    }
    return out;
}

// ---- PNG ------------------------------------------------------------------
// libpng reports errors through longjmp, so the frames that call it only hold
// trivially destructible locals; buffers live in caller-owned structs.

struct PngError {
    char message[160] = "PNG error";
};

void png_error_fn(png_structp png, png_const_charp msg) {
    auto* err = static_cast<PngError*>(png_get_error_ptr(png));
    std::snprintf(err->message, sizeof err->message, "%s", msg);
    png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

struct PngSource {
    const std::vector<unsigned char>* bytes;
    std::size_t pos;
};

void png_read_callback(png_structp png, png_bytep out, png_size_t count) {
    auto* src = static_cast<PngSource*>(png_get_io_ptr(png));
    if (src->pos + count > src->bytes->size()) png_error(png, "truncated raster");
    std::memcpy(out, src->bytes->data() + src->pos, count);
    src->pos += count;
}

void png_write_callback(png_structp png, png_bytep data, png_size_t count) {
    auto* out = static_cast<std::vector<unsigned char>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + count);
}

void png_flush_callback(png_structp) {}

struct PngPixels {
    png_uint_32 width = 0;
    png_uint_32 height = 0;
    int depth = 0;
    bool gray = false;
    std::size_t rowbytes = 0;
    std::vector<unsigned char> pixels;
    std::vector<png_bytep> rows;
};

bool png_decode_into(const std::vector<unsigned char>* bytes, PngPixels* out, PngError* err) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, err, png_error_fn, png_warning_fn);
    if (png == nullptr) return false;
    png_infop info = png_create_info_struct(png);
    PngSource src{bytes, 0};
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    png_set_read_fn(png, &src, png_read_callback);
    png_read_info(png, info);
    out->width = png_get_image_width(png, info);
    out->height = png_get_image_height(png, info);
    out->depth = png_get_bit_depth(png, info);
    out->gray = png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY;
    if (!out->gray) {
        png_destroy_read_struct(&png, &info, nullptr);
        return true;
    }
    if (out->depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    out->rowbytes = png_get_rowbytes(png, info);
    out->pixels.resize(out->rowbytes * out->height);
    out->rows.resize(out->height);
    for (png_uint_32 r = 0; r < out->height; ++r) out->rows[r] = out->pixels.data() + r * out->rowbytes;
    png_read_image(png, out->rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

bool png_encode_into(const std::vector<unsigned char>* pixels, Dimensions dims, int depth,
                     std::vector<unsigned char>* out, PngError* err) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, err, png_error_fn, png_warning_fn);
    if (png == nullptr) return false;
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    png_set_write_fn(png, out, png_write_callback, png_flush_callback);
    png_set_IHDR(png, info, static_cast<png_uint_32>(dims.width), static_cast<png_uint_32>(dims.height),
                 depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t rowbytes = dims.width * static_cast<std::size_t>(depth / 8);
    for (std::size_t r = 0; r < dims.height; ++r) {
        png_write_row(png, pixels->data() + r * rowbytes);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

RawRaster decode_png(const std::vector<unsigned char>& bytes, const std::string& label) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw DataError("'" + label + "' is not a PNG file");
    }
    PngPixels img;
    PngError err;
    if (!png_decode_into(&bytes, &img, &err)) {
        throw DataError("'" + label + "': " + err.message);
    }
    if (!img.gray) throw DataError("'" + label + "' is not a grayscale PNG");
    const std::size_t w = img.width;
    const std::size_t h = img.height;
    RawRaster out{h, w, std::vector<double>(w * h)};
    for (std::size_t r = 0; r < h; ++r) {
        const unsigned char* row = img.rows[r];
        for (std::size_t c = 0; c < w; ++c) {
            out.values[r * w + c] = img.depth == 16 ? (row[2 * c] << 8) | row[2 * c + 1] : row[c];
        }
    }
    return out;
}

std::vector<unsigned char> encode_png(std::span<const double> values, Dimensions dims,
                                      bool sixteen_bit) {
    std::vector<unsigned char> pixels;
    pixels.reserve(values.size() * (sixteen_bit ? 2 : 1));
    for (double v : values) {
        const auto s = static_cast<std::uint32_t>(v);
        if (sixteen_bit) pixels.push_back(static_cast<unsigned char>(s >> 8));
        pixels.push_back(static_cast<unsigned char>(s & 0xffu));
    }
    std::vector<unsigned char> out;
    PngError err;
    if (!png_encode_into(&pixels, dims, sixteen_bit ? 16 : 8, &out, &err)) {
        throw DataError(std::string("PNG encoding failed: ") + err.message);
    }
    return out;
}

// ---- float32 --------------------------------------------------------------

constexpr std::array<char, 4> kFloatMagic{'L', 'S', 'F', '1'};

RawRaster decode_float32(const std::vector<unsigned char>& bytes, const std::string& label) {
    if (bytes.size() < 16 || !std::equal(kFloatMagic.begin(), kFloatMagic.end(), bytes.begin())) {
        throw DataError("'" + label + "' lacks the LSF1 header");
    }
    const std::size_t h = read_u32_le(bytes.data() + 4);
    const std::size_t w = read_u32_le(bytes.data() + 8);
    if (h == 0 || w == 0) throw DataError("'" + label + "' declares empty dimensions");
    if (bytes.size() - 16 < h * w * 4) throw DataError("truncated raster");
    RawRaster r{h, w, std::vector<double>(h * w)};
    for (std::size_t i = 0; i < h * w; ++i) {
        const std::uint32_t bits = read_u32_le(bytes.data() + 16 + 4 * i);
        r.values[i] = std::bit_cast<float>(bits);
    }
    return r;
}

std::vector<unsigned char> encode_float32(std::span<const double> values, Dimensions dims) {
    std::vector<unsigned char> out(kFloatMagic.begin(), kFloatMagic.end());
    append_u32_le(out, static_cast<std::uint32_t>(dims.height));
    append_u32_le(out, static_cast<std::uint32_t>(dims.width));
    append_u32_le(out, 0);
    out.reserve(out.size() + 4 * values.size());
    for (double v : values) append_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    return out;
}

RawRaster decode(const std::filesystem::path& path, RasterFormat format) {
    if (format == RasterFormat::Auto) format = format_from_path(path);
    const auto bytes = read_file(path);
    const std::string label = path.string();
    switch (format) {
        case RasterFormat::Pgm: return decode_pgm(bytes, label);
        case RasterFormat::Png: return decode_png(bytes, label);
        default: return decode_float32(bytes, label);
    }
}

void check_expected(const RawRaster& r, std::optional<Dimensions> expected,
                    const std::filesystem::path& path) {
    if (expected && (expected->height != r.height || expected->width != r.width)) {
        throw DataError("'" + path.string() + "' is " + std::to_string(r.height) + "x" +
                        std::to_string(r.width) + ", expected " +
                        std::to_string(expected->height) + "x" + std::to_string(expected->width));
    }
}

bool integral_within(std::span<const double> values, double limit) {
    return std::all_of(values.begin(), values.end(), [limit](double v) {
        return v >= 0.0 && v <= limit && std::floor(v) == v;
    });
}

std::vector<unsigned char> encode_integer(std::span<const double> values, Dimensions dims,
                                          RasterFormat format, const std::string& label) {
    bool sixteen = false;
    if (!integral_within(values, 255.0)) {
        if (!integral_within(values, 65535.0)) {
            throw DataError("'" + label + "' needs the float32 format (non-integer or out of range)");
        }
        sixteen = true;
    }
    return format == RasterFormat::Png ? encode_png(values, dims, sixteen)
                                       : encode_pgm(values, dims, sixteen);
}

}  // namespace

RasterFormat format_from_path(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".pgm") return RasterFormat::Pgm;
    if (ext == ".png") return RasterFormat::Png;
    return RasterFormat::Float32;
}

Band load_band(const std::filesystem::path& path, RasterFormat format,
               std::optional<Dimensions> expected, std::string name) {
    auto raw = decode(path, format);
    check_expected(raw, expected, path);
    if (name.empty()) name = path.stem().string();
    return Band(raw.height, raw.width, std::move(raw.values), std::move(name));
}

void save_band(const Band& band, const std::filesystem::path& path, RasterFormat format) {
    if (format == RasterFormat::Auto) format = format_from_path(path);
    const Dimensions dims{band.height(), band.width()};
    if (format == RasterFormat::Float32) {
        write_file(path, encode_float32(band.values(), dims));
    } else {
        write_file(path, encode_integer(band.values(), dims, format, path.string()));
    }
}

LabelMask load_mask(const std::filesystem::path& path, int class_count,
                    std::optional<Dimensions> expected) {
    const auto format = format_from_path(path);
    if (format == RasterFormat::Float32) {
        throw DataError("label mask '" + path.string() + "' must be PGM or PNG");
    }
    auto raw = decode(path, format);
    check_expected(raw, expected, path);
    std::vector<int> labels(raw.values.size());
    std::transform(raw.values.begin(), raw.values.end(), labels.begin(),
                   [](double v) { return static_cast<int>(v); });
    return LabelMask(raw.height, raw.width, std::move(labels), class_count);
}

void save_label_map(std::span<const int> labels, Dimensions dims,
                    const std::filesystem::path& path) {
    if (labels.size() != dims.height * dims.width) {
        throw DataError("label map size does not match its dimensions");
    }
    const auto format = format_from_path(path);
    if (format == RasterFormat::Float32) {
        throw DataError("label map '" + path.string() + "' must be PGM or PNG");
    }
    std::vector<double> values(labels.begin(), labels.end());
    if (!integral_within(values, 255.0)) throw DataError("label map values exceed 8 bits");
    write_file(path, format == RasterFormat::Png ? encode_png(values, dims, false)
                                                 : encode_pgm(values, dims, false));
}

}  // namespace lcseg
