#include <doctest.h>

#include <cstring>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "lcseg/error.hpp"
#include "lcseg/raster.hpp"
#include "lcseg/raster_io.hpp"

using namespace lcseg;
using lcseg::test::TempDir;

namespace {

Band grid(std::size_t h, std::size_t w, std::vector<double> v) { return Band(h, w, std::move(v)); }

std::vector<double> values_of(const Band& b) { return {b.values().begin(), b.values().end()}; }

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream f(p, std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Band random_band(std::size_t h, std::size_t w, std::uint64_t seed, double lo, double hi) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(h * w);
    for (auto& x : v) x = u(rng);
    return Band(h, w, std::move(v));
}

}  // namespace

TEST_CASE("band validation") {
    CHECK_THROWS_AS(Band(2, 2, {1, 2, 3}), DataError);
    CHECK_THROWS_AS(Band(0, 2, {}), DataError);
    CHECK_THROWS_AS(Band(1, 2, {1.0, std::nan("")}), DataError);
    CHECK_THROWS_AS(Band(1, 1, {INFINITY}), DataError);
    CHECK_THROWS_AS(MultiBandImage({Band::filled(2, 2, 0), Band::filled(2, 3, 0)}), DataError);
    CHECK_THROWS_AS(MultiBandImage(std::vector<Band>{}), DataError);
    CHECK_THROWS_AS(LabelMask(1, 2, {0, 3}, 2), DataError);
    const LabelMask mask(1, 3, {1, 0, 1}, 2);
    CHECK(mask.labeled_count() == 2);
    CHECK_THROWS_WITH_AS(mask.require_all_classes(), doctest::Contains("class 2"), DataError);
}

TEST_CASE("NDVI examples and range") {
    const Band ir = grid(1, 3, {0.8, 0.5, 0.0});
    const Band red = grid(1, 3, {0.2, 0.5, 0.0});
    const Band ndvi = derive_ndvi(ir, red);
    CHECK(ndvi.name() == "NDVI");
    CHECK(ndvi.at(0, 0) == doctest::Approx(0.6));
    CHECK(ndvi.at(0, 1) == 0.0);
    CHECK(ndvi.at(0, 2) == 0.0);
    CHECK_THROWS_AS(derive_ndvi(ir, Band::filled(3, 1, 1.0)), DataError);

    const Band a = random_band(20, 20, 1, 0.0, 300.0);
    const Band b = random_band(20, 20, 2, 0.0, 300.0);
    for (double v : derive_ndvi(a, b).values()) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("mirror_pad hand example and preconditions") {
    const Band b = grid(2, 2, {1, 2, 3, 4});
    const Band p = mirror_pad(b, 1);
    CHECK(p.height() == 4);
    CHECK(p.width() == 4);
    CHECK(values_of(p) == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
    CHECK_THROWS_AS(mirror_pad(b, 0), ConfigError);
    CHECK_THROWS_AS(mirror_pad(b, 2), ConfigError);
    const Band constant = mirror_pad(Band::filled(5, 4, 7.5), 3);
    for (double v : constant.values()) CHECK(v == 7.5);
}

TEST_CASE("mirror_pad reflection symmetry") {
    const Band b = random_band(7, 9, 3, 0, 1);
    const std::size_t m = 4;
    const Band p = mirror_pad(b, m);
    const auto h = static_cast<long long>(b.height());
    const auto w = static_cast<long long>(b.width());
    // Edge-inclusive mirror: outside index -1 - k equals inside k, and H + k equals H - 1 - k.
    for (long long r = -static_cast<long long>(m); r < h + static_cast<long long>(m); ++r) {
        for (long long c = -static_cast<long long>(m); c < w + static_cast<long long>(m); ++c) {
            const long long sr = r < 0 ? -1 - r : (r >= h ? 2 * h - 1 - r : r);
            const long long sc = c < 0 ? -1 - c : (c >= w ? 2 * w - 1 - c : c);
            REQUIRE(p.at(static_cast<std::size_t>(r + 4), static_cast<std::size_t>(c + 4)) ==
                    b.at(static_cast<std::size_t>(sr), static_cast<std::size_t>(sc)));
        }
    }
}

TEST_CASE("symmetric_extend allows margins beyond the image") {
    const Band one = grid(1, 1, {5});
    const Band e = symmetric_extend(one, 6);
    CHECK(e.height() == 13);
    for (double v : e.values()) CHECK(v == 5);
    const Band b = grid(1, 2, {1, 2});
    const Band e2 = symmetric_extend(b, 3);
    std::vector<double> row(e2.values().begin(), e2.values().begin() + 8);
    CHECK(row == std::vector<double>{2, 2, 1, 1, 2, 2, 1, 1});
    CHECK(reflect_index(-1, 3) == 0);
    CHECK(reflect_index(3, 3) == 2);
    CHECK(reflect_index(-7, 3) == 0);
}

TEST_CASE("split_tiles partitions") {
    const MultiBandImage img({Band::filled(400, 400, 1)});
    const LabelMask mask(400, 400, std::vector<int>(400 * 400, 1), 1);
    const auto tiles = split_tiles(img, mask, TileLayout(400, 400, 200, 200));
    REQUIRE(tiles.size() == 4);
    CHECK(tiles[0].region == TileRegion{0, 0, 200, 200});
    CHECK(tiles[1].region == TileRegion{0, 200, 200, 200});
    CHECK(tiles[2].region == TileRegion{200, 0, 200, 200});
    CHECK(tiles[3].region == TileRegion{200, 200, 200, 200});

    const TileLayout odd(300, 220, 200, 200);
    REQUIRE(odd.tiles().size() == 4);
    CHECK(odd.tiles()[1].width == 20);
    CHECK(odd.tiles()[2].height == 100);
    CHECK(odd.tiles()[3].height == 100);
    CHECK(odd.tiles()[3].width == 20);

    const auto whole = split_tiles(img, mask, TileLayout(400, 400, 400, 400));
    REQUIRE(whole.size() == 1);
    CHECK(whole[0].image.band(0).size() == 400u * 400u);
}

TEST_CASE("split then merge is the identity on labels") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> lab(0, 3);
    std::vector<int> labels(37 * 23);
    for (auto& l : labels) l = lab(rng);
    const LabelMask mask(37, 23, labels, 3);
    const MultiBandImage img({random_band(37, 23, 9, 0, 1)});
    const auto tiles = split_tiles(img, mask, TileLayout(37, 23, 10, 8));
    std::vector<TileLabels> parts;
    for (const auto& t : tiles) {
        CHECK(t.image.band(0).at(0, 0) == img.band(0).at(t.region.row, t.region.col));
        parts.push_back({t.region, {t.mask.labels().begin(), t.mask.labels().end()}});
    }
    const LabelMask merged = merge_tiles(parts, 37, 23, 3);
    CHECK(std::equal(merged.labels().begin(), merged.labels().end(), labels.begin()));
}

TEST_CASE("merge_tiles detects gaps and overlaps") {
    const TileLabels a{{0, 0, 2, 2}, {1, 1, 1, 1}};
    const TileLabels b{{0, 2, 2, 2}, {2, 2, 2, 2}};
    CHECK_THROWS_WITH_AS(merge_tiles({a}, 2, 4, 2), "uncovered pixel", DataError);
    CHECK_THROWS_WITH_AS(merge_tiles({a, b, a}, 2, 4, 2), "overlapping tiles", DataError);
    const LabelMask m = merge_tiles({a, b}, 2, 4, 2);
    CHECK(std::vector<int>(m.labels().begin(), m.labels().end()) == std::vector<int>{1, 1, 2, 2, 1, 1, 2, 2});
}

TEST_CASE("PGM decode and errors") {
    TempDir dir("pgm");
    write_bytes(dir / "a.pgm", std::string("P5\n# comment\n2 2\n255\n") + std::string("\x00\xff\x80\x40", 4));
    const Band b = load_band(dir / "a.pgm");
    CHECK(values_of(b) == std::vector<double>{0, 255, 128, 64});

    write_bytes(dir / "t.pgm", std::string("P5 3 3 255\n") + std::string(8, '\x01'));
    CHECK_THROWS_WITH_AS(load_band(dir / "t.pgm"), "truncated raster", DataError);

    write_bytes(dir / "w.pgm", std::string("P5 2 2 65535\n") + std::string("\x01\x00\x00\x02\xff\xff\x00\x00", 8));
    CHECK(values_of(load_band(dir / "w.pgm")) == std::vector<double>{256, 2, 65535, 0});

    CHECK_THROWS_AS(load_band(dir / "a.pgm", RasterFormat::Auto, Dimensions{3, 3}), DataError);
    CHECK_THROWS_AS(load_band(dir / "missing.pgm"), DataError);
}

TEST_CASE("float32 raster round trip is bit exact") {
    TempDir dir("lsf");
    const Band zeros = Band::filled(4, 4, 0.0);
    save_band(zeros, dir / "z.lsf");
    const Band z = load_band(dir / "z.lsf");
    CHECK(z.height() == 4);
    CHECK(values_of(z) == std::vector<double>(16, 0.0));

    Band r = random_band(5, 3, 11, -1e3, 1e3);
    std::vector<double> as_float(r.values().begin(), r.values().end());
    for (auto& v : as_float) v = static_cast<float>(v);
    const Band exact(5, 3, as_float);
    save_band(exact, dir / "r.lsf");
    CHECK(values_of(load_band(dir / "r.lsf")) == as_float);

    // Header declares 3x3 but only 8 samples follow.
    std::string bytes = "LSF1";
    const std::uint32_t hdr[3] = {3, 3, 0};
    bytes.append(reinterpret_cast<const char*>(hdr), sizeof hdr);
    bytes.append(8 * 4, '\0');
    write_bytes(dir / "t.lsf", bytes);
    CHECK_THROWS_WITH_AS(load_band(dir / "t.lsf"), "truncated raster", DataError);

    std::string nan_bytes = "LSF1";
    const std::uint32_t hdr1[3] = {1, 1, 0};
    nan_bytes.append(reinterpret_cast<const char*>(hdr1), sizeof hdr1);
    const float nan = std::nanf("");
    nan_bytes.append(reinterpret_cast<const char*>(&nan), 4);
    write_bytes(dir / "n.lsf", nan_bytes);
    CHECK_THROWS_AS(load_band(dir / "n.lsf"), DataError);
}

TEST_CASE("PNG and PGM integer round trips") {
    TempDir dir("png");
    std::vector<double> v8{0, 1, 2, 3, 254, 255};
    const Band b8(2, 3, v8);
    save_band(b8, dir / "b.png");
    save_band(b8, dir / "b.pgm");
    CHECK(values_of(load_band(dir / "b.png")) == v8);
    CHECK(values_of(load_band(dir / "b.pgm")) == v8);

    std::vector<double> v16{0, 300, 65535, 1024};
    const Band b16(2, 2, v16);
    save_band(b16, dir / "c.png");
    save_band(b16, dir / "c.pgm");
    CHECK(values_of(load_band(dir / "c.png")) == v16);
    CHECK(values_of(load_band(dir / "c.pgm")) == v16);

    CHECK_THROWS_AS(save_band(Band(1, 1, {0.5}), dir / "d.png"), DataError);
    write_bytes(dir / "bad.png", "not a png");
    CHECK_THROWS_AS(load_band(dir / "bad.png"), DataError);
}

TEST_CASE("label masks load with class checks") {
    TempDir dir("mask");
    const std::vector<int> labels{0, 1, 2, 2, 1, 0};
    save_label_map(labels, {2, 3}, dir / "m.pgm");
    save_label_map(labels, {2, 3}, dir / "m.png");
    for (const char* name : {"m.pgm", "m.png"}) {
        const LabelMask m = load_mask(dir / name, 2);
        CHECK(std::vector<int>(m.labels().begin(), m.labels().end()) == labels);
        CHECK(m.class_count() == 2);
    }
    CHECK_THROWS_AS(load_mask(dir / "m.pgm", 1), DataError);
    CHECK_THROWS_AS(load_mask(dir / "m.pgm", 2, Dimensions{3, 2}), DataError);
}
