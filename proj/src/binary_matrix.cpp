#include "binary_matrix.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "lcseg/error.hpp"

namespace lcseg::detail {
namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void save_float32_matrix(const Matrix& m, const std::array<char, 4>& magic,
                         const std::filesystem::path& path) {
    std::vector<unsigned char> out(magic.begin(), magic.end());
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    out.reserve(out.size() + 4 * static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(m.data()[i])));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write '" + path.string() + "'");
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("write failed for '" + path.string() + "'");
}

Matrix load_float32_matrix(const std::array<char, 4>& magic, const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path.string() + "'");
    const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(f),
                                           std::istreambuf_iterator<char>()};
    if (bytes.size() < 12 || !std::equal(magic.begin(), magic.end(), bytes.begin())) {
        throw DataError("'" + path.string() + "' lacks the " + std::string(magic.begin(), magic.end()) +
                        " header");
    }
    const std::size_t rows = get_u32(bytes.data() + 4);
    const std::size_t cols = get_u32(bytes.data() + 8);
    if (bytes.size() - 12 < rows * cols * 4) throw DataError("truncated matrix file '" + path.string() + "'");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows * cols; ++i) {
        m.data()[i] = std::bit_cast<float>(get_u32(bytes.data() + 12 + 4 * i));
    }
    return m;
}

}  // namespace lcseg::detail
