#pragma once

#include <array>
#include <filesystem>

#include "lcseg/features.hpp"

namespace lcseg::detail {

/// Layout shared by the feature and embedding files: 4-byte magic, u32 rows,
/// u32 cols, then rows*cols little-endian float32 values row-major.
void save_float32_matrix(const Matrix& m, const std::array<char, 4>& magic,
                         const std::filesystem::path& path);
Matrix load_float32_matrix(const std::array<char, 4>& magic, const std::filesystem::path& path);

}  // namespace lcseg::detail
