#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "tsfm/training.hpp"

namespace tsfm {

// Layout (little-endian):
//   "TSFM" u32 version
//   u64 n, n bytes of JSON header (config echo, shape, class names, iteration)
//   u64 n, n bytes of textual RNG state
//   u32 tensor count, then per tensor: u32 n, name, u64 count, count x f32
// Tensors are the non-empty parameter groups prefixed "param/", then the
// Adam moments prefixed "adam_m/" and "adam_v/", in ModelParams::for_each
// order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const ModelState& state);
ModelState read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ModelState& state);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace tsfm
