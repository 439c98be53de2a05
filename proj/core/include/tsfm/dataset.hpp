#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsfm/detector.hpp"
#include "tsfm/matrix.hpp"

namespace tsfm {

// Binary sequence formats. All integers and floats are little-endian.
//   features: "TSFV" u32 version u32 T u32 D, then T*D f32 (frame-major)
//   labels:   "TSFL" u32 version u32 T u32 C, then T*C bytes in {0, 1}
inline constexpr std::uint32_t kSequenceFormatVersion = 1;
inline constexpr std::uint64_t kMaxSequenceElements = std::uint64_t{1} << 31;

void write_features(std::ostream& out, const Matrix<float>& features);
void write_features(const std::filesystem::path& path, const Matrix<float>& features);
Matrix<float> read_features(std::istream& in);
Matrix<float> read_features(const std::filesystem::path& path);

void write_labels(std::ostream& out, const LabelMask& labels);
void write_labels(const std::filesystem::path& path, const LabelMask& labels);
LabelMask read_labels(std::istream& in);
LabelMask read_labels(const std::filesystem::path& path);

struct VideoEntry {
  std::string id;
  std::filesystem::path features;  // relative to the manifest directory
  std::filesystem::path labels;
  std::size_t frames = 0;
};

/// JSON index of a dataset on disk.
struct DatasetManifest {
  std::vector<std::string> class_names;
  std::vector<VideoEntry> videos;
  std::size_t feature_dim = 0;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

struct Video {
  std::string id;
  Matrix<float> features;  // T x D
  LabelMask labels;        // T x C
};

struct Dataset {
  std::vector<std::string> class_names;
  std::size_t feature_dim = 0;
  std::vector<Video> videos;

  std::size_t classes() const noexcept { return class_names.size(); }
  std::size_t total_frames() const noexcept;
  /// Throws DataError(kInconsistent) when any video disagrees on T, D or C.
  void validate() const;
};

/// Loads and validates every file listed in the manifest.
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes features/, labels/ and manifest.json under `dir`; returns the
/// manifest path.
std::filesystem::path save_dataset(const Dataset& dataset,
                                   const std::filesystem::path& dir);

}  // namespace tsfm
