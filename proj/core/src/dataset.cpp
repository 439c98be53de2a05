#include "tsfm/dataset.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "tsfm/error.hpp"

namespace tsfm {
namespace fs = std::filesystem;
namespace {

constexpr std::array<char, 4> kFeatureMagic = {'T', 'S', 'F', 'V'};
constexpr std::array<char, 4> kLabelMagic = {'T', 'S', 'F', 'L'};

void put_u32(std::ostream& out, std::uint32_t value) {
  const std::array<char, 4> bytes = {
      static_cast<char>(value & 0xff), static_cast<char>((value >> 8) & 0xff),
      static_cast<char>((value >> 16) & 0xff), static_cast<char>((value >> 24) & 0xff)};
  out.write(bytes.data(), bytes.size());
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  std::array<unsigned char, 4> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != 4) {
    throw DataError(DataError::Kind::kTruncated,
                    std::string("truncated header: missing ") + what);
  }
  return std::uint32_t{bytes[0]} | (std::uint32_t{bytes[1]} << 8) |
         (std::uint32_t{bytes[2]} << 16) | (std::uint32_t{bytes[3]} << 24);
}

std::uint32_t checked_dim(std::size_t value, const char* what) {
  if (value == 0 || value > 0xffffffffu) {
    throw DataError(DataError::Kind::kDimensionOverflow,
                    std::string(what) + " out of range: " + std::to_string(value));
  }
  return static_cast<std::uint32_t>(value);
}

struct Header {
  std::uint32_t rows;
  std::uint32_t cols;
};

void write_header(std::ostream& out, const std::array<char, 4>& magic,
                  std::size_t rows, std::size_t cols) {
  out.write(magic.data(), magic.size());
  put_u32(out, kSequenceFormatVersion);
  put_u32(out, checked_dim(rows, "frame count"));
  put_u32(out, checked_dim(cols, "column count"));
}

Header read_header(std::istream& in, const std::array<char, 4>& magic) {
  std::array<char, 4> got{};
  in.read(got.data(), got.size());
  if (in.gcount() != 4) {
    throw DataError(DataError::Kind::kTruncated, "truncated header: missing magic");
  }
  if (got != magic) {
    throw DataError(DataError::Kind::kBadMagic,
                    "bad magic: expected '" + std::string(magic.data(), 4) + "'");
  }
  const std::uint32_t version = get_u32(in, "version");
  if (version != kSequenceFormatVersion) {
    throw DataError(DataError::Kind::kUnsupportedVersion,
                    "unsupported format version " + std::to_string(version));
  }
  Header h{get_u32(in, "frame count"), get_u32(in, "column count")};
  if (h.rows == 0 || h.cols == 0 ||
      std::uint64_t{h.rows} * h.cols > kMaxSequenceElements) {
    throw DataError(DataError::Kind::kDimensionOverflow,
                    "dimension overflow: " + std::to_string(h.rows) + " x " +
                        std::to_string(h.cols));
  }
  return h;
}

void expect_end(std::istream& in) {
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError(DataError::Kind::kInconsistent, "trailing bytes after payload");
  }
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataError::Kind::kIo, "cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataError::Kind::kIo, "cannot read " + path.string());
  return in;
}

template <typename Fn>
auto with_path(const fs::path& path, Fn&& fn) {
  try {
    return fn();
  } catch (const DataError& e) {
    throw DataError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace

void write_features(std::ostream& out, const Matrix<float>& features) {
  write_header(out, kFeatureMagic, features.rows(), features.cols());
  for (float x : features.flat()) put_u32(out, std::bit_cast<std::uint32_t>(x));
  if (!out) throw DataError(DataError::Kind::kIo, "write failed");
}

void write_features(const fs::path& path, const Matrix<float>& features) {
  auto out = open_out(path);
  with_path(path, [&] { write_features(out, features); });
}

Matrix<float> read_features(std::istream& in) {
  const Header h = read_header(in, kFeatureMagic);
  Matrix<float> out(h.rows, h.cols);
  std::vector<unsigned char> raw(out.size() * 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw DataError(DataError::Kind::kTruncated,
                    "truncated payload: expected " + std::to_string(raw.size()) +
                        " bytes, got " + std::to_string(in.gcount()));
  }
  auto dst = out.flat();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const unsigned char* b = raw.data() + 4 * i;
    const std::uint32_t bits = std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) |
                               (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
    dst[i] = std::bit_cast<float>(bits);
  }
  expect_end(in);
  return out;
}

Matrix<float> read_features(const fs::path& path) {
  auto in = open_in(path);
  return with_path(path, [&] { return read_features(in); });
}

void write_labels(std::ostream& out, const LabelMask& labels) {
  write_header(out, kLabelMagic, labels.rows(), labels.cols());
  for (std::uint8_t z : labels.flat()) {
    if (z > 1) throw DataError(DataError::Kind::kBadValue, "label values must be 0 or 1");
    out.put(static_cast<char>(z));
  }
  if (!out) throw DataError(DataError::Kind::kIo, "write failed");
}

void write_labels(const fs::path& path, const LabelMask& labels) {
  auto out = open_out(path);
  with_path(path, [&] { write_labels(out, labels); });
}

LabelMask read_labels(std::istream& in) {
  const Header h = read_header(in, kLabelMagic);
  LabelMask out(h.rows, h.cols);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (static_cast<std::size_t>(in.gcount()) != out.size()) {
    throw DataError(DataError::Kind::kTruncated,
                    "truncated payload: expected " + std::to_string(out.size()) +
                        " bytes, got " + std::to_string(in.gcount()));
  }
  for (std::uint8_t z : out.flat()) {
    if (z > 1) throw DataError(DataError::Kind::kBadValue, "label byte not in {0, 1}");
  }
  expect_end(in);
  return out;
}

LabelMask read_labels(const fs::path& path) {
  auto in = open_in(path);
  return with_path(path, [&] { return read_labels(in); });
}

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json videos_json = nlohmann::json::array();
  for (const auto& v : videos) {
    videos_json.push_back({{"id", v.id},
                           {"features", v.features.generic_string()},
                           {"labels", v.labels.generic_string()},
                           {"frames", v.frames}});
  }
  return {{"format", "tsfm-dataset"},
          {"version", 1},
          {"feature_dim", feature_dim},
          {"class_names", class_names},
          {"videos", std::move(videos_json)}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "tsfm-dataset") {
      throw DataError(DataError::Kind::kBadMagic, "manifest: unexpected format tag");
    }
    if (j.at("version").get<int>() != 1) {
      throw DataError(DataError::Kind::kUnsupportedVersion, "manifest: unsupported version");
    }
    DatasetManifest m;
    m.feature_dim = j.at("feature_dim").get<std::size_t>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& v : j.at("videos")) {
      m.videos.push_back({v.at("id").get<std::string>(),
                          fs::path(v.at("features").get<std::string>()),
                          fs::path(v.at("labels").get<std::string>()),
                          v.at("frames").get<std::size_t>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataError::Kind::kBadValue, std::string("manifest: ") + e.what());
  }
}

DatasetManifest read_manifest(const fs::path& path) {
  auto in = open_in(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataError::Kind::kBadValue, path.string() + ": " + e.what());
  }
  return with_path(path, [&] { return DatasetManifest::from_json(j); });
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(DataError::Kind::kIo, "cannot write " + path.string());
  out << manifest.to_json().dump(2) << '\n';
}

std::size_t Dataset::total_frames() const noexcept {
  std::size_t total = 0;
  for (const auto& v : videos) total += v.features.rows();
  return total;
}

void Dataset::validate() const {
  if (videos.empty()) throw DataError(DataError::Kind::kInconsistent, "dataset has no videos");
  for (const auto& v : videos) {
    if (v.features.cols() != feature_dim) {
      throw DataError(DataError::Kind::kInconsistent,
                      "video " + v.id + ": feature dimension " +
                          std::to_string(v.features.cols()) + " != " +
                          std::to_string(feature_dim));
    }
    if (v.labels.cols() != classes()) {
      throw DataError(DataError::Kind::kInconsistent,
                      "video " + v.id + ": " + std::to_string(v.labels.cols()) +
                          " label columns for " + std::to_string(classes()) + " classes");
    }
    if (v.labels.rows() != v.features.rows()) {
      throw DataError(DataError::Kind::kInconsistent,
                      "video " + v.id + ": features and labels differ in frame count");
    }
  }
}

Dataset load_dataset(const fs::path& manifest_path) {
  const DatasetManifest manifest = read_manifest(manifest_path);
  const fs::path root = manifest_path.parent_path();
  Dataset dataset;
  dataset.class_names = manifest.class_names;
  dataset.feature_dim = manifest.feature_dim;
  dataset.videos.reserve(manifest.videos.size());
  for (const auto& entry : manifest.videos) {
    Video video{entry.id, read_features(root / entry.features),
                read_labels(root / entry.labels)};
    if (video.features.rows() != entry.frames) {
      throw DataError(DataError::Kind::kInconsistent,
                      "video " + entry.id + ": manifest declares " +
                          std::to_string(entry.frames) + " frames, file has " +
                          std::to_string(video.features.rows()));
    }
    dataset.videos.push_back(std::move(video));
  }
  dataset.validate();
  return dataset;
}

fs::path save_dataset(const Dataset& dataset, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "features", ec);
  fs::create_directories(dir / "labels", ec);
  if (ec) throw DataError(DataError::Kind::kIo, "cannot create " + dir.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.class_names = dataset.class_names;
  manifest.feature_dim = dataset.feature_dim;
  for (const auto& v : dataset.videos) {
    VideoEntry entry{v.id, fs::path("features") / (v.id + ".tsfv"),
                     fs::path("labels") / (v.id + ".tsfl"), v.features.rows()};
    write_features(dir / entry.features, v.features);
    write_labels(dir / entry.labels, v.labels);
    manifest.videos.push_back(std::move(entry));
  }
  const fs::path manifest_path = dir / "manifest.json";
  write_manifest(manifest_path, manifest);
  return manifest_path;
}

}  // namespace tsfm
