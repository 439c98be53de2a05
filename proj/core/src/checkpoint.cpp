#include "tsfm/checkpoint.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tsfm/error.hpp"

namespace tsfm {
namespace fs = std::filesystem;
namespace {

constexpr std::array<char, 4> kMagic = {'T', 'S', 'F', 'M'};

template <typename Int>
void put_int(std::ostream& out, Int value) {
  for (std::size_t i = 0; i < sizeof(Int); ++i) {
    out.put(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
  }
}

template <typename Int>
Int get_int(std::istream& in) {
  std::uint64_t value = 0;
  for (std::size_t i = 0; i < sizeof(Int); ++i) {
    const int byte = in.get();
    if (byte == std::char_traits<char>::eof()) {
      throw DataError(DataError::Kind::kTruncated, "checkpoint: truncated");
    }
    value |= static_cast<std::uint64_t>(byte & 0xff) << (8 * i);
  }
  return static_cast<Int>(value);
}

void put_string(std::ostream& out, const std::string& s) {
  put_int<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, std::uint64_t limit) {
  const auto n = get_int<std::uint64_t>(in);
  if (n > limit) throw DataError(DataError::Kind::kDimensionOverflow, "checkpoint: oversized field");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (static_cast<std::uint64_t>(in.gcount()) != n) {
    throw DataError(DataError::Kind::kTruncated, "checkpoint: truncated");
  }
  return s;
}

struct Tensor {
  std::string name;
  std::span<float> values;
};

std::vector<Tensor> tensors_of(ModelState& state) {
  std::vector<Tensor> out;
  auto collect = [&out](const char* prefix, ModelParams<float>& p) {
    p.for_each([&](std::string_view name, std::span<float> v) {
      if (!v.empty()) out.push_back({prefix + std::string(name), v});
    });
  };
  collect("param/", state.params);
  collect("adam_m/", state.adam_m);
  collect("adam_v/", state.adam_v);
  return out;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelState& state) {
  nlohmann::json header = {{"config", state.config.to_json()},
                           {"classes", state.shape.classes},
                           {"features", state.shape.features},
                           {"class_names", state.class_names},
                           {"iteration", state.iteration}};
  std::ostringstream rng;
  rng << state.rng;

  out.write(kMagic.data(), kMagic.size());
  put_int<std::uint32_t>(out, kCheckpointVersion);
  put_string(out, header.dump());
  put_string(out, rng.str());

  ModelState copy = state;
  const auto tensors = tensors_of(copy);
  put_int<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_int<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_int<std::uint64_t>(out, t.values.size());
    for (float x : t.values) put_int<std::uint32_t>(out, std::bit_cast<std::uint32_t>(x));
  }
  if (!out) throw DataError(DataError::Kind::kIo, "checkpoint: write failed");
}

ModelState read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4) throw DataError(DataError::Kind::kTruncated, "checkpoint: truncated");
  if (magic != kMagic) throw DataError(DataError::Kind::kBadMagic, "checkpoint: bad magic");
  const auto version = get_int<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw DataError(DataError::Kind::kUnsupportedVersion,
                    "checkpoint: unsupported version " + std::to_string(version));
  }

  ModelState state;
  try {
    const auto header = nlohmann::json::parse(get_string(in, 1u << 26));
    state.config = TrainConfig::from_json(header.at("config"));
    state.class_names = header.at("class_names").get<std::vector<std::string>>();
    state.iteration = header.at("iteration").get<std::uint64_t>();
    const auto& c = state.config;
    state.shape = ModelShape{c.variant, header.at("classes").get<std::size_t>(),
                             header.at("features").get<std::size_t>(), c.filters,
                             c.distributions, c.kernel_length};
    if (state.class_names.size() != state.shape.classes) {
      throw DataError(DataError::Kind::kInconsistent, "checkpoint: class names do not match");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataError::Kind::kBadValue, std::string("checkpoint header: ") + e.what());
  }
  state.config.validate();
  state.shape.validate();

  std::istringstream rng(get_string(in, 1u << 20));
  rng >> state.rng;
  if (!rng) throw DataError(DataError::Kind::kBadValue, "checkpoint: unreadable rng state");

  state.params = zero_params<float>(state.shape);
  state.adam_m = state.params;
  state.adam_v = state.params;
  const auto tensors = tensors_of(state);
  const auto count = get_int<std::uint32_t>(in);
  if (count != tensors.size()) {
    throw DataError(DataError::Kind::kInconsistent,
                    "checkpoint: expected " + std::to_string(tensors.size()) +
                        " tensors, found " + std::to_string(count));
  }
  for (const auto& t : tensors) {
    const auto name_len = get_int<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (in.gcount() != static_cast<std::streamsize>(name_len) || name != t.name) {
      throw DataError(DataError::Kind::kInconsistent,
                      "checkpoint: expected tensor " + t.name);
    }
    const auto n = get_int<std::uint64_t>(in);
    if (n != t.values.size()) {
      throw DataError(DataError::Kind::kInconsistent,
                      "checkpoint: tensor " + t.name + " has the wrong size");
    }
    for (float& x : t.values) x = std::bit_cast<float>(get_int<std::uint32_t>(in));
  }
  return state;
}

void save_checkpoint(const fs::path& path, const ModelState& state) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataError::Kind::kIo, "cannot write " + path.string());
  write_checkpoint(out, state);
}

ModelState load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataError::Kind::kIo, "cannot read " + path.string());
  try {
    return read_checkpoint(in);
  } catch (const DataError& e) {
    throw DataError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace tsfm
