#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

#include "ssltsc/model.hpp"

namespace ssltsc::model {

inline constexpr char kCheckpointMagic[8] = {'S', 'S', 'L', 'T', 'S', 'C', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json architecture_to_json(const Architecture& a) {
  return {{"kind", std::string(kind_name(a.kind))},
          {"channels", a.channels},
          {"length", a.length},
          {"n_classes", a.n_classes},
          {"filters", a.filters},
          {"kernels", a.kernels},
          {"horizon", a.horizon},
          {"noise_std", a.noise_std}};
}

inline Architecture architecture_from_json(const nlohmann::json& j) {
  Architecture a;
  a.kind = kind_from_name(j.at("kind").get<std::string>());
  a.channels = j.at("channels").get<std::size_t>();
  a.length = j.at("length").get<std::size_t>();
  a.n_classes = j.at("n_classes").get<std::size_t>();
  a.filters = j.at("filters").get<std::array<std::size_t, 3>>();
  a.kernels = j.at("kernels").get<std::array<std::size_t, 3>>();
  a.horizon = j.value("horizon", 0.0);
  a.noise_std = j.value("noise_std", 0.0);
  return a;
}

template <typename T>
struct Checkpoint {
  Model<T> model;
  std::int64_t step = 0;
  std::string rng_state;
};

namespace detail {

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

template <typename T>
void write_values(std::ostream& out, std::span<const T> values) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
}

template <typename T>
void read_values(std::istream& in, std::span<T> values) {
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  if (!in) throw FormatError("checkpoint: truncated tensor data");
}

}  // namespace detail

/// Binary checkpoint: magic, format version, JSON header (architecture,
/// step, RNG state, tensor table), then raw little-endian tensor data.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, Model<T> model, std::int64_t step, const std::string& rng_state) {
  nlohmann::json header{{"format_version", kCheckpointVersion},
                        {"dtype", detail::dtype_name<T>()},
                        {"architecture", architecture_to_json(model.arch)},
                        {"init", "fan_in_uniform"},
                        {"step", step},
                        {"rng_state", rng_state}};
  auto named = model.named_parameters();
  nlohmann::json tensors = nlohmann::json::array();
  for (auto& [name, p] : named) tensors.push_back({{"name", name}, {"shape", p->shape()}});
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    const std::size_t n = model.blocks[b].running_mean.size();
    tensors.push_back({{"name", "block" + std::to_string(b + 1) + ".running_mean"}, {"shape", {n}}});
    tensors.push_back({{"name", "block" + std::to_string(b + 1) + ".running_var"}, {"shape", {n}}});
  }
  header["tensors"] = tensors;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (auto& [name, p] : named) detail::write_values<T>(out, p->value().values());
  for (auto& b : model.blocks) {
    detail::write_values<T>(out, b.running_mean);
    detail::write_values<T>(out, b.running_var);
  }
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw FormatError("not a checkpoint file: " + path.string());
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const auto header = nlohmann::json::parse(text);
  if (header.at("dtype").get<std::string>() != detail::dtype_name<T>()) {
    throw FormatError("checkpoint dtype " + header.at("dtype").get<std::string>() + " does not match the requested type");
  }

  Checkpoint<T> ck;
  Rng rng(0);
  ck.model = build_model<T>(architecture_from_json(header.at("architecture")), rng);
  ck.step = header.at("step").get<std::int64_t>();
  ck.rng_state = header.at("rng_state").get<std::string>();
  auto named = ck.model.named_parameters();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != named.size() + 2 * ck.model.blocks.size()) throw FormatError("checkpoint: tensor table mismatch");
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (tensors[i].at("name").get<std::string>() != named[i].first ||
        tensors[i].at("shape").get<Shape>() != named[i].second->shape()) {
      throw FormatError("checkpoint: unexpected tensor " + tensors[i].at("name").get<std::string>());
    }
    detail::read_values<T>(in, named[i].second->value().values());
  }
  for (auto& b : ck.model.blocks) {
    detail::read_values<T>(in, std::span<T>(b.running_mean));
    detail::read_values<T>(in, std::span<T>(b.running_var));
  }
  return ck;
}

}  // namespace ssltsc::model
