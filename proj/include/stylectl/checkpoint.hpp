/* Copyright 2026 The stylectl Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

// Toy backend checkpoint file. Layout (all integers little-endian):
//
//   bytes 0..7   magic "STYLCKPT"
//   bytes 8..11  uint32 header length N
//   next N bytes UTF-8 JSON header
//   remainder    float64 little-endian arrays, row-major, at the offsets the
//                header lists (relative to the start of the remainder)
//
// The header carries {format, version, image_size, channels, seed, arch,
// trainer_step, adam_updates, tensors: [{name, rows, cols, offset}]}.
// Optimizer moments are stored as tensors named "adam.m/<param>" and
// "adam.v/<param>". See docs/checkpoint_format.md.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylectl/errors.hpp"
#include "stylectl/image_io.hpp"
#include "stylectl/toy_unet.hpp"
#include "stylectl/trainer.hpp"

namespace stylectl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'S', 'T', 'Y', 'L', 'C', 'K', 'P', 'T'};
inline constexpr int kCheckpointVersion = 1;

struct LoadedCheckpoint {
  ToyUNet model;
  TrainState state;
};

inline void save_checkpoint(const std::filesystem::path& path, const ToyUNet& model,
                            const TrainState* state = nullptr) {
  const auto& cfg = model.config();
  nlohmann::json header;
  header["format"] = "stylectl-toy-checkpoint";
  header["version"] = kCheckpointVersion;
  header["image_size"] = cfg.image_size;
  header["channels"] = cfg.channels;
  header["seed"] = cfg.seed;
  header["arch"] = {{"patch", cfg.patch},       {"width0", cfg.width0},     {"width1", cfg.width1},
                    {"heads", cfg.heads},       {"time_dim", cfg.time_dim},
                    {"embed_dim", cfg.embed_dim}, {"cond_dim", cfg.cond_dim}};
  header["trainer_step"] = state ? state->step : 0;
  header["adam_updates"] = state ? state->adam.updates : 0;

  std::vector<std::pair<std::string, const Matrix*>> tensors;
  for (const auto& p : model.parameters()) tensors.emplace_back(p.name, &p.value);
  const bool with_adam = state && state->adam.m.size() == model.parameters().size();
  if (with_adam) {
    for (std::size_t i = 0; i < model.parameters().size(); ++i)
      tensors.emplace_back("adam.m/" + model.parameters()[i].name, &state->adam.m[i]);
    for (std::size_t i = 0; i < model.parameters().size(); ++i)
      tensors.emplace_back("adam.v/" + model.parameters()[i].name, &state->adam.v[i]);
  }

  nlohmann::json list = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : tensors) {
    list.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m->size()) * sizeof(double);
  }
  header["tensors"] = std::move(list);

  const std::string text = header.dump();
  Bytes out;
  out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 8);
  const auto n = static_cast<std::uint32_t>(text.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((n >> (8 * i)) & 0xFF));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, m] : tensors) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(m->data());
    out.insert(out.end(), p, p + static_cast<std::size_t>(m->size()) * sizeof(double));
  }
  write_file_atomic(path, out);
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const Bytes bytes = read_file_bytes(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw IoError(path.string() + ": not a stylectl checkpoint");
  std::uint32_t n = 0;
  for (int i = 0; i < 4; ++i) n |= static_cast<std::uint32_t>(bytes[8 + i]) << (8 * i);
  if (bytes.size() < 12ull + n) throw IoError(path.string() + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + n);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": bad header: " + e.what());
  }
  const int version = header.value("version", -1);
  if (version != kCheckpointVersion)
    throw MigrationError("checkpoint version " + std::to_string(version) +
                         " is not supported (expected " +
                         std::to_string(kCheckpointVersion) + ")");

  ToyUNetConfig cfg;
  cfg.image_size = header.at("image_size").get<int>();
  cfg.channels = header.at("channels").get<int>();
  cfg.seed = header.at("seed").get<std::uint64_t>();
  const auto& arch = header.at("arch");
  cfg.patch = arch.value("patch", 1);
  cfg.width0 = arch.at("width0").get<int>();
  cfg.width1 = arch.at("width1").get<int>();
  cfg.heads = arch.at("heads").get<int>();
  cfg.time_dim = arch.at("time_dim").get<int>();
  cfg.embed_dim = arch.at("embed_dim").get<int>();
  cfg.cond_dim = arch.at("cond_dim").get<int>();
  ToyUNet model(cfg);

  const std::size_t data_start = 12 + n;
  std::map<std::string, Matrix> stored;
  for (const auto& t : header.at("tensors")) {
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    const auto offset = t.at("offset").get<std::uint64_t>();
    const std::size_t len = static_cast<std::size_t>(rows * cols) * sizeof(double);
    if (data_start + offset + len > bytes.size())
      throw IoError(path.string() + ": tensor '" + t.at("name").get<std::string>() +
                    "' runs past end of file");
    Matrix m(rows, cols);
    std::memcpy(m.data(), bytes.data() + data_start + offset, len);
    stored.emplace(t.at("name").get<std::string>(), std::move(m));
  }

  auto take = [&](const std::string& name, const Matrix& like) -> Matrix {
    auto it = stored.find(name);
    if (it == stored.end()) throw IoError(path.string() + ": missing tensor '" + name + "'");
    if (it->second.rows() != like.rows() || it->second.cols() != like.cols())
      throw IoError(path.string() + ": tensor '" + name + "' has wrong shape");
    return it->second;
  };

  LoadedCheckpoint out{std::move(model), {}};
  for (auto& p : out.model.parameters()) p.value = take(p.name, p.value);
  out.state.step = header.value("trainer_step", 0);
  out.state.adam.updates = header.value("adam_updates", std::int64_t{0});
  if (stored.count("adam.m/" + out.model.parameters().front().name)) {
    for (const auto& p : out.model.parameters()) {
      out.state.adam.m.push_back(take("adam.m/" + p.name, p.value));
      out.state.adam.v.push_back(take("adam.v/" + p.name, p.value));
    }
  }
  return out;
}

}  // namespace stylectl
