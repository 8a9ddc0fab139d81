/* Copyright 2026 The ProxForge Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

/// \file archive.hpp
/// Statistics archive: a directory holding `manifest.json` plus one tensor
/// blob per slot and per auxiliary matrix.
///
///   manifest.json
///     format        "proxforge-stats"
///     version       1
///     capture_mode  "standard" | "synflow"
///     seed, scale, batch {batch, image, channels, patch, classes}
///     config        {"space": ..., "arch": {...}} or null
///     layers        [{"slots": {"F1": {"file", "shape"}, ...},
///                     "aux_msa_weights": [{"file", "shape"}], "aux_msa_grads": [...],
///                     "aux_mlp_weights": [...], "aux_mlp_grads": [...]}]
///
/// Blobs use the tensor binary format from tensor.hpp.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "proxforge/statistics.hpp"

namespace proxforge {

inline constexpr std::string_view kArchiveFormat = "proxforge-stats";
inline constexpr int kArchiveVersion = 1;

namespace detail {

inline nlohmann::json shape_json(const Shape& s) {
  auto j = nlohmann::json::array();
  for (std::size_t i = 0; i < s.rank(); ++i) j.push_back(s[i]);
  return j;
}

inline nlohmann::json put_blob(const std::filesystem::path& dir, const std::string& file, const Tensor& t) {
  std::ofstream os(dir / file, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + (dir / file).string());
  write_tensor(os, t);
  if (!os) throw IoError("write failed for " + (dir / file).string());
  return {{"file", file}, {"shape", shape_json(t.shape())}};
}

inline Tensor get_blob(const std::filesystem::path& dir, const nlohmann::json& entry) {
  const auto file = entry.at("file").get<std::string>();
  if (file.find("..") != std::string::npos || std::filesystem::path(file).is_absolute())
    throw SchemaError("blob path escapes the archive: " + file);
  std::ifstream is(dir / file, std::ios::binary);
  if (!is) throw IoError("cannot read " + (dir / file).string());
  Tensor t = read_tensor(is);
  if (is.peek() != std::char_traits<char>::eof()) throw SchemaError(file + ": trailing bytes after tensor");
  if (shape_json(t.shape()) != entry.at("shape"))
    throw SchemaError(file + ": blob shape " + t.shape().str() + " disagrees with manifest");
  return t;
}


inline std::string layer_prefix(std::size_t l) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "l%03zu_", l);
  return buf;
}

}  // namespace detail

inline nlohmann::json batch_to_json(const BatchSpec& b) {
  return {{"batch", b.batch}, {"image", b.image}, {"channels", b.channels}, {"patch", b.patch}, {"classes", b.classes}};
}

inline BatchSpec batch_from_json(const nlohmann::json& j) {
  BatchSpec b;
  b.batch = j.at("batch").get<int>();
  b.image = j.at("image").get<int>();
  b.channels = j.at("channels").get<int>();
  b.patch = j.at("patch").get<int>();
  b.classes = j.at("classes").get<int>();
  return b;
}

/// Writes (or overwrites) an archive directory.
inline void write_archive(const NetworkStatistics& net, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json m;
  m["format"] = kArchiveFormat;
  m["version"] = kArchiveVersion;
  m["capture_mode"] = capture_mode_name(net.capture_mode);
  m["seed"] = net.seed;
  m["scale"] = net.scale;
  m["batch"] = batch_to_json(net.batch);
  if (net.config)
    m["config"] = {{"space", space_name(net.config->space)}, {"arch", arch_to_json(*net.config)}};
  else
    m["config"] = nullptr;
  m["slots"] = kSlotNames;
  auto layers = nlohmann::json::array();
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    const auto prefix = detail::layer_prefix(l);
    nlohmann::json lj;
    for (std::size_t s = 0; s < kNumSlots; ++s)
      lj["slots"][std::string(kSlotNames[s])] =
          detail::put_blob(dir, prefix + std::string(kSlotNames[s]) + ".bin", layer.slots[s]);
    auto list = [&](const std::vector<Tensor>& ts, const std::string& tag) {
      auto arr = nlohmann::json::array();
      for (std::size_t i = 0; i < ts.size(); ++i)
        arr.push_back(detail::put_blob(dir, prefix + tag + std::to_string(i) + ".bin", ts[i]));
      return arr;
    };
    lj["aux_msa_weights"] = list(layer.aux_msa_weights, "msa_w");
    lj["aux_msa_grads"] = list(layer.aux_msa_grads, "msa_g");
    lj["aux_mlp_weights"] = list(layer.aux_mlp_weights, "mlp_w");
    lj["aux_mlp_grads"] = list(layer.aux_mlp_grads, "mlp_g");
    layers.push_back(std::move(lj));
  }
  m["layers"] = std::move(layers);
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  if (!os) throw IoError("cannot write " + (dir / "manifest.json").string());
  os << m.dump(2) << '\n';
}

/// Reads and validates an archive directory.
inline NetworkStatistics read_archive(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw IoError("cannot read " + (dir / "manifest.json").string());
  std::stringstream text;
  text << is.rdbuf();
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(text.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("manifest.json: ") + e.what(), e.byte);
  }
  NetworkStatistics net;
  try {
    if (m.at("format").get<std::string>() != kArchiveFormat) throw SchemaError("not a statistics archive");
    if (m.at("version").get<int>() != kArchiveVersion) throw SchemaError("unsupported archive version");
    net.capture_mode = parse_capture_mode(m.at("capture_mode").get<std::string>());
    net.seed = m.at("seed").get<std::uint64_t>();
    net.scale = m.at("scale").get<int>();
    net.batch = batch_from_json(m.at("batch"));
    if (!m.at("config").is_null()) {
      const auto space = parse_space(m["config"].at("space").get<std::string>());
      net.config = arch_from_json(space, m["config"].at("arch"));
    }
    for (const auto& lj : m.at("layers")) {
      LayerStatistics layer;
      for (std::size_t s = 0; s < kNumSlots; ++s)
        layer.slots[s] = detail::get_blob(dir, lj.at("slots").at(std::string(kSlotNames[s])));
      auto list = [&](const char* key) {
        std::vector<Tensor> ts;
        for (const auto& e : lj.value(key, nlohmann::json::array())) ts.push_back(detail::get_blob(dir, e));
        return ts;
      };
      layer.aux_msa_weights = list("aux_msa_weights");
      layer.aux_msa_grads = list("aux_msa_grads");
      layer.aux_mlp_weights = list("aux_mlp_weights");
      layer.aux_mlp_grads = list("aux_mlp_grads");
      net.layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("manifest.json: ") + e.what());
  }
  validate_statistics(net);
  return net;
}

}  // namespace proxforge
