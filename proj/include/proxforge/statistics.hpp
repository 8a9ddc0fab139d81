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

/// \file statistics.hpp
/// Per-layer network statistics consumed by proxies.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "proxforge/arch.hpp"
#include "proxforge/tensor.hpp"

namespace proxforge {

/// F1/F1g  fused QKV weight of the attention block and its gradient
/// F2/F2g  attention block output (pre-residual) and its gradient
/// F3/F3g  first MLP linear weight and its gradient
/// F4/F4g  MLP hidden activation (post-GELU) and its gradient
enum class StatSlot : std::uint8_t { kF1, kF1g, kF2, kF2g, kF3, kF3g, kF4, kF4g };

inline constexpr std::size_t kNumSlots = 8;

inline constexpr std::array<std::string_view, kNumSlots> kSlotNames{"F1", "F1g", "F2", "F2g",
                                                                    "F3", "F3g", "F4", "F4g"};

constexpr std::string_view slot_name(StatSlot s) noexcept { return kSlotNames[static_cast<std::size_t>(s)]; }

inline std::optional<StatSlot> parse_slot(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kNumSlots; ++i)
    if (kSlotNames[i] == name) return static_cast<StatSlot>(i);
  return std::nullopt;
}

struct LayerStatistics {
  std::array<Tensor, kNumSlots> slots;

  // Every parameter matrix of the layer: attention {qkv, proj}, MLP {fc1, fc2}.
  std::vector<Tensor> aux_msa_weights, aux_msa_grads;
  std::vector<Tensor> aux_mlp_weights, aux_mlp_grads;

  const Tensor& operator[](StatSlot s) const noexcept { return slots[static_cast<std::size_t>(s)]; }
  Tensor& operator[](StatSlot s) noexcept { return slots[static_cast<std::size_t>(s)]; }

  friend bool operator==(const LayerStatistics&, const LayerStatistics&) = default;
};

enum class CaptureMode { kStandard, kSynflow };

inline std::string_view capture_mode_name(CaptureMode m) noexcept {
  return m == CaptureMode::kStandard ? "standard" : "synflow";
}

inline CaptureMode parse_capture_mode(std::string_view s) {
  if (s == "standard") return CaptureMode::kStandard;
  if (s == "synflow") return CaptureMode::kSynflow;
  throw SchemaError("unknown capture_mode '" + std::string(s) + "'");
}

/// Synthetic mini-batch used for gradient capture.
struct BatchSpec {
  int batch = 8;
  int image = 16;
  int channels = 3;
  int patch = 4;
  int classes = 10;

  int patches() const noexcept { return (image / patch) * (image / patch); }
  int patch_features() const noexcept { return patch * patch * channels; }

  friend bool operator==(const BatchSpec&, const BatchSpec&) = default;
};

struct NetworkStatistics {
  std::vector<LayerStatistics> layers;
  std::optional<ArchConfig> config;  // absent for hand-built toy models
  CaptureMode capture_mode = CaptureMode::kStandard;
  std::uint64_t seed = 0;
  int scale = 1;
  BatchSpec batch;

  friend bool operator==(const NetworkStatistics&, const NetworkStatistics&) = default;
};

/// Checks the shape invariants; throws SchemaError naming the first problem.
inline void validate_statistics(const NetworkStatistics& net) {
  if (net.layers.empty()) throw SchemaError("statistics carry no layers");
  if (net.config && static_cast<std::size_t>(layer_count(*net.config)) != net.layers.size())
    throw SchemaError("layer count " + std::to_string(net.layers.size()) + " does not match config depth " +
                      std::to_string(layer_count(*net.config)));
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    const auto where = "layer " + std::to_string(l) + ": ";
    for (std::size_t s = 0; s < kNumSlots; s += 2)
      if (!(layer.slots[s].shape() == layer.slots[s + 1].shape()))
        throw SchemaError(where + std::string(kSlotNames[s]) + " and " + std::string(kSlotNames[s + 1]) +
                          " shapes differ");
    if (layer.aux_msa_weights.size() != layer.aux_msa_grads.size() ||
        layer.aux_mlp_weights.size() != layer.aux_mlp_grads.size())
      throw SchemaError(where + "auxiliary weight and gradient lists differ in length");
    for (std::size_t i = 0; i < layer.aux_msa_weights.size(); ++i)
      if (!(layer.aux_msa_weights[i].shape() == layer.aux_msa_grads[i].shape()))
        throw SchemaError(where + "auxiliary attention weight/gradient shapes differ");
    for (std::size_t i = 0; i < layer.aux_mlp_weights.size(); ++i)
      if (!(layer.aux_mlp_weights[i].shape() == layer.aux_mlp_grads[i].shape()))
        throw SchemaError(where + "auxiliary MLP weight/gradient shapes differ");
  }
}

}  // namespace proxforge
