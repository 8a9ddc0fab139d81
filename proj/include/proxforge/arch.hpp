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

/// \file arch.hpp
/// Architecture configurations of the AutoFormer and PiT search spaces, their
/// full-scale parameter counts, and the reduced dimensions the simulator runs.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "proxforge/error.hpp"
#include "proxforge/rng.hpp"

namespace proxforge {

enum class Space { kAutoFormer, kAutoFormerB, kPiT };

inline std::string_view space_name(Space s) noexcept {
  switch (s) {
    case Space::kAutoFormer: return "autoformer";
    case Space::kAutoFormerB: return "autoformer_b";
    case Space::kPiT: return "pit";
  }
  return "?";
}

inline Space parse_space(std::string_view name) {
  if (name == "autoformer") return Space::kAutoFormer;
  if (name == "autoformer_b") return Space::kAutoFormerB;
  if (name == "pit") return Space::kPiT;
  throw SchemaError("unknown search space '" + std::string(name) + "'");
}

/// Uniform-width transformer (AutoFormer family): per-layer heads and MLP
/// ratio, shared embedding and Q-K-V width.
struct TransformerArch {
  int hidden_dim = 0;
  int depth = 0;
  std::vector<double> mlp_ratio;
  std::vector<int> num_heads;
  int qkv_dim = 0;

  friend bool operator==(const TransformerArch&, const TransformerArch&) = default;
};

/// Three-stage pooling transformer; stage width = base_dim * heads.
struct PiTArch {
  int base_dim = 0;
  int mlp_ratio = 0;
  std::array<int, 3> num_heads{};
  std::array<int, 3> depth{};
  int patch_size = 16;

  friend bool operator==(const PiTArch&, const PiTArch&) = default;
};

struct ArchConfig {
  Space space = Space::kAutoFormer;
  std::variant<TransformerArch, PiTArch> body;

  const TransformerArch& transformer() const { return std::get<TransformerArch>(body); }
  const PiTArch& pit() const { return std::get<PiTArch>(body); }
  bool is_pit() const noexcept { return space == Space::kPiT; }

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

// ---------------------------------------------------------------------------
// Search-space bounds

struct TransformerSpaceBounds {
  std::vector<int> hidden_dim;
  std::vector<int> depth;
  std::vector<double> mlp_ratio;
  std::vector<int> num_heads;
  std::vector<int> qkv_dim;
};

inline const TransformerSpaceBounds& transformer_bounds(Space s) {
  static const TransformerSpaceBounds tiny{{192, 216, 240}, {12, 13, 14}, {3.5, 4.0}, {3, 4}, {192, 256}};
  static const TransformerSpaceBounds base{{528, 576, 624}, {14, 15, 16}, {3.0, 3.5, 4.0}, {8, 9, 10}, {512, 576, 640}};
  if (s == Space::kPiT) throw ConfigError("pit is not a uniform-width transformer space");
  return s == Space::kAutoFormer ? tiny : base;
}

struct PiTSpaceBounds {
  std::vector<int> base_dim{16, 24, 32, 40};
  std::vector<int> mlp_ratio{2, 4, 6, 8};
  std::vector<int> num_heads{2, 4, 8};
  std::array<std::vector<int>, 3> depth{{{1, 2, 3}, {4, 6, 8}, {2, 4, 6}}};
  int patch_size = 16;
};

inline const PiTSpaceBounds& pit_bounds() {
  static const PiTSpaceBounds b;
  return b;
}

namespace detail {

template <class T>
bool contains(const std::vector<T>& v, T x) {
  for (const auto& e : v)
    if (e == x) return true;
  return false;
}

template <class T>
T pick(Rng& rng, const std::vector<T>& v) {
  return v[uniform_index(rng, v.size())];
}

}  // namespace detail

/// Throws SchemaError describing the first violated bound.
inline void validate_arch(const ArchConfig& cfg) {
  using detail::contains;
  if (cfg.space == Space::kPiT) {
    const auto* p = std::get_if<PiTArch>(&cfg.body);
    if (!p) throw SchemaError("pit config carries a transformer body");
    const auto& b = pit_bounds();
    if (!contains(b.base_dim, p->base_dim)) throw SchemaError("pit base_dim out of range");
    if (!contains(b.mlp_ratio, p->mlp_ratio)) throw SchemaError("pit mlp_ratio out of range");
    for (int s = 0; s < 3; ++s) {
      if (!contains(b.num_heads, p->num_heads[s])) throw SchemaError("pit num_heads out of range");
      if (!contains(b.depth[s], p->depth[s])) throw SchemaError("pit stage depth out of range");
    }
    if (p->patch_size != b.patch_size) throw SchemaError("pit patch_size must be 16");
    return;
  }
  const auto* t = std::get_if<TransformerArch>(&cfg.body);
  if (!t) throw SchemaError("transformer config carries a pit body");
  const auto& b = transformer_bounds(cfg.space);
  if (!contains(b.hidden_dim, t->hidden_dim)) throw SchemaError("hidden_dim out of range");
  if (!contains(b.depth, t->depth)) throw SchemaError("depth out of range");
  if (!contains(b.qkv_dim, t->qkv_dim)) throw SchemaError("qkv_dim out of range");
  if (t->mlp_ratio.size() != static_cast<std::size_t>(t->depth) ||
      t->num_heads.size() != static_cast<std::size_t>(t->depth))
    throw SchemaError("per-layer sequences must have length depth");
  for (double r : t->mlp_ratio)
    if (!contains(b.mlp_ratio, r)) throw SchemaError("mlp_ratio entry out of range");
  for (int h : t->num_heads)
    if (!contains(b.num_heads, h)) throw SchemaError("num_heads entry out of range");
}

/// Uniform independent draw of every field; per-layer entries are drawn
/// independently per layer.
inline ArchConfig sample_arch(Space space, Rng& rng) {
  using detail::pick;
  ArchConfig cfg;
  cfg.space = space;
  if (space == Space::kPiT) {
    const auto& b = pit_bounds();
    PiTArch p;
    p.base_dim = pick(rng, b.base_dim);
    p.mlp_ratio = pick(rng, b.mlp_ratio);
    for (int s = 0; s < 3; ++s) p.num_heads[s] = pick(rng, b.num_heads);
    for (int s = 0; s < 3; ++s) p.depth[s] = pick(rng, b.depth[s]);
    p.patch_size = b.patch_size;
    cfg.body = p;
    return cfg;
  }
  const auto& b = transformer_bounds(space);
  TransformerArch t;
  t.hidden_dim = pick(rng, b.hidden_dim);
  t.depth = pick(rng, b.depth);
  for (int l = 0; l < t.depth; ++l) t.mlp_ratio.push_back(pick(rng, b.mlp_ratio));
  for (int l = 0; l < t.depth; ++l) t.num_heads.push_back(pick(rng, b.num_heads));
  t.qkv_dim = pick(rng, b.qkv_dim);
  cfg.body = t;
  return cfg;
}

inline int layer_count(const ArchConfig& cfg) {
  if (cfg.is_pit()) {
    const auto& d = cfg.pit().depth;
    return d[0] + d[1] + d[2];
  }
  return cfg.transformer().depth;
}

// ---------------------------------------------------------------------------
// Full-scale parameter count
//
// Image 224x224x3, 1000-way classifier. Transformer family, with D the embed
// width, Q the Q-K-V width and H_l = floor(ratio_l * D):
//   patch embed   3*16*16*D + D, class token D, positions 197*D
//   layer l       2D (LN) + D*3Q + 3Q (qkv) + Q*D + D (proj)
//                 + 2D (LN) + D*H_l + H_l (fc1) + H_l*D + D (fc2)
//   tail          2D (LN) + 1000*D + 1000 (head)
// PiT, with D_s = base_dim * heads_s, Q = D_s, H_s = mlp_ratio * D_s:
//   patch embed   3*16*16*D_0 + D_0 (stride 8 -> 27x27 grid), class token D_0,
//                 positions 729*D_0
//   layer         as above with (D_s, Q = D_s, H_s)
//   pooling s->s+1  depthwise 3x3 conv 9*D_{s+1} + D_{s+1},
//                 class-token fc D_s*D_{s+1} + D_{s+1}
//   tail          2*D_2 + 1000*D_2 + 1000

inline constexpr std::int64_t kFullScaleClasses = 1000;

namespace detail {

inline std::int64_t block_params(std::int64_t d, std::int64_t q, std::int64_t h) {
  return 2 * d + (d * 3 * q + 3 * q) + (q * d + d) + 2 * d + (d * h + h) + (h * d + d);
}

}  // namespace detail

inline std::int64_t param_count(const ArchConfig& cfg) {
  const std::int64_t c = kFullScaleClasses;
  if (cfg.is_pit()) {
    const auto& p = cfg.pit();
    std::array<std::int64_t, 3> dims{};
    for (int s = 0; s < 3; ++s) dims[s] = static_cast<std::int64_t>(p.base_dim) * p.num_heads[s];
    const std::int64_t ps = p.patch_size;
    const std::int64_t grid = (224 - ps) / (ps / 2) + 1;
    std::int64_t n = 3 * ps * ps * dims[0] + dims[0] + dims[0] + grid * grid * dims[0];
    for (int s = 0; s < 3; ++s) {
      const std::int64_t h = static_cast<std::int64_t>(p.mlp_ratio) * dims[s];
      n += p.depth[s] * detail::block_params(dims[s], dims[s], h);
      if (s < 2) n += 9 * dims[s + 1] + dims[s + 1] + dims[s] * dims[s + 1] + dims[s + 1];
    }
    return n + 2 * dims[2] + c * dims[2] + c;
  }
  const auto& t = cfg.transformer();
  const std::int64_t d = t.hidden_dim;
  const std::int64_t q = t.qkv_dim;
  std::int64_t n = 3 * 16 * 16 * d + d + d + 197 * d;
  for (int l = 0; l < t.depth; ++l) {
    const auto h = static_cast<std::int64_t>(std::floor(t.mlp_ratio[l] * static_cast<double>(d)));
    n += detail::block_params(d, q, h);
  }
  return n + 2 * d + c * d + c;
}

// ---------------------------------------------------------------------------
// Reduced dimensions for the simulator

struct BlockDims {
  int heads = 1;
  int head_dim = 1;
  int mlp_hidden = 1;

  int qkv_width() const noexcept { return heads * head_dim; }
};

struct StageDims {
  int dim = 1;
  std::vector<BlockDims> blocks;
};

/// One stage for the uniform-width family, three for PiT. Consecutive
/// stages are joined by a token-merging projection.
struct ModelDims {
  std::vector<StageDims> stages;

  int layer_count() const noexcept {
    int n = 0;
    for (const auto& s : stages) n += static_cast<int>(s.blocks.size());
    return n;
  }
};

inline int default_scale(Space space) noexcept { return space == Space::kPiT ? 8 : 24; }

/// Divides every width by `scale`. The embedding width (or PiT per-head base
/// width) must divide exactly; per-head Q-K-V width is rounded and must stay
/// at least 1. Otherwise InvalidScale.
inline ModelDims scaled_dims(const ArchConfig& cfg, int scale) {
  if (scale < 1) throw InvalidScale("scale must be a positive integer, got " + std::to_string(scale));
  ModelDims dims;
  if (cfg.is_pit()) {
    const auto& p = cfg.pit();
    if (p.base_dim % scale != 0)
      throw InvalidScale("base_dim " + std::to_string(p.base_dim) + " is not divisible by scale " +
                         std::to_string(scale) + " (head width would be non-integral)");
    const int head_dim = p.base_dim / scale;
    for (int s = 0; s < 3; ++s) {
      StageDims st;
      st.dim = head_dim * p.num_heads[s];
      for (int l = 0; l < p.depth[s]; ++l) st.blocks.push_back({p.num_heads[s], head_dim, p.mlp_ratio * st.dim});
      dims.stages.push_back(std::move(st));
    }
    return dims;
  }
  const auto& t = cfg.transformer();
  if (t.hidden_dim % scale != 0)
    throw InvalidScale("hidden_dim " + std::to_string(t.hidden_dim) + " is not divisible by scale " +
                       std::to_string(scale));
  StageDims st;
  st.dim = t.hidden_dim / scale;
  for (int l = 0; l < t.depth; ++l) {
    const double per_head = static_cast<double>(t.qkv_dim) / (t.num_heads[l] * scale);
    const int head_dim = static_cast<int>(std::lround(per_head));
    if (head_dim < 1)
      throw InvalidScale("per-head Q-K-V width vanishes at scale " + std::to_string(scale));
    const int mlp = std::max(1, static_cast<int>(std::lround(t.mlp_ratio[l] * st.dim)));
    st.blocks.push_back({t.num_heads[l], head_dim, mlp});
  }
  dims.stages.push_back(std::move(st));
  return dims;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json arch_to_json(const ArchConfig& cfg) {
  nlohmann::json j;
  if (cfg.is_pit()) {
    const auto& p = cfg.pit();
    j["base_dim"] = p.base_dim;
    j["mlp_ratio"] = p.mlp_ratio;
    j["num_heads"] = p.num_heads;
    j["depth"] = p.depth;
    j["patch_size"] = p.patch_size;
  } else {
    const auto& t = cfg.transformer();
    j["hidden_dim"] = t.hidden_dim;
    j["depth"] = t.depth;
    j["mlp_ratio"] = t.mlp_ratio;
    j["num_heads"] = t.num_heads;
    j["qkv_dim"] = t.qkv_dim;
  }
  return j;
}

/// Parses and validates; every failure is a SchemaError.
inline ArchConfig arch_from_json(Space space, const nlohmann::json& j) {
  ArchConfig cfg;
  cfg.space = space;
  try {
    if (!j.is_object()) throw SchemaError("arch must be an object");
    if (space == Space::kPiT) {
      PiTArch p;
      p.base_dim = j.at("base_dim").get<int>();
      p.mlp_ratio = j.at("mlp_ratio").get<int>();
      p.num_heads = j.at("num_heads").get<std::array<int, 3>>();
      p.depth = j.at("depth").get<std::array<int, 3>>();
      p.patch_size = j.value("patch_size", 16);
      cfg.body = p;
    } else {
      TransformerArch t;
      t.hidden_dim = j.at("hidden_dim").get<int>();
      t.depth = j.at("depth").get<int>();
      t.mlp_ratio = j.at("mlp_ratio").get<std::vector<double>>();
      t.num_heads = j.at("num_heads").get<std::vector<int>>();
      t.qkv_dim = j.at("qkv_dim").get<int>();
      cfg.body = t;
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("arch: ") + e.what());
  }
  validate_arch(cfg);
  return cfg;
}

}  // namespace proxforge
