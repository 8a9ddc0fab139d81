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

/// \file proxy_graph.hpp
/// Two-input expression trees over layer statistics.
///
///   input_a -> ops_a[0] -> ops_a[1] --+
///                                      combine -> to_mean_scalar
///   input_b -> ops_b[0] -> ops_b[1] --+
///
/// A graph is evaluated on every transformer layer; the network score is the
/// mean of the layer outputs.

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>

#include "json.hpp"
#include "proxforge/rng.hpp"
#include "proxforge/statistics.hpp"
#include "proxforge/tensor.hpp"

namespace proxforge {

struct ProxyGraph {
  StatSlot input_a = StatSlot::kF1;
  std::array<OpId, 2> ops_a{OpId::kNoOp, OpId::kNoOp};
  StatSlot input_b = StatSlot::kF1;
  std::array<OpId, 2> ops_b{OpId::kNoOp, OpId::kNoOp};
  OpId combine = OpId::kSum;

  friend bool operator==(const ProxyGraph&, const ProxyGraph&) = default;
};

/// Number of independently mutable nodes: 2 inputs, 4 unary slots, 1 binary.
inline constexpr std::size_t kMutableNodes = 7;

enum class InvalidReason : std::uint8_t { kNaN, kInf, kShapeMismatch, kDegenerate };

inline std::string_view invalid_reason_name(InvalidReason r) noexcept {
  switch (r) {
    case InvalidReason::kNaN: return "nan";
    case InvalidReason::kInf: return "inf";
    case InvalidReason::kShapeMismatch: return "shape-mismatch";
    case InvalidReason::kDegenerate: return "degenerate-constant";
  }
  return "?";
}

/// A finite score or an Invalid marker with its reason.
class ProxyScore {
 public:
  static ProxyScore of(double v) noexcept {
    if (std::isnan(v)) return invalid(InvalidReason::kNaN);
    if (std::isinf(v)) return invalid(InvalidReason::kInf);
    return ProxyScore(v, false, InvalidReason::kNaN);
  }
  static ProxyScore invalid(InvalidReason r) noexcept {
    return ProxyScore(std::numeric_limits<double>::quiet_NaN(), true, r);
  }

  bool is_invalid() const noexcept { return invalid_; }
  double value() const noexcept { return value_; }
  InvalidReason reason() const noexcept { return reason_; }

  friend bool operator==(const ProxyScore& a, const ProxyScore& b) noexcept {
    if (a.invalid_ != b.invalid_) return false;
    return a.invalid_ ? a.reason_ == b.reason_ : a.value_ == b.value_;
  }

 private:
  ProxyScore(double v, bool invalid, InvalidReason r) : value_(v), invalid_(invalid), reason_(r) {}

  double value_;
  bool invalid_;
  InvalidReason reason_;
};

/// False for the Invalid marker and for the values -1, 0, 1, NaN and +-Inf
/// (exact comparison).
inline bool check_validity(double v) noexcept {
  return std::isfinite(v) && v != -1.0 && v != 0.0 && v != 1.0;
}

inline bool check_validity(const ProxyScore& s) noexcept { return !s.is_invalid() && check_validity(s.value()); }

/// Scores one layer. Shape mismatches and non-finite results become Invalid;
/// the degenerate values {-1, 0, 1} are only rejected on the network score.
inline ProxyScore evaluate_layer(const ProxyGraph& g, const LayerStatistics& stats) noexcept {
  try {
    Tensor a = apply_unary(g.ops_a[1], apply_unary(g.ops_a[0], stats[g.input_a]));
    Tensor b = apply_unary(g.ops_b[1], apply_unary(g.ops_b[0], stats[g.input_b]));
    const Tensor c = apply_binary(g.combine, a, b);
    return ProxyScore::of(apply_unary(OpId::kToMeanScalar, c).item());
  } catch (const ShapeMismatch&) {
    return ProxyScore::invalid(InvalidReason::kShapeMismatch);
  } catch (...) {
    return ProxyScore::invalid(InvalidReason::kNaN);
  }
}

/// Mean of per-layer scores; the first Invalid layer invalidates the whole.
inline ProxyScore aggregate_layers(std::span<const ProxyScore> layer_scores) noexcept {
  if (layer_scores.empty()) return ProxyScore::invalid(InvalidReason::kNaN);
  double sum = 0.0;
  for (const auto& s : layer_scores) {
    if (s.is_invalid()) return s;
    sum += s.value();
  }
  return ProxyScore::of(sum / static_cast<double>(layer_scores.size()));
}

/// Applies the full validity set to an aggregated network score.
inline ProxyScore finalize_network_score(ProxyScore s) noexcept {
  if (!s.is_invalid() && !check_validity(s.value())) return ProxyScore::invalid(InvalidReason::kDegenerate);
  return s;
}

inline ProxyScore score_network(const ProxyGraph& g, const NetworkStatistics& net) noexcept {
  if (net.layers.empty()) return ProxyScore::invalid(InvalidReason::kNaN);
  double sum = 0.0;
  for (const auto& layer : net.layers) {
    const ProxyScore s = evaluate_layer(g, layer);
    if (s.is_invalid()) return s;
    sum += s.value();
  }
  return finalize_network_score(ProxyScore::of(sum / static_cast<double>(net.layers.size())));
}

// ---------------------------------------------------------------------------
// Random generation and mutation

namespace detail {

inline StatSlot random_slot(Rng& rng) { return static_cast<StatSlot>(uniform_index(rng, kNumSlots)); }
inline OpId random_unary(Rng& rng) { return unary_op(uniform_index(rng, kNumUnaryOps)); }
inline OpId random_binary(Rng& rng) { return binary_op(uniform_index(rng, kNumBinaryOps)); }

}  // namespace detail

inline ProxyGraph random_graph(Rng& rng) {
  ProxyGraph g;
  g.input_a = detail::random_slot(rng);
  g.ops_a[0] = detail::random_unary(rng);
  g.ops_a[1] = detail::random_unary(rng);
  g.input_b = detail::random_slot(rng);
  g.ops_b[0] = detail::random_unary(rng);
  g.ops_b[1] = detail::random_unary(rng);
  g.combine = detail::random_binary(rng);
  return g;
}

/// Each of the seven nodes is independently redrawn with probability p. A
/// redraw is uniform over the node's domain and may repeat the old value.
inline ProxyGraph mutate(const ProxyGraph& parent, Rng& rng, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("mutation probability must lie in [0, 1]");
  ProxyGraph g = parent;
  auto hit = [&] { return uniform01(rng) < p; };
  if (hit()) g.input_a = detail::random_slot(rng);
  if (hit()) g.ops_a[0] = detail::random_unary(rng);
  if (hit()) g.ops_a[1] = detail::random_unary(rng);
  if (hit()) g.input_b = detail::random_slot(rng);
  if (hit()) g.ops_b[0] = detail::random_unary(rng);
  if (hit()) g.ops_b[1] = detail::random_unary(rng);
  if (hit()) g.combine = detail::random_binary(rng);
  return g;
}

// ---------------------------------------------------------------------------
// Text form
//
//   {"input_a": "F1g", "ops_a": ["UOP01","UOP00"], "input_b": "F3g",
//    "ops_b": ["UOP13","UOP11"], "combine": "BOP01"}

inline nlohmann::ordered_json graph_to_json(const ProxyGraph& g) {
  nlohmann::ordered_json j;
  j["input_a"] = slot_name(g.input_a);
  j["ops_a"] = {op_code(g.ops_a[0]), op_code(g.ops_a[1])};
  j["input_b"] = slot_name(g.input_b);
  j["ops_b"] = {op_code(g.ops_b[0]), op_code(g.ops_b[1])};
  j["combine"] = op_code(g.combine);
  return j;
}

/// Canonical single-line form; also used as the fitness cache key.
inline std::string serialize_graph(const ProxyGraph& g) { return graph_to_json(g).dump(); }

namespace detail {

inline std::size_t locate(std::string_view text, std::string_view needle) {
  const auto pos = text.find(needle);
  return pos == std::string_view::npos ? 0 : pos;
}

}  // namespace detail

/// Parses the text form. Unknown slots or op codes, wrong arities, unary
/// codes in the combine position (and vice versa) are ParseErrors.
inline ProxyGraph graph_from_json(const nlohmann::json& j, std::string_view text = {}) {
  auto fail = [&](const std::string& what, std::string_view near) -> ParseError {
    return ParseError(what, near.empty() ? 0 : detail::locate(text, near));
  };
  if (!j.is_object()) throw fail("proxy graph must be a JSON object", {});
  auto str = [&](const char* key) -> std::string {
    if (!j.contains(key)) throw fail(std::string("missing field '") + key + "'", {});
    if (!j[key].is_string()) throw fail(std::string("field '") + key + "' must be a string", key);
    return j[key].get<std::string>();
  };
  auto slot = [&](const char* key) {
    const auto s = str(key);
    const auto v = parse_slot(s);
    if (!v) throw fail("unknown statistic slot '" + s + "'", "\"" + s + "\"");
    return *v;
  };
  auto op = [&](const std::string& code, bool unary) {
    const auto v = parse_op_code(code);
    if (!v) throw fail("unknown op code '" + code + "'", "\"" + code + "\"");
    if (is_unary(*v) != unary)
      throw fail("op '" + code + "' is not a " + (unary ? "unary" : "binary") + " op", "\"" + code + "\"");
    return *v;
  };
  auto ops = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != 2)
      throw fail(std::string("field '") + key + "' must be an array of two unary op codes", key);
    std::array<OpId, 2> out{};
    for (std::size_t i = 0; i < 2; ++i) {
      if (!j[key][i].is_string()) throw fail(std::string("field '") + key + "' must hold strings", key);
      out[i] = op(j[key][i].get<std::string>(), true);
    }
    return out;
  };
  ProxyGraph g;
  g.input_a = slot("input_a");
  g.ops_a = ops("ops_a");
  g.input_b = slot("input_b");
  g.ops_b = ops("ops_b");
  g.combine = op(str("combine"), false);
  return g;
}

inline ProxyGraph parse_graph(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed proxy JSON: ") + e.what(), e.byte);
  }
  return graph_from_json(j, text);
}

/// Human-readable formula, e.g. "mean(abs(F1g) + normalized_sum(sigmoid(F3g)))".
inline std::string describe_graph(const ProxyGraph& g) {
  auto branch = [](StatSlot s, const std::array<OpId, 2>& ops) {
    std::string x(slot_name(s));
    for (OpId op : ops)
      if (op != OpId::kNoOp) {
        auto name = std::string(op_name(op));
        if (name.rfind("element_wise_", 0) == 0) name = name.substr(13);
        x = name + "(" + x + ")";
      }
    return x;
  };
  const char* sym = g.combine == OpId::kSum ? " + " : g.combine == OpId::kDifference ? " - " : g.combine == OpId::kProduct ? " * " : " @ ";
  return "mean(" + branch(g.input_a, g.ops_a) + sym + branch(g.input_b, g.ops_b) + ")";
}

}  // namespace proxforge
