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

/// \file proxies.hpp
/// Hand-coded reference proxies and the `Proxy` handle (graph or builtin)
/// used by ranking, synthetic benchmarks and architecture search.
///
/// Per-layer formulas (theta_l = fused QKV weight, theta_k = the MLP linear
/// weights, g = dL/dtheta, each layer-averaged afterwards):
///
///   autoprox_a  mean|g_l| + sum(sigmoid(g_k)) / (n_k + eps)
///   autoprox_p  ||sigmoid(theta_l)||_F - mean(logsoftmax(|theta_k|)),
///               logsoftmax taken per MLP matrix over its flattened entries
///   snip        sum |g * theta|       over every layer matrix
///   plain       sum g * theta         over every layer matrix
///   fisher      sum (dL/dz * z)^2     over the recorded activations
///   synflow     sum dR/dtheta * theta over every layer matrix (synflow capture)
///   tf_tas      sum_l ||g_l||_* ||theta_l||_* + sum_k sum g_k * theta_k

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "proxforge/proxy_graph.hpp"

namespace proxforge {

enum class Builtin { kAutoProxA, kAutoProxP, kSnip, kPlain, kFisher, kSynflow, kTfTas };

inline constexpr std::array<Builtin, 7> kAllBuiltins{Builtin::kAutoProxA, Builtin::kAutoProxP, Builtin::kSnip,
                                                     Builtin::kPlain,     Builtin::kFisher,    Builtin::kSynflow,
                                                     Builtin::kTfTas};

inline std::string_view builtin_name(Builtin b) noexcept {
  switch (b) {
    case Builtin::kAutoProxA: return "autoprox_a";
    case Builtin::kAutoProxP: return "autoprox_p";
    case Builtin::kSnip: return "snip";
    case Builtin::kPlain: return "plain";
    case Builtin::kFisher: return "fisher";
    case Builtin::kSynflow: return "synflow";
    case Builtin::kTfTas: return "tf_tas";
  }
  return "?";
}

inline std::optional<Builtin> parse_builtin(std::string_view name) noexcept {
  for (auto b : kAllBuiltins)
    if (builtin_name(b) == name) return b;
  return std::nullopt;
}

/// Graph encoding of autoprox_a.
inline ProxyGraph autoprox_a_graph() {
  return {StatSlot::kF1g, {OpId::kAbs, OpId::kNoOp}, StatSlot::kF3g, {OpId::kSigmoid, OpId::kNormalizedSum},
          OpId::kSum};
}

/// Graph encoding of autoprox_p.
inline ProxyGraph autoprox_p_graph() {
  return {StatSlot::kF1, {OpId::kSigmoid, OpId::kFrobeniusNorm}, StatSlot::kF3, {OpId::kAbs, OpId::kLogSoftmax},
          OpId::kDifference};
}

// ---------------------------------------------------------------------------
// Nuclear norm

/// Sum of singular values: square roots of the eigenvalues of the smaller
/// Gram matrix, found with cyclic Jacobi rotations until the off-diagonal
/// mass falls below 1e-10 of the total.
inline double nuclear_norm(const Tensor& a) {
  const std::size_t rows = a.rank() == 2 ? a.shape()[0] : 1;
  const std::size_t cols = a.rank() == 2 ? a.shape()[1] : a.numel();
  for (double x : a.data())
    if (!std::isfinite(x)) return std::numeric_limits<double>::quiet_NaN();
  const bool use_rows = rows <= cols;
  const std::size_t n = use_rows ? rows : cols;
  const std::size_t k = use_rows ? cols : rows;
  auto elem = [&](std::size_t i, std::size_t p) { return use_rows ? a[i * cols + p] : a[p * cols + i]; };
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += elem(i, p) * elem(j, p);
      m[i * n + j] = m[j * n + i] = s;
    }
  double total = 0.0;
  for (double x : m) total += x * x;
  const double tol = 1e-10 * std::sqrt(total);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += 2.0 * m[i * n + j] * m[i * n + j];
    if (std::sqrt(off) <= tol) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = m[p * n + q];
        if (apq == 0.0) continue;
        const double theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t r = 0; r < n; ++r) {
          const double mrp = m[r * n + p];
          const double mrq = m[r * n + q];
          m[r * n + p] = c * mrp - s * mrq;
          m[r * n + q] = s * mrp + c * mrq;
        }
        for (std::size_t r = 0; r < n; ++r) {
          const double mpr = m[p * n + r];
          const double mqr = m[q * n + r];
          m[p * n + r] = c * mpr - s * mqr;
          m[q * n + r] = s * mpr + c * mqr;
        }
      }
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += std::sqrt(std::max(0.0, m[i * n + i]));
  return sum;
}

// ---------------------------------------------------------------------------
// Builtin scores

namespace detail {

inline void require(bool ok, const char* what) {
  if (!ok) throw MissingStatistic(what);
}

inline double sum_product(const Tensor& g, const Tensor& w, bool absolute) {
  double s = 0.0;
  for (std::size_t i = 0; i < g.numel(); ++i) {
    const double v = g[i] * w[i];
    s += absolute ? std::fabs(v) : v;
  }
  return s;
}

inline double all_matrices(const LayerStatistics& L, bool absolute) {
  double s = 0.0;
  for (std::size_t i = 0; i < L.aux_msa_weights.size(); ++i)
    s += sum_product(L.aux_msa_grads[i], L.aux_msa_weights[i], absolute);
  for (std::size_t i = 0; i < L.aux_mlp_weights.size(); ++i)
    s += sum_product(L.aux_mlp_grads[i], L.aux_mlp_weights[i], absolute);
  return s;
}

inline double builtin_layer(Builtin b, const LayerStatistics& L) {
  switch (b) {
    case Builtin::kAutoProxA: {
      require(!L.aux_mlp_grads.empty(), "autoprox_a needs the MLP gradient list");
      double abs_sum = 0.0;
      const auto& gl = L[StatSlot::kF1g];
      for (double x : gl.data()) abs_sum += std::fabs(x);
      double sig = 0.0;
      std::size_t n = 0;
      for (const auto& gk : L.aux_mlp_grads) {
        for (double x : gk.data()) sig += 1.0 / (1.0 + std::exp(-x));
        n += gk.numel();
      }
      return abs_sum / static_cast<double>(gl.numel()) + sig / (static_cast<double>(n) + kEpsilon);
    }
    case Builtin::kAutoProxP: {
      require(!L.aux_mlp_weights.empty(), "autoprox_p needs the MLP weight list");
      double ss = 0.0;
      for (double x : L[StatSlot::kF1].data()) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        ss += s * s;
      }
      double lsm = 0.0;
      std::size_t n = 0;
      for (const auto& w : L.aux_mlp_weights) {
        double mx = 0.0;
        for (double x : w.data()) mx = std::max(mx, std::fabs(x));
        double z = 0.0;
        for (double x : w.data()) z += std::exp(std::fabs(x) - mx);
        const double lse = mx + std::log(z);
        for (double x : w.data()) lsm += std::fabs(x) - lse;
        n += w.numel();
      }
      return std::sqrt(ss) - lsm / static_cast<double>(n);
    }
    case Builtin::kSnip:
      require(!L.aux_msa_weights.empty() || !L.aux_mlp_weights.empty(), "snip needs the weight lists");
      return all_matrices(L, true);
    case Builtin::kPlain:
      require(!L.aux_msa_weights.empty() || !L.aux_mlp_weights.empty(), "plain needs the weight lists");
      return all_matrices(L, false);
    case Builtin::kSynflow:
      require(!L.aux_msa_weights.empty() || !L.aux_mlp_weights.empty(), "synflow needs the weight lists");
      return all_matrices(L, false);
    case Builtin::kFisher: {
      double s = 0.0;
      for (auto [z, g] : {std::pair{StatSlot::kF2, StatSlot::kF2g}, std::pair{StatSlot::kF4, StatSlot::kF4g}}) {
        const auto& zt = L[z];
        const auto& gt = L[g];
        for (std::size_t i = 0; i < zt.numel(); ++i) {
          const double v = zt[i] * gt[i];
          s += v * v;
        }
      }
      return s;
    }
    case Builtin::kTfTas: {
      require(!L.aux_msa_weights.empty() && !L.aux_mlp_weights.empty(), "tf_tas needs both weight lists");
      double s = 0.0;
      for (std::size_t i = 0; i < L.aux_msa_weights.size(); ++i)
        s += nuclear_norm(L.aux_msa_grads[i]) * nuclear_norm(L.aux_msa_weights[i]);
      for (std::size_t i = 0; i < L.aux_mlp_weights.size(); ++i)
        s += sum_product(L.aux_mlp_grads[i], L.aux_mlp_weights[i], false);
      return s;
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

/// Closed-form score, independent of the graph engine. Throws
/// MissingStatistic when a required list is absent or, for synflow, when the
/// statistics were not captured in synflow mode.
inline ProxyScore builtin_score(Builtin b, const NetworkStatistics& net) {
  if (b == Builtin::kSynflow && net.capture_mode != CaptureMode::kSynflow)
    throw MissingStatistic("synflow needs a synflow-mode capture");
  if (net.layers.empty()) return ProxyScore::invalid(InvalidReason::kNaN);
  double sum = 0.0;
  for (const auto& layer : net.layers) {
    const ProxyScore s = ProxyScore::of(detail::builtin_layer(b, layer));
    if (s.is_invalid()) return s;
    sum += s.value();
  }
  return finalize_network_score(ProxyScore::of(sum / static_cast<double>(net.layers.size())));
}

// ---------------------------------------------------------------------------
// Proxy handle

struct Proxy {
  std::variant<ProxyGraph, Builtin> impl;

  bool needs_synflow() const noexcept {
    const auto* b = std::get_if<Builtin>(&impl);
    return b && *b == Builtin::kSynflow;
  }

  std::string name() const {
    if (const auto* b = std::get_if<Builtin>(&impl)) return std::string(builtin_name(*b));
    return serialize_graph(std::get<ProxyGraph>(impl));
  }
};

inline ProxyScore score(const Proxy& p, const NetworkStatistics& net) {
  if (const auto* b = std::get_if<Builtin>(&p.impl)) return builtin_score(*b, net);
  return score_network(std::get<ProxyGraph>(p.impl), net);
}

/// A builtin name ("snip", "autoprox_a", ...) or a proxy graph in its JSON
/// text form. Surrounding whitespace is ignored.
inline Proxy parse_proxy(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  const auto last = text.find_last_not_of(" \t\r\n");
  const auto body = first == std::string_view::npos ? std::string_view{} : text.substr(first, last - first + 1);
  if (const auto b = parse_builtin(body)) return Proxy{*b};
  if (body.empty() || body.front() != '{')
    throw ParseError("expected a builtin proxy name or a proxy graph object, got '" + std::string(body) + "'", 0);
  return Proxy{parse_graph(text)};
}

}  // namespace proxforge
