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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <random>
#include <vector>

#include "proxforge/bench_store.hpp"
#include "proxforge/proxies.hpp"
#include "proxforge/rng.hpp"
#include "proxforge/statistics.hpp"

namespace proxforge::testing {

inline Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = d(rng);
  return Tensor::matrix(rows, cols, std::move(v));
}

/// A layer with the shapes a simulator capture would produce for token count
/// t, width d, Q-K-V width q and MLP width h.
inline LayerStatistics random_layer(Rng& rng, std::size_t t, std::size_t d, std::size_t q, std::size_t h) {
  LayerStatistics L;
  L[StatSlot::kF1] = random_matrix(rng, d, 3 * q, 0.5);
  L[StatSlot::kF1g] = random_matrix(rng, d, 3 * q, 0.01);
  L[StatSlot::kF2] = random_matrix(rng, t, d);
  L[StatSlot::kF2g] = random_matrix(rng, t, d, 0.01);
  L[StatSlot::kF3] = random_matrix(rng, d, h, 0.5);
  L[StatSlot::kF3g] = random_matrix(rng, d, h, 0.01);
  L[StatSlot::kF4] = random_matrix(rng, t, h);
  L[StatSlot::kF4g] = random_matrix(rng, t, h, 0.01);
  L.aux_msa_weights = {L[StatSlot::kF1], random_matrix(rng, q, d, 0.5)};
  L.aux_msa_grads = {L[StatSlot::kF1g], random_matrix(rng, q, d, 0.01)};
  L.aux_mlp_weights = {L[StatSlot::kF3], random_matrix(rng, h, d, 0.5)};
  L.aux_mlp_grads = {L[StatSlot::kF3g], random_matrix(rng, h, d, 0.01)};
  return L;
}

/// Random bundle with 1..4 layers and small random dimensions.
inline NetworkStatistics random_bundle(std::uint64_t seed) {
  Rng rng = make_rng(seed, {0x7e57});
  std::uniform_int_distribution<std::size_t> dim(2, 6), layers(1, 4);
  const std::size_t t = dim(rng), d = dim(rng), q = dim(rng), h = dim(rng);
  NetworkStatistics net;
  const std::size_t n = layers(rng);
  for (std::size_t l = 0; l < n; ++l) net.layers.push_back(random_layer(rng, t, d, q, h));
  net.seed = seed;
  return net;
}

/// Random bundle whose two MLP matrices are both the F3 matrix, so the
/// closed forms that sum over every MLP matrix agree with the graph engine,
/// which sees one matrix per slot.
inline NetworkStatistics equivalence_bundle(std::uint64_t seed) {
  NetworkStatistics net = random_bundle(seed);
  for (auto& L : net.layers) {
    L.aux_mlp_weights = {L[StatSlot::kF3], L[StatSlot::kF3]};
    L.aux_mlp_grads = {L[StatSlot::kF3g], L[StatSlot::kF3g]};
  }
  return net;
}

/// Stand-in for the simulator: a random bundle keyed by the capture seed and
/// the layer count of the architecture. Orders of magnitude faster.
inline StatsProvider fake_provider() {
  return [](const ArchConfig& arch, const CaptureInfo& info) {
    NetworkStatistics net = random_bundle(info.seed);
    net.capture_mode = info.mode;
    net.config = std::nullopt;
    (void)arch;
    return net;
  };
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(std::filesystem::temp_directory_path() /
              ("proxforge_" + tag + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Upper 0.1% point of the chi-square distribution (Wilson-Hilferty).
inline double chi_square_critical_999(double dof) {
  const double z = 3.090232306167813;
  const double a = 2.0 / (9.0 * dof);
  return dof * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

inline double chi_square(const std::vector<std::size_t>& counts, double expected) {
  double s = 0.0;
  for (auto c : counts) s += (c - expected) * (c - expected) / expected;
  return s;
}

/// Planted proxy for the recovery benchmark: frobenius(tanh(F4)) +
/// frobenius(square(F1)). Random graphs hit it occasionally, which is what
/// separates elitism, plain mutation and random search.
inline ProxyGraph recovery_planted_graph() {
  return {StatSlot::kF4, {OpId::kTanh, OpId::kFrobeniusNorm}, StatSlot::kF1,
          {OpId::kSquare, OpId::kFrobeniusNorm}, OpId::kSum};
}

}  // namespace proxforge::testing
