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

/// \file vit_sim.hpp
/// Desk-scale vision transformer with a hand-written reverse pass. Captures
/// the per-layer statistics proxies consume.
///
/// Block (pre-norm):   x2 = x + Proj(MSA(LN1(x)))      F2 = Proj(...) output
///                     x3 = x2 + FC2(GELU(FC1(LN2(x2))))  F4 = GELU(...) output
/// Token row 0 is the class token; the classifier reads it after a final
/// LayerNorm. Multi-stage models (PiT) join stages with a token-merging
/// projection: adjacent patch-token pairs are concatenated and projected to
/// the next width; the class token gets its own projection.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "proxforge/arch.hpp"
#include "proxforge/rng.hpp"
#include "proxforge/statistics.hpp"

namespace proxforge::sim {

/// Row-major dense matrix used inside the simulator. The scalar type is a
/// parameter so finite-difference checks can run in extended precision.
template <class T>
struct BasicMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<T> v;

  BasicMatrix() = default;
  BasicMatrix(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), v(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) noexcept { return v[r * cols + c]; }
  T operator()(std::size_t r, std::size_t c) const noexcept { return v[r * cols + c]; }
  void zero() noexcept { std::fill(v.begin(), v.end(), T(0)); }

  template <class U>
  BasicMatrix<U> cast() const {
    BasicMatrix<U> out(rows, cols);
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }

  Tensor to_tensor() const {
    std::vector<double> d(v.begin(), v.end());
    return Tensor::matrix(rows, cols, std::move(d));
  }
};

using Matrix = BasicMatrix<double>;

template <class T>
struct BasicParam {
  std::string name;
  BasicMatrix<T> value;
  BasicMatrix<T> grad;

  BasicParam() = default;
  BasicParam(std::string n, std::size_t r, std::size_t c, T fill = T(0))
      : name(std::move(n)), value(r, c, fill), grad(r, c) {}

  template <class U>
  BasicParam<U> cast() const {
    BasicParam<U> out;
    out.name = name;
    out.value = value.template cast<U>();
    out.grad = grad.template cast<U>();
    return out;
  }
};

using Param = BasicParam<double>;

// ---------------------------------------------------------------------------
// Kernels

namespace detail {

inline constexpr double kLayerNormEps = 1e-12;
inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

/// y = x w + b
template <class T>
BasicMatrix<T> linear(const BasicMatrix<T>& x, const BasicMatrix<T>& w, const BasicMatrix<T>& b) {
  BasicMatrix<T> y(x.rows, w.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    T* yi = &y.v[i * y.cols];
    for (std::size_t j = 0; j < y.cols; ++j) yi[j] = b.v[j];
    for (std::size_t p = 0; p < x.cols; ++p) {
      const T xip = x(i, p);
      const T* wp = &w.v[p * w.cols];
      for (std::size_t j = 0; j < y.cols; ++j) yi[j] += xip * wp[j];
    }
  }
  return y;
}

/// Accumulates dw += x^T dy, db += colsum(dy); returns dx = dy w^T.
template <class T>
BasicMatrix<T> linear_backward(const BasicMatrix<T>& x, const BasicMatrix<T>& w, const BasicMatrix<T>& dy, BasicMatrix<T>& dw, BasicMatrix<T>& db) {
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t p = 0; p < x.cols; ++p) {
      const T xip = x(i, p);
      T* dwp = &dw.v[p * dw.cols];
      const T* dyi = &dy.v[i * dy.cols];
      for (std::size_t j = 0; j < dy.cols; ++j) dwp[j] += xip * dyi[j];
    }
  for (std::size_t i = 0; i < dy.rows; ++i)
    for (std::size_t j = 0; j < dy.cols; ++j) db.v[j] += dy(i, j);
  BasicMatrix<T> dx(x.rows, x.cols);
  for (std::size_t i = 0; i < dy.rows; ++i)
    for (std::size_t p = 0; p < w.rows; ++p) {
      T s = 0.0;
      const T* wp = &w.v[p * w.cols];
      const T* dyi = &dy.v[i * dy.cols];
      for (std::size_t j = 0; j < dy.cols; ++j) s += dyi[j] * wp[j];
      dx(i, p) = s;
    }
  return dx;
}

template <class T>
struct LayerNormCache {
  BasicMatrix<T> xhat;
  std::vector<T> rstd;
  bool affine_only = false;
  BasicMatrix<T> x;  // kept for the affine-only path
};

/// Per-row normalization then gamma/beta. With `affine_only` the
/// normalization is skipped (synflow mode).
template <class T>
BasicMatrix<T> layer_norm(const BasicMatrix<T>& x, const BasicMatrix<T>& gamma, const BasicMatrix<T>& beta, LayerNormCache<T>& c,
                         bool affine_only) {
  c.affine_only = affine_only;
  BasicMatrix<T> y(x.rows, x.cols);
  if (affine_only) {
    c.x = x;
    for (std::size_t i = 0; i < x.rows; ++i)
      for (std::size_t j = 0; j < x.cols; ++j) y(i, j) = gamma.v[j] * x(i, j) + beta.v[j];
    return y;
  }
  c.xhat = BasicMatrix<T>(x.rows, x.cols);
  c.rstd.assign(x.rows, 0.0);
  const T n = static_cast<T>(x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    T mu = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) mu += x(i, j);
    mu /= n;
    T var = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) var += (x(i, j) - mu) * (x(i, j) - mu);
    var /= n;
    const T rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    c.rstd[i] = rstd;
    for (std::size_t j = 0; j < x.cols; ++j) {
      c.xhat(i, j) = (x(i, j) - mu) * rstd;
      y(i, j) = gamma.v[j] * c.xhat(i, j) + beta.v[j];
    }
  }
  return y;
}

template <class T>
BasicMatrix<T> layer_norm_backward(const BasicMatrix<T>& dy, const BasicMatrix<T>& gamma, const LayerNormCache<T>& c, BasicMatrix<T>& dgamma,
                                  BasicMatrix<T>& dbeta) {
  BasicMatrix<T> dx(dy.rows, dy.cols);
  if (c.affine_only) {
    for (std::size_t i = 0; i < dy.rows; ++i)
      for (std::size_t j = 0; j < dy.cols; ++j) {
        dgamma.v[j] += dy(i, j) * c.x(i, j);
        dbeta.v[j] += dy(i, j);
        dx(i, j) = dy(i, j) * gamma.v[j];
      }
    return dx;
  }
  const T n = static_cast<T>(dy.cols);
  for (std::size_t i = 0; i < dy.rows; ++i) {
    T sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t j = 0; j < dy.cols; ++j) {
      const T g = dy(i, j) * gamma.v[j];
      dgamma.v[j] += dy(i, j) * c.xhat(i, j);
      dbeta.v[j] += dy(i, j);
      sum_g += g;
      sum_gx += g * c.xhat(i, j);
    }
    for (std::size_t j = 0; j < dy.cols; ++j) {
      const T g = dy(i, j) * gamma.v[j];
      dx(i, j) = c.rstd[i] * (g - sum_g / n - c.xhat(i, j) * sum_gx / n);
    }
  }
  return dx;
}

template <class T>
T gelu(T z) noexcept {
  return 0.5 * z * (1.0 + std::tanh(kGeluC * (z + kGeluA * z * z * z)));
}

template <class T>
T gelu_grad(T z) noexcept {
  const T t = std::tanh(kGeluC * (z + kGeluA * z * z * z));
  return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * z * z);
}

template <class T>
struct AttentionCache {
  BasicMatrix<T> qkv;                 // tokens x 3Q
  std::vector<BasicMatrix<T>> probs;  // per head, tokens x tokens
};

/// Multi-head softmax attention over a fused [Q | K | V] projection.
template <class T>
BasicMatrix<T> attention(const BasicMatrix<T>& qkv, int heads, int head_dim, AttentionCache<T>& c) {
  const std::size_t t = qkv.rows;
  const std::size_t q_width = static_cast<std::size_t>(heads * head_dim);
  const T scale = 1.0 / std::sqrt(static_cast<T>(head_dim));
  c.qkv = qkv;
  c.probs.assign(heads, BasicMatrix<T>(t, t));
  BasicMatrix<T> out(t, q_width);
  for (int h = 0; h < heads; ++h) {
    const std::size_t qo = h * head_dim, ko = q_width + h * head_dim, vo = 2 * q_width + h * head_dim;
    BasicMatrix<T>& p = c.probs[h];
    for (std::size_t i = 0; i < t; ++i) {
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < t; ++j) {
        T s = 0.0;
        for (int d = 0; d < head_dim; ++d) s += qkv(i, qo + d) * qkv(j, ko + d);
        p(i, j) = s * scale;
        mx = std::max(mx, p(i, j));
      }
      T z = 0.0;
      for (std::size_t j = 0; j < t; ++j) {
        p(i, j) = std::exp(p(i, j) - mx);
        z += p(i, j);
      }
      for (std::size_t j = 0; j < t; ++j) p(i, j) /= z;
      for (int d = 0; d < head_dim; ++d) {
        T s = 0.0;
        for (std::size_t j = 0; j < t; ++j) s += p(i, j) * qkv(j, vo + d);
        out(i, qo + d) = s;
      }
    }
  }
  return out;
}

template <class T>
BasicMatrix<T> attention_backward(const BasicMatrix<T>& dout, int heads, int head_dim, const AttentionCache<T>& c) {
  const std::size_t t = c.qkv.rows;
  const std::size_t q_width = static_cast<std::size_t>(heads * head_dim);
  const T scale = 1.0 / std::sqrt(static_cast<T>(head_dim));
  BasicMatrix<T> dqkv(t, 3 * q_width);
  BasicMatrix<T> dp(t, t);
  for (int h = 0; h < heads; ++h) {
    const std::size_t qo = h * head_dim, ko = q_width + h * head_dim, vo = 2 * q_width + h * head_dim;
    const BasicMatrix<T>& p = c.probs[h];
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < t; ++j) {
        T s = 0.0;
        for (int d = 0; d < head_dim; ++d) s += dout(i, qo + d) * c.qkv(j, vo + d);
        dp(i, j) = s;
      }
    for (std::size_t j = 0; j < t; ++j)
      for (int d = 0; d < head_dim; ++d) {
        T s = 0.0;
        for (std::size_t i = 0; i < t; ++i) s += p(i, j) * dout(i, qo + d);
        dqkv(j, vo + d) += s;
      }
    for (std::size_t i = 0; i < t; ++i) {
      T dot = 0.0;
      for (std::size_t j = 0; j < t; ++j) dot += dp(i, j) * p(i, j);
      for (std::size_t j = 0; j < t; ++j) {
        const T ds = p(i, j) * (dp(i, j) - dot) * scale;
        for (int d = 0; d < head_dim; ++d) {
          dqkv(i, qo + d) += ds * c.qkv(j, ko + d);
          dqkv(j, ko + d) += ds * c.qkv(i, qo + d);
        }
      }
    }
  }
  return dqkv;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model

template <class T>
struct BasicBlock {
  BlockDims dims;
  int dim = 0;
  BasicParam<T> ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b;
  BasicParam<T> ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
};

template <class T>
struct BasicTransition {
  BasicParam<T> cls_w, cls_b, tok_w, tok_b;
};

enum class Fault { kNone, kFlipProjBiasGrad };

template <class T>
struct BasicModel {
  ModelDims dims;
  BatchSpec batch;
  BasicParam<T> patch_w, patch_b, cls, pos;
  std::vector<BasicBlock<T>> blocks;
  std::vector<int> block_stage;
  std::vector<BasicTransition<T>> transitions;
  BasicParam<T> lnf_g, lnf_b, head_w, head_b;
  Fault fault = Fault::kNone;  // test hook for the gradient checker

  template <class F>
  void for_each_param(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each_param(F&& f) const {
    visit(*this, f);
  }

  void zero_grad() {
    for_each_param([](BasicParam<T>& p) { p.grad.zero(); });
  }

  /// Same model with every value and gradient converted to U.
  template <class U>
  BasicModel<U> cast() const {
    BasicModel<U> out;
    out.dims = dims;
    out.batch = batch;
    out.block_stage = block_stage;
    out.fault = fault;
    out.blocks.resize(blocks.size());
    out.transitions.resize(transitions.size());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      out.blocks[i].dims = blocks[i].dims;
      out.blocks[i].dim = blocks[i].dim;
    }
    std::vector<const BasicParam<T>*> src;
    for_each_param([&](const BasicParam<T>& p) { src.push_back(&p); });
    std::size_t k = 0;
    out.for_each_param([&](BasicParam<U>& p) { p = src[k++]->template cast<U>(); });
    return out;
  }

 private:
  template <class Self, class F>
  static void visit(Self& m, F& f) {
    f(m.patch_w); f(m.patch_b); f(m.cls); f(m.pos);
    std::size_t ti = 0;
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
      auto& b = m.blocks[i];
      f(b.ln1_g); f(b.ln1_b); f(b.qkv_w); f(b.qkv_b); f(b.proj_w); f(b.proj_b);
      f(b.ln2_g); f(b.ln2_b); f(b.fc1_w); f(b.fc1_b); f(b.fc2_w); f(b.fc2_b);
      if (i + 1 < m.blocks.size() && m.block_stage[i + 1] != m.block_stage[i]) {
        auto& t = m.transitions[ti++];
        f(t.cls_w); f(t.cls_b); f(t.tok_w); f(t.tok_b);
      }
    }
    f(m.lnf_g); f(m.lnf_b); f(m.head_w); f(m.head_b);
  }
};

using Block = BasicBlock<double>;
using Transition = BasicTransition<double>;
using Model = BasicModel<double>;

namespace detail {

/// Normal(0, std) redrawn until inside +-2 std.
inline double trunc_normal(Rng& rng, double std) {
  std::normal_distribution<double> d(0.0, std);
  for (;;) {
    const double x = d(rng);
    if (std::fabs(x) <= 2.0 * std) return x;
  }
}

inline void init_normal(Param& p, Rng& rng) {
  for (auto& x : p.value.v) x = trunc_normal(rng, 0.02);
}

}  // namespace detail

inline constexpr double kInitStd = 0.02;

/// Truncated-normal(0.02) weights, zero biases, unit LayerNorm gains.
inline Model build_model(const ModelDims& dims, const BatchSpec& batch, Rng& rng) {
  if (dims.stages.empty() || dims.layer_count() == 0) throw ConfigError("model needs at least one layer");
  if (batch.patch <= 0 || batch.image % batch.patch != 0) throw ConfigError("image side must be a multiple of the patch size");
  const int merges = static_cast<int>(dims.stages.size()) - 1;
  if (batch.patches() % (1 << merges) != 0)
    throw ConfigError("patch count " + std::to_string(batch.patches()) + " cannot be merged " +
                      std::to_string(merges) + " times");
  Model m;
  m.dims = dims;
  m.batch = batch;
  const std::size_t d0 = dims.stages.front().dim;
  const std::size_t tokens = batch.patches() + 1;
  m.patch_w = Param("patch_embed.weight", batch.patch_features(), d0);
  m.patch_b = Param("patch_embed.bias", 1, d0);
  m.cls = Param("cls_token", 1, d0);
  m.pos = Param("pos_embed", tokens, d0);
  detail::init_normal(m.patch_w, rng);
  detail::init_normal(m.cls, rng);
  detail::init_normal(m.pos, rng);
  int layer = 0;
  for (std::size_t s = 0; s < dims.stages.size(); ++s) {
    const auto& st = dims.stages[s];
    const std::size_t d = st.dim;
    for (const auto& bd : st.blocks) {
      const std::string p = "blocks." + std::to_string(layer++) + ".";
      const std::size_t q = bd.qkv_width();
      const std::size_t h = bd.mlp_hidden;
      Block b;
      b.dims = bd;
      b.dim = st.dim;
      b.ln1_g = Param(p + "norm1.weight", 1, d, 1.0);
      b.ln1_b = Param(p + "norm1.bias", 1, d);
      b.qkv_w = Param(p + "attn.qkv.weight", d, 3 * q);
      b.qkv_b = Param(p + "attn.qkv.bias", 1, 3 * q);
      b.proj_w = Param(p + "attn.proj.weight", q, d);
      b.proj_b = Param(p + "attn.proj.bias", 1, d);
      b.ln2_g = Param(p + "norm2.weight", 1, d, 1.0);
      b.ln2_b = Param(p + "norm2.bias", 1, d);
      b.fc1_w = Param(p + "mlp.fc1.weight", d, h);
      b.fc1_b = Param(p + "mlp.fc1.bias", 1, h);
      b.fc2_w = Param(p + "mlp.fc2.weight", h, d);
      b.fc2_b = Param(p + "mlp.fc2.bias", 1, d);
      detail::init_normal(b.qkv_w, rng);
      detail::init_normal(b.proj_w, rng);
      detail::init_normal(b.fc1_w, rng);
      detail::init_normal(b.fc2_w, rng);
      m.blocks.push_back(std::move(b));
      m.block_stage.push_back(static_cast<int>(s));
    }
    if (s + 1 < dims.stages.size()) {
      const std::size_t dn = dims.stages[s + 1].dim;
      const std::string p = "pool." + std::to_string(s) + ".";
      Transition t;
      t.cls_w = Param(p + "cls.weight", d, dn);
      t.cls_b = Param(p + "cls.bias", 1, dn);
      t.tok_w = Param(p + "merge.weight", 2 * d, dn);
      t.tok_b = Param(p + "merge.bias", 1, dn);
      detail::init_normal(t.cls_w, rng);
      detail::init_normal(t.tok_w, rng);
      m.transitions.push_back(std::move(t));
    }
  }
  const std::size_t dl = dims.stages.back().dim;
  m.lnf_g = Param("norm.weight", 1, dl, 1.0);
  m.lnf_b = Param("norm.bias", 1, dl);
  m.head_w = Param("head.weight", dl, batch.classes);
  m.head_b = Param("head.bias", 1, batch.classes);
  detail::init_normal(m.head_w, rng);
  return m;
}

/// Patch rows of one image plus its label.
struct Sample {
  Matrix patches;  // N x (patch*patch*channels)
  int label = 0;
};

/// Seeded uniform [0,1) images with uniform random labels.
inline std::vector<Sample> make_batch(const BatchSpec& spec, Rng& rng) {
  std::vector<Sample> out;
  const int per_side = spec.image / spec.patch;
  for (int b = 0; b < spec.batch; ++b) {
    std::vector<double> img(static_cast<std::size_t>(spec.channels * spec.image * spec.image));
    for (auto& x : img) x = uniform01(rng);
    Sample s;
    s.patches = Matrix(spec.patches(), spec.patch_features());
    for (int py = 0; py < per_side; ++py)
      for (int px = 0; px < per_side; ++px) {
        const std::size_t row = py * per_side + px;
        std::size_t col = 0;
        for (int c = 0; c < spec.channels; ++c)
          for (int y = 0; y < spec.patch; ++y)
            for (int x = 0; x < spec.patch; ++x)
              s.patches(row, col++) = img[(c * spec.image + py * spec.patch + y) * spec.image + px * spec.patch + x];
      }
    s.label = static_cast<int>(uniform_index(rng, spec.classes));
    out.push_back(std::move(s));
  }
  return out;
}

/// All-ones single-image batch used by synflow.
inline std::vector<Sample> ones_batch(const BatchSpec& spec) {
  Sample s;
  s.patches = Matrix(spec.patches(), spec.patch_features(), 1.0);
  return {s};
}

enum class Objective { kCrossEntropy, kLogitSum };

/// Batch-averaged activations and their gradients per block.
template <class T>
struct BasicActivationRecord {
  std::vector<BasicMatrix<T>> msa_out, msa_out_grad, mlp_hidden, mlp_hidden_grad;
};

namespace detail {

template <class T>
struct BlockCache {
  BasicMatrix<T> x_in;
  LayerNormCache<T> ln1, ln2;
  BasicMatrix<T> h1, attn_out, a, x2, h2, z1, g;
  AttentionCache<T> att;
};

template <class T>
struct TransitionCache {
  BasicMatrix<T> x_in;
  BasicMatrix<T> merged;  // (N/2) x 2D
};

template <class T>
void accumulate(BasicMatrix<T>& dst, const BasicMatrix<T>& src, std::type_identity_t<T> w) {
  if (dst.v.empty()) dst = BasicMatrix<T>(src.rows, src.cols);
  for (std::size_t i = 0; i < src.v.size(); ++i) dst.v[i] += w * src.v[i];
}

}  // namespace detail

using ActivationRecord = BasicActivationRecord<double>;

/// Forward + reverse pass over a batch. Gradients are accumulated into the
/// model's Param::grad (call zero_grad first). Returns the objective: mean
/// cross-entropy, or the summed logits for Objective::kLogitSum. With
/// `normalize == false` LayerNorms act as their affine part only.
template <class T>
T forward_backward(BasicModel<T>& m, const std::vector<Sample>& batch, Objective obj, bool normalize,
                    std::type_identity_t<BasicActivationRecord<T>>* rec, bool backward = true) {
  using namespace detail;
  const std::size_t nb = m.blocks.size();
  const T inv_b = 1.0 / static_cast<T>(batch.size());
  if (rec) {
    rec->msa_out.assign(nb, BasicMatrix<T>());
    rec->msa_out_grad.assign(nb, BasicMatrix<T>());
    rec->mlp_hidden.assign(nb, BasicMatrix<T>());
    rec->mlp_hidden_grad.assign(nb, BasicMatrix<T>());
  }
  T total = 0.0;
  for (const auto& sample : batch) {
    // Embedding.
    const BasicMatrix<T> pe = linear(sample.patches.template cast<T>(), m.patch_w.value, m.patch_b.value);
    const std::size_t d0 = m.patch_w.value.cols;
    BasicMatrix<T> x(pe.rows + 1, d0);
    for (std::size_t j = 0; j < d0; ++j) x(0, j) = m.cls.value.v[j] + m.pos.value(0, j);
    for (std::size_t i = 0; i < pe.rows; ++i)
      for (std::size_t j = 0; j < d0; ++j) x(i + 1, j) = pe(i, j) + m.pos.value(i + 1, j);

    std::vector<BlockCache<T>> bc(nb);
    std::vector<TransitionCache<T>> tc(m.transitions.size());
    std::size_t ti = 0;
    for (std::size_t l = 0; l < nb; ++l) {
      auto& b = m.blocks[l];
      BlockCache<T>& c = bc[l];
      c.x_in = x;
      c.h1 = layer_norm(x, b.ln1_g.value, b.ln1_b.value, c.ln1, !normalize);
      const BasicMatrix<T> qkv = linear(c.h1, b.qkv_w.value, b.qkv_b.value);
      c.attn_out = attention(qkv, b.dims.heads, b.dims.head_dim, c.att);
      c.a = linear(c.attn_out, b.proj_w.value, b.proj_b.value);
      c.x2 = x;
      for (std::size_t i = 0; i < x.v.size(); ++i) c.x2.v[i] += c.a.v[i];
      c.h2 = layer_norm(c.x2, b.ln2_g.value, b.ln2_b.value, c.ln2, !normalize);
      c.z1 = linear(c.h2, b.fc1_w.value, b.fc1_b.value);
      c.g = c.z1;
      for (auto& e : c.g.v) e = gelu(e);
      const BasicMatrix<T> mo = linear(c.g, b.fc2_w.value, b.fc2_b.value);
      x = c.x2;
      for (std::size_t i = 0; i < x.v.size(); ++i) x.v[i] += mo.v[i];
      if (rec) {
        accumulate(rec->msa_out[l], c.a, inv_b);
        accumulate(rec->mlp_hidden[l], c.g, inv_b);
      }
      if (l + 1 < nb && m.block_stage[l + 1] != m.block_stage[l]) {
        auto& t = m.transitions[ti];
        TransitionCache<T>& tcc = tc[ti++];
        tcc.x_in = x;
        const std::size_t d = x.cols;
        const std::size_t n = (x.rows - 1) / 2;
        BasicMatrix<T> cls_row(1, d);
        for (std::size_t j = 0; j < d; ++j) cls_row(0, j) = x(0, j);
        tcc.merged = BasicMatrix<T>(n, 2 * d);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) {
            tcc.merged(i, j) = x(1 + 2 * i, j);
            tcc.merged(i, d + j) = x(2 + 2 * i, j);
          }
        const BasicMatrix<T> c_new = linear(cls_row, t.cls_w.value, t.cls_b.value);
        const BasicMatrix<T> t_new = linear(tcc.merged, t.tok_w.value, t.tok_b.value);
        x = BasicMatrix<T>(n + 1, c_new.cols);
        for (std::size_t j = 0; j < x.cols; ++j) x(0, j) = c_new(0, j);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < x.cols; ++j) x(i + 1, j) = t_new(i, j);
      }
    }

    // Head on the class token.
    BasicMatrix<T> cls_final(1, x.cols);
    for (std::size_t j = 0; j < x.cols; ++j) cls_final(0, j) = x(0, j);
    LayerNormCache<T> lnf;
    const BasicMatrix<T> hf = layer_norm(cls_final, m.lnf_g.value, m.lnf_b.value, lnf, !normalize);
    const BasicMatrix<T> logits = linear(hf, m.head_w.value, m.head_b.value);
    BasicMatrix<T> dlogits(1, logits.cols);
    if (obj == Objective::kCrossEntropy) {
      T mx = -std::numeric_limits<T>::infinity();
      for (T v : logits.v) mx = std::max(mx, v);
      T z = 0.0;
      for (T v : logits.v) z += std::exp(v - mx);
      const T lse = mx + std::log(z);
      total += (lse - logits.v[sample.label]) * inv_b;
      for (std::size_t j = 0; j < logits.cols; ++j)
        dlogits.v[j] = (std::exp(logits.v[j] - lse) - (static_cast<int>(j) == sample.label ? 1.0 : 0.0)) * inv_b;
    } else {
      for (T v : logits.v) total += v;
      std::fill(dlogits.v.begin(), dlogits.v.end(), 1.0);
    }
    if (!backward) continue;

    // Reverse pass.
    const BasicMatrix<T> dhf = linear_backward(hf, m.head_w.value, dlogits, m.head_w.grad, m.head_b.grad);
    const BasicMatrix<T> dcls = layer_norm_backward(dhf, m.lnf_g.value, lnf, m.lnf_g.grad, m.lnf_b.grad);
    BasicMatrix<T> dx(x.rows, x.cols);
    for (std::size_t j = 0; j < x.cols; ++j) dx(0, j) = dcls(0, j);

    for (std::size_t l = nb; l-- > 0;) {
      if (l + 1 < nb && m.block_stage[l + 1] != m.block_stage[l]) {
        auto& t = m.transitions[--ti];
        const TransitionCache<T>& tcc = tc[ti];
        const std::size_t d = tcc.x_in.cols;
        const std::size_t n = tcc.merged.rows;
        BasicMatrix<T> cls_row(1, d), dc(1, dx.cols), dt(n, dx.cols);
        for (std::size_t j = 0; j < d; ++j) cls_row(0, j) = tcc.x_in(0, j);
        for (std::size_t j = 0; j < dx.cols; ++j) dc(0, j) = dx(0, j);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < dx.cols; ++j) dt(i, j) = dx(i + 1, j);
        const BasicMatrix<T> dcls_in = linear_backward(cls_row, t.cls_w.value, dc, t.cls_w.grad, t.cls_b.grad);
        const BasicMatrix<T> dmerged = linear_backward(tcc.merged, t.tok_w.value, dt, t.tok_w.grad, t.tok_b.grad);
        dx = BasicMatrix<T>(tcc.x_in.rows, d);
        for (std::size_t j = 0; j < d; ++j) dx(0, j) = dcls_in(0, j);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) {
            dx(1 + 2 * i, j) = dmerged(i, j);
            dx(2 + 2 * i, j) = dmerged(i, d + j);
          }
      }
      auto& b = m.blocks[l];
      const BlockCache<T>& c = bc[l];
      // MLP branch: x3 = x2 + fc2(gelu(fc1(ln2(x2)))).
      const BasicMatrix<T> dg = linear_backward(c.g, b.fc2_w.value, dx, b.fc2_w.grad, b.fc2_b.grad);
      if (rec) accumulate(rec->mlp_hidden_grad[l], dg, 1.0);
      BasicMatrix<T> dz1 = dg;
      for (std::size_t i = 0; i < dz1.v.size(); ++i) dz1.v[i] *= gelu_grad(c.z1.v[i]);
      const BasicMatrix<T> dh2 = linear_backward(c.h2, b.fc1_w.value, dz1, b.fc1_w.grad, b.fc1_b.grad);
      const BasicMatrix<T> dx2_ln = layer_norm_backward(dh2, b.ln2_g.value, c.ln2, b.ln2_g.grad, b.ln2_b.grad);
      BasicMatrix<T> dx2 = dx;
      for (std::size_t i = 0; i < dx2.v.size(); ++i) dx2.v[i] += dx2_ln.v[i];
      // Attention branch: x2 = x + proj(attn(qkv(ln1(x)))).
      if (rec) accumulate(rec->msa_out_grad[l], dx2, 1.0);
      BasicMatrix<T> proj_b_before;
      if (m.fault == Fault::kFlipProjBiasGrad) proj_b_before = b.proj_b.grad;
      const BasicMatrix<T> dattn = linear_backward(c.attn_out, b.proj_w.value, dx2, b.proj_w.grad, b.proj_b.grad);
      if (m.fault == Fault::kFlipProjBiasGrad)
        for (std::size_t j = 0; j < b.proj_b.grad.v.size(); ++j)
          b.proj_b.grad.v[j] = 2.0 * proj_b_before.v[j] - b.proj_b.grad.v[j];
      const BasicMatrix<T> dqkv = attention_backward(dattn, b.dims.heads, b.dims.head_dim, c.att);
      const BasicMatrix<T> dh1 = linear_backward(c.h1, b.qkv_w.value, dqkv, b.qkv_w.grad, b.qkv_b.grad);
      const BasicMatrix<T> dx_ln = layer_norm_backward(dh1, b.ln1_g.value, c.ln1, b.ln1_g.grad, b.ln1_b.grad);
      dx = dx2;
      for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += dx_ln.v[i];
    }

    // Embedding.
    for (std::size_t j = 0; j < d0; ++j) m.cls.grad.v[j] += dx(0, j);
    for (std::size_t i = 0; i < dx.rows; ++i)
      for (std::size_t j = 0; j < d0; ++j) m.pos.grad(i, j) += dx(i, j);
    BasicMatrix<T> dpe(dx.rows - 1, d0);
    for (std::size_t i = 0; i + 1 < dx.rows; ++i)
      for (std::size_t j = 0; j < d0; ++j) dpe(i, j) = dx(i + 1, j);
    linear_backward(sample.patches.template cast<T>(), m.patch_w.value, dpe, m.patch_w.grad, m.patch_b.grad);
  }
  if (rec && backward) {
    for (auto& g : rec->msa_out_grad) for (auto& e : g.v) e *= inv_b;
    for (auto& g : rec->mlp_hidden_grad) for (auto& e : g.v) e *= inv_b;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Statistics capture

namespace detail {

inline NetworkStatistics collect(const Model& m, const ActivationRecord& rec) {
  NetworkStatistics net;
  for (std::size_t l = 0; l < m.blocks.size(); ++l) {
    const Block& b = m.blocks[l];
    LayerStatistics s;
    s[StatSlot::kF1] = b.qkv_w.value.to_tensor();
    s[StatSlot::kF1g] = b.qkv_w.grad.to_tensor();
    s[StatSlot::kF2] = rec.msa_out[l].to_tensor();
    s[StatSlot::kF2g] = rec.msa_out_grad[l].to_tensor();
    s[StatSlot::kF3] = b.fc1_w.value.to_tensor();
    s[StatSlot::kF3g] = b.fc1_w.grad.to_tensor();
    s[StatSlot::kF4] = rec.mlp_hidden[l].to_tensor();
    s[StatSlot::kF4g] = rec.mlp_hidden_grad[l].to_tensor();
    s.aux_msa_weights = {b.qkv_w.value.to_tensor(), b.proj_w.value.to_tensor()};
    s.aux_msa_grads = {b.qkv_w.grad.to_tensor(), b.proj_w.grad.to_tensor()};
    s.aux_mlp_weights = {b.fc1_w.value.to_tensor(), b.fc2_w.value.to_tensor()};
    s.aux_mlp_grads = {b.fc1_w.grad.to_tensor(), b.fc2_w.grad.to_tensor()};
    net.layers.push_back(std::move(s));
  }
  return net;
}

}  // namespace detail

/// Builds the model for `dims`, runs one seeded batch through it with a
/// cross-entropy loss against seeded random labels, and records all slots.
/// Pure function of its arguments.
inline NetworkStatistics capture_statistics(const ModelDims& dims, const BatchSpec& batch, std::uint64_t seed) {
  Rng init_rng = make_rng(seed, {1});
  Rng data_rng = make_rng(seed, {2});
  Model m = build_model(dims, batch, init_rng);
  const auto samples = make_batch(batch, data_rng);
  ActivationRecord rec;
  m.zero_grad();
  forward_backward(m, samples, Objective::kCrossEntropy, true, &rec);
  NetworkStatistics net = detail::collect(m, rec);
  net.capture_mode = CaptureMode::kStandard;
  net.seed = seed;
  net.batch = batch;
  return net;
}

inline NetworkStatistics capture_statistics(const ArchConfig& cfg, int scale, const BatchSpec& batch,
                                            std::uint64_t seed) {
  NetworkStatistics net = capture_statistics(scaled_dims(cfg, scale), batch, seed);
  net.config = cfg;
  net.scale = scale;
  return net;
}

/// Replaces every parameter by its absolute value, feeds one all-ones image,
/// and back-propagates R = sum of logits. LayerNorms keep only their affine
/// part (mirrors normalization layers at their initial statistics).
inline NetworkStatistics capture_synflow(const ModelDims& dims, const BatchSpec& batch, std::uint64_t seed,
                                         Model* model_out = nullptr) {
  Rng init_rng = make_rng(seed, {1});
  Model m = build_model(dims, batch, init_rng);
  m.for_each_param([](Param& p) {
    for (auto& x : p.value.v) x = std::fabs(x);
  });
  BatchSpec one = batch;
  one.batch = 1;
  ActivationRecord rec;
  m.zero_grad();
  forward_backward(m, ones_batch(one), Objective::kLogitSum, false, &rec);
  NetworkStatistics net = detail::collect(m, rec);
  net.capture_mode = CaptureMode::kSynflow;
  net.seed = seed;
  net.batch = one;
  if (model_out) *model_out = std::move(m);
  return net;
}

inline NetworkStatistics capture_synflow(const ArchConfig& cfg, int scale, std::uint64_t seed,
                                         const BatchSpec& batch = {}) {
  NetworkStatistics net = capture_synflow(scaled_dims(cfg, scale), batch, seed);
  net.config = cfg;
  net.scale = scale;
  return net;
}

// ---------------------------------------------------------------------------
// Gradient check

struct ParamCheck {
  std::string name;
  std::size_t checked = 0;       // entries with |analytic| > threshold
  double max_rel_error = 0.0;    // over checked entries
  double max_abs_error_small = 0.0;  // over the remaining entries
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-4;
  double magnitude_floor = 1e-8;  // relative error only where |analytic| exceeds this
  double small_abs_tolerance = 1e-7;
  // 4: five-point central stencil, O(h^4) truncation. 2: classic O(h^2).
  // At h = 1e-4 the O(h^2) term alone can exceed 1e-4 relative on small
  // entries with large curvature.
  int stencil = 4;
  Fault fault = Fault::kNone;
};

/// Default toy batch: two 8x8 RGB images, 4x4 patches, 5 classes.
inline BatchSpec grad_check_batch() { return {2, 8, 3, 4, 5}; }

/// Central differences on every parameter entry against the reverse pass.
inline GradCheckReport grad_check(const ModelDims& dims, const BatchSpec& batch, std::uint64_t seed,
                                  const GradCheckOptions& opt = {}) {
  if (opt.stencil != 2 && opt.stencil != 4) throw ConfigError("stencil must be 2 or 4");
  Rng init_rng = make_rng(seed, {1});
  Rng data_rng = make_rng(seed, {2});
  Model m = build_model(dims, batch, init_rng);
  m.fault = opt.fault;
  const auto samples = make_batch(batch, data_rng);
  m.zero_grad();
  forward_backward(m, samples, Objective::kCrossEntropy, true, nullptr);

  // Perturbed losses are evaluated in extended precision so that roundoff in
  // the difference stays far below the tolerance near the magnitude floor.
  using Wide = long double;
  BasicModel<Wide> wide = m.cast<Wide>();
  std::vector<BasicParam<Wide>*> wide_params;
  wide.for_each_param([&](BasicParam<Wide>& p) { wide_params.push_back(&p); });
  auto loss_at = [&](Wide& slot, Wide saved, Wide offset) {
    slot = saved + offset;
    return forward_backward(wide, samples, Objective::kCrossEntropy, true, nullptr, false);
  };

  GradCheckReport report;
  report.tolerance = opt.tolerance;
  bool ok = true;
  std::size_t param_index = 0;
  m.for_each_param([&](Param& p) {
    BasicParam<Wide>& wp = *wide_params[param_index++];
    ParamCheck pc;
    pc.name = p.name;
    for (std::size_t i = 0; i < p.value.v.size(); ++i) {
      Wide& slot = wp.value.v[i];
      const Wide saved = slot;
      const Wide h = opt.step;
      const Wide d1 = loss_at(slot, saved, h) - loss_at(slot, saved, -h);
      Wide wide_numeric = d1 / (2 * h);
      if (opt.stencil == 4) {
        const Wide d2 = loss_at(slot, saved, 2 * h) - loss_at(slot, saved, -2 * h);
        wide_numeric = (8 * d1 - d2) / (12 * h);
      }
      slot = saved;
      const double numeric = static_cast<double>(wide_numeric);
      const double analytic = p.grad.v[i];
      if (std::fabs(analytic) > opt.magnitude_floor) {
        ++pc.checked;
        const double rel = std::fabs(analytic - numeric) / std::max(std::fabs(analytic), std::fabs(numeric));
        pc.max_rel_error = std::max(pc.max_rel_error, rel);
      } else {
        pc.max_abs_error_small = std::max(pc.max_abs_error_small, std::fabs(analytic - numeric));
      }
    }
    ok = ok && pc.max_rel_error <= opt.tolerance && pc.max_abs_error_small <= opt.small_abs_tolerance;
    report.max_rel_error = std::max(report.max_rel_error, pc.max_rel_error);
    report.params.push_back(std::move(pc));
  });
  report.passed = ok;
  return report;
}

inline GradCheckReport grad_check(const ArchConfig& cfg, int scale, const GradCheckOptions& opt = {},
                                  std::uint64_t seed = 0, const BatchSpec& batch = grad_check_batch()) {
  return grad_check(scaled_dims(cfg, scale), batch, seed, opt);
}

/// A single-stage toy model with `layers` identical blocks.
inline ModelDims toy_dims(int layers, int hidden, int heads, int head_dim, int mlp_hidden) {
  ModelDims d;
  StageDims st;
  st.dim = hidden;
  for (int l = 0; l < layers; ++l) st.blocks.push_back({heads, head_dim, mlp_hidden});
  d.stages.push_back(st);
  return d;
}

}  // namespace proxforge::sim
