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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "proxforge/tensor.hpp"

namespace proxforge {
namespace {

// Reference values below were produced with 40-digit mpmath evaluations of
// the op formulas on two fixed 2x2 inputs, then rounded to 17 significant
// digits.
const Tensor kPos = Tensor::matrix(2, 2, {0.5, 1.25, 2.0, 3.5});
const Tensor kMix = Tensor::matrix(2, 2, {-0.75, 0.5, 1.5, -2.0});

struct Expected {
  OpId op;
  const Tensor* input;
  std::vector<double> values;
};

const std::vector<Expected>& expected_table() {
  static const std::vector<Expected> table{
      {OpId::kAbs, &kMix, {0.75, 0.5, 1.5, 2.0}},
      {OpId::kTanh, &kPos, {0.46211715726000976, 0.8482836399575129, 0.96402758007581688, 0.99817789761119871}},
      {OpId::kTanh, &kMix, {-0.63514895238728732, 0.46211715726000976, 0.90514825364486644, -0.96402758007581688}},
      {OpId::kSquare, &kMix, {0.5625, 0.25, 2.25, 4.0}},
      {OpId::kExp, &kPos, {1.6487212707001281, 3.4903429574618414, 7.3890560989306502, 33.115451958692314}},
      {OpId::kExp, &kMix, {0.47236655274101471, 1.6487212707001281, 4.4816890703380648, 0.13533528323661269}},
      {OpId::kLog, &kPos, {-0.69314718055994531, 0.22314355131420976, 0.69314718055994531, 1.252762968495368}},
      {OpId::kRelu, &kMix, {0.0, 0.5, 1.5, 0.0}},
      {OpId::kLeakyRelu, &kMix, {-0.075, 0.5, 1.5, -0.2}},
      {OpId::kSwish, &kPos, {0.31122966560092728, 0.97162482646836393, 1.7615941559557649, 3.3974071923702529}},
      {OpId::kSwish, &kMix, {-0.24061597561845527, 0.31122966560092728, 1.2263617142904655, -0.23840584404423511}},
      {OpId::kMish, &kPos, {0.3752452113048951, 1.1318703042410391, 1.9439589595339945, 3.4939907151175192}},
      {OpId::kMish, &kMix, {-0.27649471450546518, 0.3752452113048951, 1.4033782663958026, -0.25250148269570886}},
      {OpId::kInvert, &kMix, {-1.3333333333333333, 2.0, 0.66666666666666667, -0.5}},
      {OpId::kNormalizedSum, &kPos, {1.812499999546875}},
      {OpId::kNormalizedSum, &kMix, {-0.187499999953125}},
      {OpId::kNormalize, &kPos, {-1.1832159566199232, -0.50709255283710995, 0.16903085094570332, 1.5212776585113298}},
      {OpId::kNormalize, &kMix, {-0.42760290433102189, 0.52262577196013786, 1.2828087129930657, -1.3778315806221816}},
      {OpId::kSigmoid, &kMix, {0.32082130082460703, 0.62245933120185456, 0.81757447619364366, 0.11920292202211756}},
      {OpId::kLogSoftmax, &kPos, {-3.3208627928726904, -2.5708627928726904, -1.8208627928726904, -0.32086279287269044}},
      {OpId::kLogSoftmax, &kMix, {-2.6577797932601174, -1.4077797932601174, -0.40777979326011744, -3.9077797932601174}},
      {OpId::kSoftmax, &kPos, {0.03612165280090489, 0.076469539579592918, 0.16188601656036179, 0.7255227910591404}},
      {OpId::kSoftmax, &kMix, {0.070103693784186407, 0.24468593389169649, 0.6651253277773298, 0.020085044546787298}},
      {OpId::kSqrt, &kPos, {0.70710678118654752, 1.1180339887498948, 1.414213562373095, 1.8708286933869707}},
      {OpId::kRevert, &kMix, {0.75, -0.5, -1.5, 2.0}},
      {OpId::kFrobeniusNorm, &kPos, {4.25}},
      {OpId::kFrobeniusNorm, &kMix, {2.6575364531836624}},
      {OpId::kAbsLog, &kPos, {0.69314718055994531, 0.22314355131420976, 0.69314718055994531, 1.252762968495368}},
      {OpId::kL1Norm, &kMix, {1.1875}},
      {OpId::kMinMaxNormalize, &kMix, {0.35714285714285714, 0.71428571428571429, 1.0, 0.0}},
      {OpId::kToMeanScalar, &kMix, {-0.1875}},
      {OpId::kToStdScalar, &kPos, {1.109264959331178}},
      {OpId::kToStdScalar, &kMix, {1.3154728237405743}},
  };
  return table;
}

TEST(TensorOps, UnaryMatchesHighPrecisionReference) {
  for (const auto& e : expected_table()) {
    const Tensor out = apply_unary(e.op, *e.input);
    ASSERT_EQ(out.numel(), e.values.size()) << op_name(e.op);
    EXPECT_EQ(out.rank(), reduces_to_scalar(e.op) ? 0u : 2u) << op_name(e.op);
    for (std::size_t i = 0; i < e.values.size(); ++i)
      EXPECT_NEAR(out[i], e.values[i], 1e-13 * std::max(1.0, std::fabs(e.values[i]))) << op_name(e.op) << " [" << i << "]";
  }
}

TEST(TensorOps, EveryUnaryOpHasAReferenceRow) {
  std::map<OpId, int> seen;
  for (const auto& e : expected_table()) ++seen[e.op];
  for (std::size_t i = 1; i < kNumUnaryOps; ++i) EXPECT_TRUE(seen.count(unary_op(i))) << op_name(unary_op(i));
}

TEST(TensorOps, TableExamples) {
  EXPECT_EQ(apply_unary(OpId::kSigmoid, Tensor::scalar(0.0)).item(), 0.5);
  const Tensor f = apply_unary(OpId::kFrobeniusNorm, Tensor::matrix(1, 2, {3.0, 4.0}));
  EXPECT_EQ(f.rank(), 0u);
  EXPECT_EQ(f.item(), 5.0);
  const Tensor sm = apply_unary(OpId::kSoftmax, Tensor::vector({1.0, 1.0, 1.0}));
  for (double v : sm.data()) EXPECT_NEAR(v, 1.0 / 3.0, 2e-16);
  EXPECT_EQ(apply_unary(OpId::kNormalizedSum, Tensor::vector({1.0, 1.0, 1.0, 1.0})).item(), 4.0 / (4.0 + 1e-9));
  EXPECT_TRUE(std::isnan(apply_unary(OpId::kLog, Tensor::scalar(-1.0)).item()));
}

TEST(TensorOps, NoOpReturnsInputUnchanged) {
  EXPECT_EQ(apply_unary(OpId::kNoOp, kMix), kMix);
}

TEST(TensorOps, DomainViolationsYieldIeeeValues) {
  EXPECT_EQ(apply_unary(OpId::kLog, Tensor::scalar(0.0)).item(), -std::numeric_limits<double>::infinity());
  EXPECT_EQ(apply_unary(OpId::kInvert, Tensor::scalar(0.0)).item(), std::numeric_limits<double>::infinity());
  EXPECT_TRUE(std::isnan(apply_unary(OpId::kSqrt, Tensor::scalar(-4.0)).item()));
  const Tensor c = apply_unary(OpId::kNormalize, Tensor::vector({2.0, 2.0, 2.0}));
  for (double v : c.data()) EXPECT_TRUE(std::isnan(v));
  const Tensor mm = apply_unary(OpId::kMinMaxNormalize, Tensor::vector({7.0, 7.0}));
  for (double v : mm.data()) EXPECT_TRUE(std::isnan(v));
}

TEST(TensorOps, NanPropagatesThroughRectifiers) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_TRUE(std::isnan(apply_unary(OpId::kRelu, Tensor::scalar(nan)).item()));
  EXPECT_TRUE(std::isnan(apply_unary(OpId::kLeakyRelu, Tensor::scalar(nan)).item()));
  const Tensor mm = apply_unary(OpId::kMinMaxNormalize, Tensor::vector({1.0, nan, 3.0}));
  for (double v : mm.data()) EXPECT_TRUE(std::isnan(v));
}

TEST(TensorOps, BinaryExamples) {
  const Tensor s = apply_binary(OpId::kSum, Tensor::vector({1.0, 2.0}), Tensor::vector({3.0, 4.0}));
  EXPECT_EQ(s, Tensor::vector({4.0, 6.0}));
  const Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const Tensor b = Tensor::matrix(3, 2, {7, 8, 9, 10, 11, 12});
  const Tensor m = apply_binary(OpId::kMatMul, a, b);
  EXPECT_EQ(m, Tensor::matrix(2, 2, {58, 64, 139, 154}));
  EXPECT_THROW(apply_binary(OpId::kProduct, Tensor::vector({1, 2}), Tensor::vector({1, 2, 3})), ShapeMismatch);
  EXPECT_THROW(apply_binary(OpId::kMatMul, a, a), ShapeMismatch);
}

TEST(TensorOps, ScalarBroadcastOnlyForRankZero) {
  const Tensor m = Tensor::matrix(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(apply_binary(OpId::kDifference, m, Tensor::scalar(1.0)), Tensor::matrix(2, 2, {0, 1, 2, 3}));
  EXPECT_EQ(apply_binary(OpId::kDifference, Tensor::scalar(1.0), m), Tensor::matrix(2, 2, {0, -1, -2, -3}));
  EXPECT_EQ(apply_binary(OpId::kMatMul, Tensor::scalar(2.0), m), Tensor::matrix(2, 2, {2, 4, 6, 8}));
  EXPECT_THROW(apply_binary(OpId::kSum, m, Tensor::matrix(1, 1, {1.0})), ShapeMismatch);
  EXPECT_THROW(apply_binary(OpId::kSum, Tensor::filled(Shape(4, 4), 0.0), Tensor::filled(Shape(3, 3), 0.0)), ShapeMismatch);
}

TEST(TensorOps, VectorMatmulOrientation) {
  const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(apply_binary(OpId::kMatMul, Tensor::vector({1, 1}), m), Tensor::vector({5, 7, 9}));
  EXPECT_EQ(apply_binary(OpId::kMatMul, m, Tensor::vector({1, 0, 1})), Tensor::vector({4, 10}));
  EXPECT_EQ(apply_binary(OpId::kMatMul, Tensor::vector({1, 2}), Tensor::vector({3, 4})), Tensor::scalar(11));
}

TEST(TensorOps, OpCodesRoundTrip) {
  EXPECT_EQ(kNumUnaryOps, 24u);
  EXPECT_EQ(kNumBinaryOps, 4u);
  for (std::size_t i = 0; i < kNumUnaryOps + kNumBinaryOps; ++i) {
    const auto op = static_cast<OpId>(i);
    EXPECT_EQ(parse_op_code(op_code(op)), op);
  }
  EXPECT_FALSE(parse_op_code("UOP99").has_value());
  EXPECT_TRUE(is_binary(OpId::kMatMul));
  EXPECT_TRUE(is_unary(OpId::kToStdScalar));
}

TEST(TensorShape, RejectsZeroDimsAndLengthMismatch) {
  EXPECT_THROW(Shape(0), ShapeMismatch);
  EXPECT_THROW(Shape(2, 0), ShapeMismatch);
  EXPECT_THROW(Tensor(Shape(2, 2), {1.0, 2.0, 3.0}), ShapeMismatch);
  EXPECT_EQ(Tensor::scalar(3.0).numel(), 1u);
}

TEST(TensorFormat, BinaryRoundTripIsBitExact) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const Tensor& t : {Tensor::scalar(-0.0), Tensor::vector({1.0, nan, -2.5}), kMix}) {
    std::stringstream ss;
    write_tensor(ss, t);
    EXPECT_EQ(read_tensor(ss), t);
  }
}

TEST(TensorFormat, LayoutIsLittleEndianRankDimsPayload) {
  std::stringstream ss;
  write_tensor(ss, Tensor::matrix(1, 2, {1.0, 2.0}));
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 4u + 2 * 8u + 2 * 8u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 2);
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 2);
  // 1.0 = 0x3FF0000000000000, least significant byte first.
  EXPECT_EQ(static_cast<unsigned char>(bytes[27]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(bytes[26]), 0xF0);
}

TEST(TensorFormat, TruncatedInputThrows) {
  std::stringstream ss;
  write_tensor(ss, kPos);
  std::string bytes = ss.str();
  bytes.resize(bytes.size() - 3);
  std::stringstream cut(bytes);
  EXPECT_THROW(read_tensor(cut), Error);
}

// ---------------------------------------------------------------------------
// Properties over random tensors

Tensor random_tensor(std::mt19937_64& rng, double scale = 3.0) {
  std::uniform_int_distribution<int> dim(1, 6), rank(0, 2);
  std::uniform_real_distribution<double> val(-scale, scale);
  const int r = rank(rng);
  const Shape s = r == 0 ? Shape() : r == 1 ? Shape(dim(rng)) : Shape(dim(rng), dim(rng));
  std::vector<double> d(s.numel());
  for (auto& x : d) x = val(rng);
  return Tensor(s, std::move(d));
}

TEST(TensorProperties, OutputShapeContract) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor t = random_tensor(rng);
    for (std::size_t i = 0; i < kNumUnaryOps; ++i) {
      const auto op = unary_op(i);
      const Tensor out = apply_unary(op, t);
      if (reduces_to_scalar(op))
        EXPECT_EQ(out.rank(), 0u) << op_name(op);
      else
        EXPECT_EQ(out.shape(), t.shape()) << op_name(op);
    }
  }
}

TEST(TensorProperties, SoftmaxAndLogSoftmax) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const Tensor t = random_tensor(rng, 30.0);
    const Tensor sm = apply_unary(OpId::kSoftmax, t);
    double s = 0.0;
    for (double v : sm.data()) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
    const Tensor lsm = apply_unary(OpId::kLogSoftmax, t);
    for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_NEAR(lsm[i], std::log(sm[i]), 1e-10);
  }
}

TEST(TensorProperties, NormalizeHasZeroMeanUnitStd) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const Tensor t = random_tensor(rng);
    if (t.numel() < 2) continue;
    const Tensor n = apply_unary(OpId::kNormalize, t);
    EXPECT_NEAR(apply_unary(OpId::kToMeanScalar, n).item(), 0.0, 1e-10);
    EXPECT_NEAR(apply_unary(OpId::kToStdScalar, n).item(), 1.0, 1e-8);
  }
}

TEST(TensorProperties, MinMaxMapsExtremes) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const Tensor t = random_tensor(rng);
    if (t.numel() < 2) continue;
    const Tensor m = apply_unary(OpId::kMinMaxNormalize, t);
    double lo = 2, hi = -1;
    for (double v : m.data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    EXPECT_EQ(lo, 0.0);
    EXPECT_EQ(hi, 1.0);
  }
}

TEST(TensorProperties, RevertIsAnInvolutionAndOpsArePure) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const Tensor t = random_tensor(rng);
    EXPECT_EQ(apply_unary(OpId::kRevert, apply_unary(OpId::kRevert, t)), t);
    for (std::size_t i = 0; i < kNumUnaryOps; ++i)
      EXPECT_EQ(apply_unary(unary_op(i), t), apply_unary(unary_op(i), t)) << op_name(unary_op(i));
  }
}

}  // namespace
}  // namespace proxforge
