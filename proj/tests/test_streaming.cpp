// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The sbb Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <random>

#include "sbb/streaming.hpp"
#include "support.hpp"

namespace sbb {
namespace {

using test::rel;

constexpr double kOmega = 5e9;
constexpr double kTs = 1.0 / (2.0 * kOmega);

struct Chain {
  ArrayScenario s = test::toy_scenario(8, 50.0);
  PacketBasis pb;
  double delta = 0.0;
  std::vector<VecC> ys;
  VecC dense;
  Chain(int k = 12) {
    const double overlap = 4.0 * kTs;
    pb = build_packet_basis(s, default_packet_dim(kOmega, 8.0 * kTs, overlap, 2), overlap);
    delta = 1e-6 * pb.a.squaredNorm() / static_cast<double>(pb.dim());
    std::mt19937_64 rng(3);
    VecC yy(k * pb.a.rows());
    for (int i = 0; i < k; ++i) {
      ys.push_back(test::random_vector(pb.a.rows(), rng));
      yy.segment(i * pb.a.rows(), pb.a.rows()) = ys.back();
    }
    dense = test::ridge_solve(test::chained_system(pb.a, pb.b, k), yy, delta);
  }

  std::vector<VecC> run(PacketStream& st) const {
    std::vector<VecC> est(ys.size());
    auto take = [&](const StreamOutput& o) {
      for (const auto& [i, v] : o.finalized) est[i] = v;
    };
    take(st.init(ys[0], ys[1]));
    for (std::size_t i = 2; i < ys.size(); ++i) take(st.step(ys[i]));
    for (const auto& [i, v] : st.flush()) est[i] = v;
    return est;
  }

  double error(const std::vector<VecC>& est, std::size_t lo, std::size_t hi) const {
    const Eigen::Index d = pb.dim();
    double worst = 0.0;
    for (std::size_t i = lo; i < hi; ++i)
      worst = std::max(worst, rel(est[i], dense.segment(static_cast<Eigen::Index>(i) * d, d)));
    return worst;
  }
};

MatR packet_gram(const LappedBasis& lb, int packets) {
  VecR t, w;
  lapped_quadrature(lb.length(), lb.eps(), 0, packets - 1, lb.panel_width(), t, w);
  MatR v(t.size(), packets * lb.dim());
  for (int k = 0; k < packets; ++k) v.middleCols(k * lb.dim(), lb.dim()) = lb.values(t.array() - k * lb.length());
  return v.transpose() * w.asDiagonal() * v;
}

TEST(LappedBasis, AdjacentPacketsAreOrthonormal) {
  const double l = 8.0 * kTs, eps = 2.0 * kTs;
  const LappedBasis lb(kOmega, l, eps, default_packet_dim(kOmega, l, 2.0 * eps, 2));
  const MatR g = packet_gram(lb, 3);
  EXPECT_LT((g - MatR::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(LappedBasis, ZeroOverlapReducesToSlepian) {
  const double l = 8.0 * kTs;
  const LappedBasis lb(kOmega, l, 0.0, 6);
  const SlepianBasis b = build_basis(kOmega, l, 1e-12);
  const MatR core = lb.core_values(b.grid_times);
  const MatR ip = core.transpose() * b.quad_weights.asDiagonal() * b.basis_samples.leftCols(6);
  for (Eigen::Index k = 0; k < 6; ++k) EXPECT_NEAR(std::abs(ip(k, k)), 1.0, 1e-6) << k;
}

TEST(LappedBasis, CapturedEnergyIsSortedAndRejectsBadDims) {
  const LappedBasis lb(kOmega, 8.0 * kTs, 2.0 * kTs, 10);
  const VecR& e = lb.captured_energy();
  for (Eigen::Index k = 1; k < e.size(); ++k) EXPECT_LE(e(k), e(k - 1));
  EXPECT_THROW(LappedBasis(kOmega, 8.0 * kTs, 2.0 * kTs, 0), ConfigError);
  EXPECT_THROW(LappedBasis(kOmega, 8.0 * kTs, 5.0 * kTs, 4), ConfigError);
}

TEST(PacketStream, FullBufferMatchesDenseSolve) {
  const Chain c;
  PacketStream st = PacketStream::from_basis(c.pb, c.delta, 12);
  EXPECT_LE(c.error(c.run(st), 0, c.ys.size()), 1e-6);
}

TEST(PacketStream, ShortBufferInteriorDeviation) {
  const Chain c;
  PacketStream st = PacketStream::from_basis(c.pb, c.delta, 5);
  EXPECT_LE(c.error(c.run(st), 2, c.ys.size() - 2), 1e-4);
}

TEST(PacketStream, LongerBufferIsNoWorse) {
  const Chain c;
  PacketStream s1 = PacketStream::from_basis(c.pb, c.delta, 1);
  PacketStream s8 = PacketStream::from_basis(c.pb, c.delta, 8);
  EXPECT_LE(c.error(c.run(s8), 2, c.ys.size() - 2), c.error(c.run(s1), 2, c.ys.size() - 2) + 1e-12);
}

TEST(PacketStream, RecursionConvergesAndSteadyStateAgrees) {
  const Chain c(20);
  PacketStream plain = PacketStream::from_basis(c.pb, c.delta, 5);
  const auto a = c.run(plain);
  const auto& dq = plain.q_increments();
  ASSERT_GE(dq.size(), 4u);
  EXPECT_LT(dq.back(), 1e-8 * plain.q0().norm());
  PacketStream fast = PacketStream::from_basis(c.pb, c.delta, 5);
  fast.precompute_steady_state(1e-12 * fast.q0().norm());
  const auto b = c.run(fast);
  EXPECT_TRUE(fast.steady());
  EXPECT_LT(fast.q_increments().size(), dq.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LT(rel(b[i], a[i]), 1e-8) << i;
}

TEST(PacketStream, TwoLargeProductsPerBatch) {
  const Chain c;
  PacketStream st = PacketStream::from_basis(c.pb, c.delta, 5);
  c.run(st);
  EXPECT_EQ(st.counters().large_matvecs, 2 * c.ys.size() - 1);
  EXPECT_EQ(st.counters().steps, c.ys.size() - 1);
}

TEST(PacketStream, IdentityEncoderIsTransparent) {
  const Chain c;
  PacketStream direct = PacketStream::from_basis(c.pb, c.delta, 5);
  const MatC phi = MatC::Identity(c.pb.a.rows(), c.pb.a.rows());
  PacketStream enc = PacketStream::measured(c.pb, phi, c.delta, 5);
  const auto a = c.run(direct), b = c.run(enc);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LT(rel(b[i], a[i]), 1e-12);
  EXPECT_THROW(PacketStream::measured(c.pb, MatC::Identity(4, c.pb.a.rows() + 4), c.delta), SupportError);
}

TEST(PacketStream, RejectsInvalidUse) {
  const Chain c;
  EXPECT_THROW(PacketStream(c.pb.a, c.pb.b, c.delta, 0), ConfigError);
  EXPECT_THROW(PacketStream(c.pb.a, c.pb.b.leftCols(2), c.delta), ConfigError);
  EXPECT_THROW(PacketStream(c.pb.a, c.pb.b, -1.0), ConfigError);
  PacketStream st(c.pb.a, c.pb.b, c.delta);
  EXPECT_THROW(st.step(c.ys[0]), ConfigError);
  EXPECT_THROW(st.init(c.ys[0], VecC::Zero(3)), ConfigError);
}

TEST(PacketStream, SingularChainFallsBackToRidge) {
  const Chain c;
  MatC a = c.pb.a;
  a.col(1) = a.col(0);
  MatC b = c.pb.b;
  b.col(1) = b.col(0);
  const PacketStream st(a, b, 0.0);
  EXPECT_TRUE(st.ill_conditioned());
  const double smax = PacketStream::two_packet_system(a, b).bdcSvd().singularValues()(0);
  EXPECT_NEAR(st.ridge(), 1e-8 * smax * smax, 1e-12 * smax * smax);
  const PacketStream given(a, b, 1e-3);
  EXPECT_FALSE(given.ill_conditioned());
  EXPECT_EQ(given.ridge(), 1e-3);
}

TEST(PacketBasis, ShortBatchIsRejectedWithAdvice) {
  const ArrayScenario s = make_scenario(ula(64, 20e9), kOmega, ArrivalAngle{pi / 2, 0.0}, 8);
  try {
    build_packet_basis(s, 12);
    FAIL() << "expected a config error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("snapshots per batch"), std::string::npos);
  }
}

TEST(PacketBasis, BlocksMatchPacketFunctions) {
  const Chain c;
  const MatR va = c.pb.lapped->values(c.pb.offsets);
  EXPECT_LT(rel(c.pb.a, c.pb.phases.asDiagonal() * va.cast<cplx>()), 1e-14);
  EXPECT_LT(rel(c.pb.e, c.pb.a.adjoint() * c.pb.b), 1e-14);
  EXPECT_GT(c.pb.e.norm(), 0.0);
}

TEST(PacketMerge, SingleMergeIsIdentity) {
  const LappedBasis lb(kOmega, 8.0 * kTs, 2.0 * kTs, 12);
  const PacketMerge m = build_merge(lb, 1, 12);
  EXPECT_LT((m.g.cwiseAbs() - MatR::Identity(12, 12)).cwiseAbs().maxCoeff(), 1e-8);
  const LowRankMerge lr = low_rank_merge(m);
  EXPECT_EQ(lr.w.cols(), 0);
  // the error is a square root of a cancelling difference, so 1e-8 in G shows up near 1e-7
  EXPECT_LT(lr.error, 1e-6);
}

TEST(PacketMerge, DimensionAccounting) {
  const LappedBasis lb(kOmega, 8.0 * kTs, 2.0 * kTs, 12);
  const PacketMerge m = build_merge(lb, 3, 30);
  EXPECT_EQ(m.dim(), 30);
  EXPECT_EQ(m.g.cols(), 36);
  EXPECT_EQ(low_rank_merge(m).w.cols(), 6);
  // G holds inner products of two orthonormal families, so it is a contraction
  EXPECT_LE(Eigen::JacobiSVD<MatR>(m.g).singularValues()(0), 1.0 + 1e-8);
  EXPECT_THROW(m.project({VecC::Zero(12)}), ConfigError);
  const LappedBasis other(kOmega, 16.0 * kTs, 2.0 * kTs, 12);
  EXPECT_THROW(build_merge(lb, std::make_shared<LappedBasis>(other), 3), ConfigError);
}

TEST(PacketMerge, LowRankFormMatchesProjection) {
  const LappedBasis lb(kOmega, 8.0 * kTs, 2.0 * kTs, 12);
  const PacketMerge m = build_merge(lb, 3, 30);
  const LowRankMerge lr = low_rank_merge(m);
  std::mt19937_64 rng(9);
  const VecC x = test::random_vector(36, rng);
  const VecC ref = m.g.transpose().cast<cplx>() * (m.g.cast<cplx>() * x);
  EXPECT_LT(rel(lr.apply(x), ref), 2.0 * lr.error + 1e-10);
}

}  // namespace
}  // namespace sbb
