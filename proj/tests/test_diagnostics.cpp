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

#include "sbb/batch.hpp"
#include "sbb/diagnostics.hpp"
#include "support.hpp"

namespace sbb {
namespace {

using test::rel;

TEST(Budget, TruncationIsTheEigenvalueTail) {
  VecR lam(4);
  lam << 1.0, 0.5, 0.25, 0.125;
  EXPECT_DOUBLE_EQ(truncation_bias(lam, 2), 0.375);
  EXPECT_DOUBLE_EQ(truncation_bias(lam, 0), 1.875);
  EXPECT_THROW(truncation_bias(lam, 4), ConfigError);
  EXPECT_THROW(truncation_bias(lam, -1), ConfigError);
}

struct Toy {
  ArrayScenario s = test::toy_scenario(8, 50.0);
  SlepianBasis b;
  Eigen::Index d;
  MatC full, a;
  Toy() {
    b = scenario_basis(s, 1e-3);
    d = b.dim;
    b = scenario_basis(s, 1e-3, static_cast<int>(d) + 10);
    full = build_forward(s, b, b.kept(), false).stacked;
    a = full.leftCols(d);
  }
};

TEST(Budget, MismatchAgreesWithExplicitTail) {
  const Toy t;
  const VecR lam = t.b.eigenvalues.head(t.b.kept());
  const MatC cov = t.full * lam.cast<cplx>().asDiagonal() * t.full.adjoint();
  const MatC ap = pinv(t.a);
  const double tail = mismatch_bias_tail(ap, t.full.rightCols(t.b.kept() - t.d), lam.tail(t.b.kept() - t.d));
  EXPECT_GT(tail, 0.0);
  EXPECT_LT(std::abs(mismatch_bias(ap, cov, lam) - tail), 1e-8 * lam.sum());
  // a covariance living in the model span leaves no mismatch
  const MatC in_model = t.a * lam.head(t.d).cast<cplx>().asDiagonal() * t.a.adjoint();
  EXPECT_LT(mismatch_bias(ap, in_model, lam), 1e-10 * lam.sum());
}

TEST(Budget, VarianceMultiplierIsInverseGramTrace) {
  const Toy t;
  const double ref = (t.a.adjoint() * t.a).inverse().trace().real();
  EXPECT_NEAR(variance_multiplier(t.a), ref, 1e-8 * ref);
  MatC dup(t.a.rows(), 2);
  dup << t.a.col(0), t.a.col(0);
  EXPECT_THROW(variance_multiplier(dup), NumericalError);
}

TEST(Budget, NullingBiasVanishesWithoutInterferer) {
  const Toy t;
  NullProjector none;
  none.range = MatC::Zero(t.a.rows(), 0);
  EXPECT_EQ(nulling_bias(t.a, pinv(t.a), none, t.b.eigenvalues), 0.0);
}

TEST(Budget, NullingBiasGrowsAsInterfererApproaches) {
  const Toy t;
  const MatC ap = pinv(t.a);
  auto bias_at = [&](double az) {
    ArrayScenario si = t.s;
    si.angle = ArrivalAngle{deg2rad(az), 0.0};
    const SlepianBasis bi = scenario_basis(si, 1e-3);
    return nulling_bias(t.a, ap, null_projector(build_forward(si, bi, bi.dim).stacked), t.b.eigenvalues);
  };
  const double far = bias_at(-60.0), near = bias_at(55.0);
  EXPECT_GT(near, far);
  EXPECT_GT(near, 0.0);
}

TEST(Budget, MonteCarloMatchesPrediction) {
  const Toy t;
  const ErrorBudget e = error_budget(t.s, t.d);
  const double noise = (e.truncation_bias + e.mismatch_bias) / e.variance_multiplier;
  const double predicted = e.total(noise);
  const MatC ap = pinv(t.a);
  const VecR lam = t.b.eigenvalues.head(t.b.kept());
  std::mt19937_64 rng(21);
  const int trials = 3000;
  double acc = 0.0;
  for (int i = 0; i < trials; ++i) {
    VecC coef(lam.size());
    for (Eigen::Index k = 0; k < lam.size(); ++k) coef(k) = complex_normal(rng, lam(k));
    VecC y = t.full * coef;
    for (auto& v : y) v += complex_normal(rng, noise);
    acc += (coef.head(t.d) - ap * y).squaredNorm() + coef.tail(lam.size() - t.d).squaredNorm();
  }
  EXPECT_NEAR(acc / trials, predicted, 0.1 * predicted);
  EXPECT_NEAR(e.energy, 2.0 * t.s.bandwidth * e.tn, 1e-12 * e.energy);
}

TEST(Snr, CapAndKnownValue) {
  const VecC truth = VecC::Ones(4);
  EXPECT_NEAR(beamformed_snr(0.9 * truth, truth), 20.0, 1e-12);
  EXPECT_EQ(beamformed_snr(truth, truth), snr_cap_db);
  EXPECT_NEAR(beamformed_snr(VecC::Zero(4), truth), 0.0, 1e-12);
  EXPECT_THROW(beamformed_snr(truth, VecC::Zero(4)), NumericalError);
  EXPECT_THROW(beamformed_snr(truth, VecC::Ones(3)), ConfigError);
}

TEST(Snr, GainHelpers) {
  EXPECT_NEAR(ideal_gain(64), 18.061799739838872, 1e-12);
  EXPECT_NEAR(subspace_gain(2048, 49), 10.0 * std::log10(2048.0 / 49.0), 1e-12);
  EXPECT_DOUBLE_EQ(array_gain(10.0, 27.5), 17.5);
}

TEST(Snr, ProjectionGainOnPureNoise) {
  // least squares onto D of MN dimensions keeps D/MN of white noise
  const Toy t;
  const MatC proj = t.a * pinv(t.a);
  std::mt19937_64 rng(4);
  double kept = 0.0, total = 0.0;
  for (int i = 0; i < 500; ++i) {
    const VecC n = test::random_vector(t.a.rows(), rng);
    kept += (proj * n).squaredNorm();
    total += n.squaredNorm();
  }
  const double measured = 10.0 * std::log10(total / kept);
  EXPECT_NEAR(measured, subspace_gain(t.a.rows(), t.d), 0.3);
}

}  // namespace
}  // namespace sbb
