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
#pragma once

#include <random>
#include <vector>

#include "sbb/common.hpp"
#include "sbb/forward.hpp"
#include "sbb/scenario.hpp"

namespace sbb::test {

inline VecC random_vector(Eigen::Index n, std::mt19937_64& rng) {
  VecC v(n);
  for (auto& x : v) x = complex_normal(rng, 1.0);
  return v;
}

inline MatC random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  MatC m(r, c);
  for (Eigen::Index j = 0; j < c; ++j) m.col(j) = random_vector(r, rng);
  return m;
}

inline double rel(const MatC& a, const MatC& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

// Four elements at uneven half-wavelength multiples so no sample pattern is mirror symmetric
inline ArrayGeometry uneven_line(double carrier = 20e9) {
  ArrayGeometry g;
  g.carrier = carrier;
  const double h = speed_of_light / carrier / 2.0;
  for (double y : {0.0, 0.7, 1.9, 3.0}) g.positions.emplace_back(0.0, y * h, 0.0);
  return g;
}

inline ArrayScenario toy_scenario(Eigen::Index n = 8, double azimuth_deg = 50.0) {
  return make_scenario(uneven_line(), 5e9, ArrivalAngle{deg2rad(azimuth_deg), 0.0}, n);
}

// Stacked K-packet system of the chained least-squares problem
inline MatC chained_system(const MatC& a, const MatC& b, int k) {
  const Eigen::Index n = a.rows(), d = a.cols();
  MatC big = MatC::Zero(k * n, k * d);
  for (int i = 0; i < k; ++i) {
    big.block(i * n, i * d, n, d) = a;
    if (i > 0) big.block(i * n, (i - 1) * d, n, d) = b;
  }
  return big;
}

// min |y - M x|^2 + delta |x|^2 by an augmented QR, independent of any normal-equation path
inline VecC ridge_solve(const MatC& m, const VecC& y, double delta) {
  MatC aug(m.rows() + m.cols(), m.cols());
  aug << m, std::sqrt(delta) * MatC::Identity(m.cols(), m.cols());
  VecC rhs = VecC::Zero(aug.rows());
  rhs.head(y.size()) = y;
  return aug.colPivHouseholderQr().solve(rhs);
}

}  // namespace sbb::test
