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

#include <algorithm>
#include <string>
#include <vector>

#include "sbb/array.hpp"
#include "sbb/common.hpp"
#include "sbb/slepian.hpp"

namespace sbb {

// Geometry, band, look direction and snapshot times of one batch
struct ArrayScenario {
  ArrayGeometry geometry;
  double bandwidth = 0.0;  // Omega, Hz
  ArrivalAngle angle;
  SamplingPlan plan;

  Eigen::Index elements() const { return geometry.size(); }
  Eigen::Index snapshots() const { return plan.count(); }
  VecR delays() const { return sbb::delays(geometry, angle); }
  double t1() const { return aperture_span(geometry, angle); }
  double tn() const { return t1() + (plan.snapshot_times(snapshots() - 1) - plan.snapshot_times(0)); }
};

inline ArrayScenario make_scenario(ArrayGeometry g, double omega, ArrivalAngle a, Eigen::Index n) {
  g.validate();
  if (!(omega > 0.0)) throw ConfigError("bandwidth must be positive");
  return {std::move(g), omega, a, uniform_plan(omega, n)};
}

// Where the batch lives inside the basis interval [0, length]: a sample taken
// at time t by an element with delay tau sits at t - tau + shift.
struct BasisInterval {
  double length = 0.0;
  double shift = 0.0;
};

// The earliest delayed sample sits at 0. A zero aperture (broadside) with a
// single snapshot would give an empty interval, so that case is widened by one
// sample interval on each side.
inline BasisInterval basis_interval(const ArrayScenario& s) {
  const VecR tau = s.delays();
  const double t0 = s.plan.snapshot_times(0);
  BasisInterval bi;
  bi.length = s.tn();
  bi.shift = tau.maxCoeff() - t0;
  if (s.tn() <= 1e-9 * s.plan.sample_interval) {
    bi.length += 2.0 * s.plan.sample_interval;
    bi.shift += s.plan.sample_interval;
  }
  return bi;
}

inline SlepianBasis scenario_basis(const ArrayScenario& s, double eps, int min_kept = 0, int grid_density = 48) {
  return build_basis(s.bandwidth, basis_interval(s).length, eps, grid_density, min_kept);
}

struct ForwardModel {
  MatC stacked;           // MN x D, row n*M + m
  VecR sample_offsets;    // MN, positions inside the basis interval
  VecC carrier_phases;    // MN, exp(-j 2 pi f_c tau_m)
  Eigen::Index elements = 0;
  Eigen::Index snapshots = 0;
  BasisInterval interval;
  double condition = 0.0;

  Eigen::Index dim() const { return stacked.cols(); }
  auto per_snapshot(Eigen::Index n) const { return stacked.middleRows(n * elements, elements); }
};

inline VecR sample_offsets(const ArrayScenario& s, const BasisInterval& bi) {
  const VecR tau = s.delays();
  const Eigen::Index m = s.elements(), n = s.snapshots();
  VecR u(m * n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i) u(j * m + i) = s.plan.snapshot_times(j) - tau(i) + bi.shift;
  return u;
}

inline VecC carrier_phases(const ArrayScenario& s) {
  const VecR tau = s.delays();
  const Eigen::Index m = s.elements(), n = s.snapshots();
  VecC p(m * n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i) p(j * m + i) = std::polar(1.0, -2.0 * pi * s.geometry.carrier * tau(i));
  return p;
}

// Stacked model A(theta): entry (n*M + m, k) is exp(-j 2 pi f_c tau_m) psi_k(t_n - tau_m)
inline ForwardModel build_forward(const ArrayScenario& s, const SlepianBasis& b, Eigen::Index d,
                                  bool with_condition = true) {
  if (d < 1 || d > b.kept())
    throw ConfigError("model dimension " + std::to_string(d) + " outside kept basis size " + std::to_string(b.kept()));
  ForwardModel f;
  f.elements = s.elements();
  f.snapshots = s.snapshots();
  f.interval = basis_interval(s);
  f.sample_offsets = sample_offsets(s, f.interval);
  f.carrier_phases = carrier_phases(s);
  const double slack = 1e-12 * b.interval_length;
  std::string bad;
  int nbad = 0;
  for (Eigen::Index l = 0; l < f.sample_offsets.size(); ++l) {
    const double u = f.sample_offsets(l);
    if (u < -slack || u > b.interval_length + slack) {
      if (nbad++ < 8) bad += " (m=" + std::to_string(l % f.elements) + ",n=" + std::to_string(l / f.elements) + ")";
    } else {
      f.sample_offsets(l) = std::clamp(u, 0.0, b.interval_length);
    }
  }
  if (nbad) throw DomainError("sample offsets outside the basis interval at" + bad + (nbad > 8 ? " ..." : ""));
  const MatR psi = evaluate(b, d, f.sample_offsets);
  f.stacked = f.carrier_phases.asDiagonal() * psi.cast<cplx>();
  if (with_condition) f.condition = condition_number(f.stacked);
  return f;
}

// Real symmetric sinc Gram of the sample offsets, diagonal 2 Omega
inline MatR build_kernel_gram(const VecR& offsets, double omega) {
  const Eigen::Index n = offsets.size();
  MatR g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    g(i, i) = 2.0 * omega;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double x = 2.0 * omega * (offsets(i) - offsets(j));
      const double v = x == 0.0 ? 2.0 * omega : 2.0 * omega * std::sin(pi * x) / (pi * x);
      g(i, j) = g(j, i) = v;
    }
  }
  return g;
}

// Psi with rows psi_d(output_times[n]), times in basis coordinates
inline MatR build_synthesis(const SlepianBasis& b, const VecR& output_times, Eigen::Index d) {
  return evaluate(b, d, output_times);
}

// Output sample positions (array-center times t_n) inside the basis interval
inline VecR output_offsets(const ArrayScenario& s, const BasisInterval& bi) {
  return s.plan.snapshot_times.array() + bi.shift;
}

}  // namespace sbb
