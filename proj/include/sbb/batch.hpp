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

#include <cmath>
#include <vector>

#include "sbb/common.hpp"
#include "sbb/forward.hpp"

namespace sbb {

struct SnapshotBatch {
  MatC samples;  // M x N, column n is the snapshot y[n]
  VecR times;

  // snapshot-major stacking matching the rows of ForwardModel::stacked
  VecC stacked() const { return Eigen::Map<const VecC>(samples.data(), samples.size()); }
};

struct LsResult {
  VecC alpha;
  double residual = 0.0;
  double condition = 0.0;
  double ridge = 0.0;          // effective ridge actually applied
  bool ill_conditioned = false;
};

// Reusable least-squares operator: the pseudo-inverse (or ridge inverse) is
// formed once and then applied to any number of batches.
class LeastSquares {
 public:
  LeastSquares(const MatC& a, double delta = 0.0) : a_(a) {
    if (delta < 0.0) throw ConfigError("ridge parameter must be non-negative");
    Eigen::BDCSVD<MatC> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VecR s = svd.singularValues();
    const double smax = s.size() ? s(0) : 0.0;
    const double smin = s.size() ? s(s.size() - 1) : 0.0;
    condition_ = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
    ridge_ = 2.0 * delta;
    if (delta == 0.0 && condition_ > 1e10) {
      ill_ = true;
      ridge_ = 1e-8 * smax * smax;
    }
    VecR inv(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const double den = s(i) * s(i) + ridge_;
      inv(i) = den > 0.0 ? s(i) / den : 0.0;
    }
    w_ = svd.matrixV() * inv.asDiagonal() * svd.matrixU().adjoint();
  }

  LsResult solve(const VecC& y) const {
    if (y.size() != a_.rows()) throw ConfigError("batch length does not match the forward model");
    LsResult r;
    r.alpha = w_ * y;
    r.residual = (y - a_ * r.alpha).norm();
    r.condition = condition_;
    r.ridge = ridge_;
    r.ill_conditioned = ill_;
    return r;
  }

  const MatC& weights() const { return w_; }  // D x MN
  double condition() const { return condition_; }

 private:
  MatC a_;
  MatC w_;
  double condition_ = 0.0;
  double ridge_ = 0.0;
  bool ill_ = false;
};

// min 1/2 |y - A alpha|^2 + delta |alpha|^2
inline LsResult solve_ls(const ForwardModel& model, const SnapshotBatch& batch, double delta = 0.0) {
  return LeastSquares(model.stacked, delta).solve(batch.stacked());
}

inline LsResult solve_ls(const MatC& a, const VecC& y, double delta = 0.0) { return LeastSquares(a, delta).solve(y); }

// Orthonormal basis (M x D_1) of one snapshot's Slepian subspace: phased
// samples of the Slepian basis for the aperture interval at each element.
inline MatC snapshot_subspace(const ArrayScenario& s, int margin, double eps = 1e-3) {
  const double t1 = s.t1();
  const Eigen::Index m = s.elements();
  const int d1 = static_cast<int>(std::ceil(2.0 * s.bandwidth * t1 - 1e-12)) + margin;
  if (d1 < 1) throw ConfigError("snapshot subspace dimension must be positive");
  if (d1 > m)
    throw ConfigError("snapshot subspace dimension " + std::to_string(d1) + " exceeds the " + std::to_string(m) +
                      " available elements");
  const double len = std::max(t1, s.plan.sample_interval);
  const SlepianBasis b = build_basis(s.bandwidth, len, eps, 48, d1);
  const VecR tau = s.delays();
  const double center = 0.5 * (tau.maxCoeff() + tau.minCoeff());
  VecR u = (center - tau.array()) + 0.5 * len;
  u = u.cwiseMax(0.0).cwiseMin(len);
  MatC a(m, d1);
  const MatR psi = evaluate(b, d1, u);
  for (Eigen::Index i = 0; i < m; ++i)
    a.row(i) = std::polar(1.0, -2.0 * pi * s.geometry.carrier * tau(i)) * psi.row(i).cast<cplx>();
  Eigen::BDCSVD<MatC> svd(a, Eigen::ComputeThinU);
  return svd.matrixU();
}

// Snapshot-encoded least squares: beta_n = U^H y[n], A_n ~ U C_n with C_n = U^H A_n,
// then min sum_n |beta_n - C_n alpha|^2 + delta |alpha|^2 by normal equations.
inline LsResult encoded_solve(const ForwardModel& model, const SnapshotBatch& batch, const MatC& u,
                              double delta = 0.0) {
  const Eigen::Index m = model.elements, d = model.dim();
  if (u.rows() != m) throw ConfigError("snapshot subspace basis has the wrong row count");
  if (u.cols() > m) throw ConfigError("snapshot subspace dimension exceeds element count");
  MatC gram = MatC::Zero(d, d);
  VecC rhs = VecC::Zero(d);
  for (Eigen::Index n = 0; n < model.snapshots; ++n) {
    const MatC c = u.adjoint() * model.per_snapshot(n);
    const VecC beta = u.adjoint() * batch.samples.col(n);
    gram.noalias() += c.adjoint() * c;
    rhs.noalias() += c.adjoint() * beta;
  }
  gram.diagonal().array() += delta;
  Eigen::LDLT<MatC> ldlt(gram);
  LsResult r;
  if (ldlt.info() != Eigen::Success) throw NumericalError("encoded normal equations are not positive definite");
  r.alpha = ldlt.solve(rhs);
  r.residual = (batch.stacked() - model.stacked * r.alpha).norm();
  r.ridge = delta;
  return r;
}

inline LsResult encoded_solve(const ForwardModel& model, const SnapshotBatch& batch, const ArrayScenario& s,
                              int margin, double delta = 0.0) {
  return encoded_solve(model, batch, snapshot_subspace(s, margin), delta);
}

// Classic delay-and-sum on uniformly sampled element streams (M x Nt): undo
// the carrier phase, fractionally advance each element by tau_m with an R-tap
// truncated sinc (zero history beyond the stream), and average.
inline VecC delay_and_sum(const MatC& streams, const VecR& tau, double carrier, double ts, int taps) {
  if (taps < 1) throw ConfigError("delay-and-sum needs at least one tap");
  const Eigen::Index m = streams.rows(), nt = streams.cols();
  VecC out = VecC::Zero(nt);
  for (Eigen::Index i = 0; i < m; ++i) {
    const cplx ph = std::polar(1.0, 2.0 * pi * carrier * tau(i));
    const double shift = tau(i) / ts;
    for (Eigen::Index n = 0; n < nt; ++n) {
      const double x = static_cast<double>(n) + shift;
      const auto k0 = static_cast<Eigen::Index>(std::ceil(x - 0.5 * taps - 1e-12));
      cplx acc = 0.0;
      for (int j = 0; j < taps; ++j) {
        const Eigen::Index k = k0 + j;
        if (k < 0 || k >= nt) continue;
        const double z = x - static_cast<double>(k);
        const double h = z == 0.0 ? 1.0 : std::sin(pi * z) / (pi * z);
        acc += h * streams(i, k);
      }
      out(n) += ph * acc;
    }
  }
  return out / static_cast<double>(m);
}

inline VecC synthesize_samples(const SlepianBasis& b, const VecC& alpha, const VecR& output_times) {
  return build_synthesis(b, output_times, alpha.size()).cast<cplx>() * alpha;
}

}  // namespace sbb
