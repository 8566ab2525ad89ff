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

#include <string>
#include <utility>
#include <vector>

#include "sbb/common.hpp"
#include "sbb/forward.hpp"
#include "sbb/slepian.hpp"

namespace sbb {

struct NullProjector {
  MatC range;                  // orthonormal basis of range(A_I)
  Eigen::Index interferer_dim = 0;

  MatC matrix() const {
    const Eigen::Index n = range.rows();
    return MatC::Identity(n, n) - range * range.adjoint();
  }
  // P_perp x without forming the MN x MN matrix
  MatC apply(const MatC& x) const { return x - range * (range.adjoint() * x); }
  // P x, the part that is removed
  MatC apply_parallel(const MatC& x) const { return range * (range.adjoint() * x); }
};

// Orthogonal projector onto the complement of range(A_I); rank-deficient
// inputs are handled through the SVD range with a 1e-12 relative cutoff.
inline NullProjector null_projector(const MatC& a_i) {
  Eigen::BDCSVD<MatC> svd(a_i, Eigen::ComputeThinU);
  const VecR& s = svd.singularValues();
  Eigen::Index r = 0;
  const double cut = s.size() ? 1e-12 * s(0) : 0.0;
  while (r < s.size() && s(r) > cut) ++r;
  return {svd.matrixU().leftCols(r), a_i.cols()};
}

// Nulled coefficient estimate A^dagger P_perp y
inline VecC nulled_estimate(const MatC& a_pinv, const NullProjector& p, const VecC& y) {
  return a_pinv * p.apply(y);
}

// R = U C U^H + sigma^2 I
struct CovarianceModel {
  MatC u;
  MatC c;
  double noise_power = 0.0;

  Eigen::Index size() const { return u.rows(); }
  Eigen::Index rank() const { return u.cols(); }
  MatC dense() const {
    MatC r = u * c * u.adjoint();
    r.diagonal().array() += noise_power;
    return r;
  }
};

struct WoodburyResult {
  MatC value;
  bool pseudo_inverse = false;
};

// R^{-1} X = X / s2 - U (C^{-1} + U^H U / s2)^{-1} U^H X / s2^2
inline WoodburyResult woodbury_apply_checked(const CovarianceModel& r, const MatC& x) {
  if (!(r.noise_power > 0.0)) throw NumericalError("Woodbury inverse needs a positive noise power");
  const double s2 = r.noise_power;
  WoodburyResult out;
  if (r.rank() == 0) {
    out.value = x / s2;
    return out;
  }
  Eigen::FullPivLU<MatC> lu(r.c);
  MatC cinv;
  if (lu.isInvertible()) {
    cinv = lu.inverse();
  } else {
    cinv = pinv(r.c);
    out.pseudo_inverse = true;
  }
  const MatC core = cinv + r.u.adjoint() * r.u / s2;
  const MatC ux = r.u.adjoint() * x;
  out.value = x / s2 - r.u * core.partialPivLu().solve(ux) / (s2 * s2);
  return out;
}

inline MatC woodbury_apply(const CovarianceModel& r, const MatC& x) { return woodbury_apply_checked(r, x).value; }

struct AdaptiveWeights {
  MatC w;  // D x MN
  bool regularized = false;
};

// Minimizes trace(W R W^H) subject to W C_j = F_j for every constraint block.
// The first block is always the distortionless W A = I.
inline AdaptiveWeights constrained_min_variance(const CovarianceModel& r,
                                                const std::vector<std::pair<MatC, MatC>>& blocks) {
  Eigen::Index cols = 0;
  const Eigen::Index rows = blocks.front().second.rows();
  for (const auto& [cm, f] : blocks) {
    if (cm.rows() != r.size()) throw ConfigError("constraint matrix row count does not match the covariance");
    if (f.rows() != rows || f.cols() != cm.cols()) throw ConfigError("constraint right-hand side has the wrong shape");
    cols += cm.cols();
  }
  MatC cs(r.size(), cols), fs(rows, cols);
  Eigen::Index at = 0;
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    cs.middleCols(at, blocks[j].first.cols()) = blocks[j].first;
    fs.middleCols(at, blocks[j].first.cols()) = blocks[j].second;
    // each block must add its full column count to the span
    Eigen::ColPivHouseholderQR<MatC> qr(cs.leftCols(at + blocks[j].first.cols()));
    qr.setThreshold(1e-10);
    if (qr.rank() < at + blocks[j].first.cols())
      throw NumericalError("constraint block " + std::to_string(j) + " is degenerate or conflicts with earlier blocks");
    at += blocks[j].first.cols();
  }
  const MatC rc = woodbury_apply(r, cs);  // R^{-1} C
  MatC g = cs.adjoint() * rc;
  g = 0.5 * (g + g.adjoint()).eval();
  AdaptiveWeights out;
  Eigen::LLT<MatC> llt(g);
  if (llt.info() != Eigen::Success) {
    g.diagonal().array() += 1e-10 * g.diagonal().real().cwiseAbs().maxCoeff();
    llt.compute(g);
    out.regularized = true;
    if (llt.info() != Eigen::Success) throw NumericalError("constraint Gram matrix is singular");
  }
  out.w = fs * llt.solve(rc.adjoint());
  return out;
}

// W = (A^H R^{-1} A)^{-1} A^H R^{-1}
inline AdaptiveWeights mvdr_weights(const MatC& a, const CovarianceModel& r) {
  return constrained_min_variance(r, {{a, MatC::Identity(a.cols(), a.cols())}});
}

// MVDR plus extra blocks W C_j = F_j (for instance W A(theta_I) = 0)
inline AdaptiveWeights lcmv_weights(const MatC& a, const CovarianceModel& r,
                                    const std::vector<std::pair<MatC, MatC>>& extra) {
  std::vector<std::pair<MatC, MatC>> blocks{{a, MatC::Identity(a.cols(), a.cols())}};
  blocks.insert(blocks.end(), extra.begin(), extra.end());
  return constrained_min_variance(r, blocks);
}

// Low-rank factor of the covariance of a flat-spectrum process observed at
// non-uniform times. The uniform-grid Slepian samples S_u are interpolated to
// the target times (S_nu = H S_u) and re-orthogonalized by SVD, so
// S_nu diag(lambda) S_nu^H = U_nu C_nu U_nu^H with U_nu orthonormal.
struct LowRankFactor {
  MatC u;
  VecR c;  // diagonal of the core
};

inline LowRankFactor interpolate_basis_nonuniform(const SlepianBasis& b, const VecR& targets, Eigen::Index count = -1) {
  if (count < 0) count = b.kept();
  const Eigen::SparseMatrix<double> h = interpolation_matrix(b, targets);
  MatR snu = h * b.basis_samples.leftCols(count);
  for (Eigen::Index k = 0; k < count; ++k) snu.col(k) *= std::sqrt(b.eigenvalues(k));
  Eigen::BDCSVD<MatR> svd(snu, Eigen::ComputeThinU);
  LowRankFactor f;
  f.u = svd.matrixU().cast<cplx>();
  f.c = svd.singularValues().array().square();
  return f;
}

struct SourceSpec {
  ArrivalAngle angle;
  double power = 1.0;  // per-sample power at each element
};

// Known-statistics covariance of the array samples: each source contributes
// power/(2 Omega) * D_phi B D_phi^H through its Slepian factor, truncated to the
// smallest rank holding 1 - eps of its trace.
inline CovarianceModel build_covariance(const ArrayScenario& s, const std::vector<SourceSpec>& sources, double noise_power,
                                        double eps = 1e-3) {
  std::vector<MatC> us;
  std::vector<VecR> cs;
  Eigen::Index total = 0;
  for (const auto& src : sources) {
    ArrayScenario sc = s;
    sc.angle = src.angle;
    const BasisInterval bi = basis_interval(sc);
    // keep enough functions that the dropped tail is far below eps
    const SlepianBasis b = build_basis(s.bandwidth, bi.length, std::min(eps, 1e-3) * 1e-3);
    const VecR u = sample_offsets(sc, bi);
    LowRankFactor f = interpolate_basis_nonuniform(b, u);
    f.c *= src.power / (2.0 * s.bandwidth);
    const double tr = f.c.sum();
    Eigen::Index k = 0;
    double acc = 0.0;
    while (k < f.c.size() && acc < (1.0 - eps) * tr) acc += f.c(k++);
    const VecC ph = carrier_phases(sc);
    us.push_back(ph.asDiagonal() * f.u.leftCols(k));
    cs.push_back(f.c.head(k));
    total += k;
  }
  CovarianceModel r;
  r.noise_power = noise_power;
  r.u.resize(s.elements() * s.snapshots(), total);
  r.c = MatC::Zero(total, total);
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < us.size(); ++i) {
    r.u.middleCols(at, us[i].cols()) = us[i];
    r.c.diagonal().segment(at, cs[i].size()) = cs[i].cast<cplx>();
    at += us[i].cols();
  }
  return r;
}

// Exact dense covariance of a source set, for checks on small problems
inline MatC dense_covariance(const ArrayScenario& s, const std::vector<SourceSpec>& sources, double noise_power) {
  const Eigen::Index n = s.elements() * s.snapshots();
  MatC r = MatC::Zero(n, n);
  for (const auto& src : sources) {
    ArrayScenario sc = s;
    sc.angle = src.angle;
    const VecR u = sample_offsets(sc, basis_interval(sc));
    const VecC ph = carrier_phases(sc);
    const MatR g = build_kernel_gram(u, s.bandwidth) * (src.power / (2.0 * s.bandwidth));
    r += ph.asDiagonal() * g.cast<cplx>() * ph.conjugate().asDiagonal();
  }
  r.diagonal().array() += noise_power;
  return r;
}

}  // namespace sbb
