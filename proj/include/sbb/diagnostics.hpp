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
#include <optional>
#include <string>

#include "sbb/adaptive.hpp"
#include "sbb/common.hpp"
#include "sbb/forward.hpp"
#include "sbb/slepian.hpp"

namespace sbb {

// Expected squared error of the LS estimate under the flat-spectrum model
//   E|s - s_hat|^2 = truncation + mismatch + sigma^2 * variance_multiplier
struct ErrorBudget {
  Eigen::Index dim = 0;
  double truncation_bias = 0.0;
  double mismatch_bias = 0.0;
  double variance_multiplier = 0.0;  // seconds, trace((A^H A)^{-1})
  std::optional<double> nulling_bias;
  double energy = 0.0;  // expected signal energy 2 Omega T_N
  double tn = 0.0;

  // energy terms as fractions of the expected signal energy, variance on the unit interval
  double truncation_normalized() const { return truncation_bias / energy; }
  double mismatch_normalized() const { return mismatch_bias / energy; }
  double variance_normalized() const { return variance_multiplier / tn; }
  double total(double noise_power) const {
    return truncation_bias + mismatch_bias + noise_power * variance_multiplier + nulling_bias.value_or(0.0);
  }
};

inline double truncation_bias(const VecR& lam, Eigen::Index d) {
  if (d < 0) throw ConfigError("negative model dimension");
  if (lam.size() <= d)
    throw ConfigError("truncation bias needs eigenvalues beyond dimension " + std::to_string(d) +
                      "; rebuild the basis with more kept functions");
  return lam.tail(lam.size() - d).sum();
}

inline double variance_multiplier(const MatC& a) {
  Eigen::BDCSVD<MatC> svd(a);
  const VecR& s = svd.singularValues();
  if (s.size() == 0 || s(s.size() - 1) <= 1e-14 * s(0)) throw NumericalError("forward model is rank deficient");
  return s.array().square().inverse().sum();
}

// trace(A^+ (B - sum_{k<D} lambda_k a_k a_k^H) A^+H); since A^+ a_k = e_k for
// the modelled columns the subtracted part is sum_{k<D} lambda_k.
inline double mismatch_bias(const MatC& a_pinv, const MatC& b_cov, const VecR& lam) {
  const Eigen::Index d = a_pinv.rows();
  const double full = (a_pinv * b_cov * a_pinv.adjoint()).trace().real();
  return std::max(0.0, full - lam.head(d).sum());
}

// Same quantity from the explicit tail of the expansion
inline double mismatch_bias_tail(const MatC& a_pinv, const MatC& a_tail, const VecR& lam_tail) {
  const MatC x = a_pinv * a_tail;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < x.cols(); ++k) acc += lam_tail(k) * x.col(k).squaredNorm();
  return acc;
}

// E|alpha - alpha_hat|^2 = trace(Z Lambda Z^H), Z = A^+ P(theta_I) A
inline double nulling_bias(const MatC& a, const MatC& a_pinv, const NullProjector& p, const VecR& lam) {
  const MatC pa = a - p.apply(a);
  const MatC z = a_pinv * pa;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < z.cols(); ++k) acc += lam(k) * z.col(k).squaredNorm();
  return acc;
}

// Sample covariance of the flat process as seen by the array: phased sinc Gram
inline MatC signal_covariance(const ForwardModel& f, double omega) {
  const MatR k = build_kernel_gram(f.sample_offsets, omega);
  return f.carrier_phases.asDiagonal() * k.cast<cplx>() * f.carrier_phases.conjugate().asDiagonal();
}

inline ErrorBudget error_budget(const ArrayScenario& s, Eigen::Index d, double eps = 1e-3) {
  const SlepianBasis b = scenario_basis(s, eps, static_cast<int>(d) + 8);
  const ForwardModel f = build_forward(s, b, d, false);
  ErrorBudget e;
  e.dim = d;
  e.tn = b.interval_length;
  e.energy = 2.0 * s.bandwidth * e.tn;
  e.truncation_bias = truncation_bias(b.eigenvalues.head(b.kept()), d);
  const MatC ap = pinv(f.stacked);
  e.mismatch_bias = mismatch_bias(ap, signal_covariance(f, s.bandwidth), b.eigenvalues);
  e.variance_multiplier = variance_multiplier(f.stacked);
  return e;
}

constexpr double snr_cap_db = 300.0;

// 10 log10(|truth|^2 / |truth - estimate|^2), capped for exact reconstructions
inline double beamformed_snr(const VecC& estimate, const VecC& truth) {
  if (estimate.size() != truth.size()) throw ConfigError("estimate and truth lengths differ");
  const double p = truth.squaredNorm();
  if (!(p > 0.0)) throw NumericalError("SNR undefined for a zero-energy reference");
  const double e = (truth - estimate).squaredNorm();
  if (e <= p * std::pow(10.0, -snr_cap_db / 10.0)) return snr_cap_db;
  return 10.0 * std::log10(p / e);
}

inline double array_gain(double nominal_snr_db, double beamformed_snr_db) { return beamformed_snr_db - nominal_snr_db; }

inline double ideal_gain(Eigen::Index elements) { return 10.0 * std::log10(static_cast<double>(elements)); }

// Gain expected from projecting white noise onto a D-dimensional subspace of MN samples
inline double subspace_gain(Eigen::Index samples, Eigen::Index d) {
  return 10.0 * std::log10(static_cast<double>(samples) / static_cast<double>(d));
}

}  // namespace sbb
