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

#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace sbb {

using cplx = std::complex<double>;
using MatC = Eigen::MatrixXcd;
using VecC = Eigen::VectorXcd;
using MatR = Eigen::MatrixXd;
using VecR = Eigen::VectorXd;

inline constexpr double pi = std::numbers::pi;
inline constexpr double speed_of_light = 299792458.0;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// bad user input: config files, geometry, parameter ranges
struct ConfigError : Error {
  using Error::Error;
};

// eigensolver breakdown, loss of definiteness, singular systems
struct NumericalError : Error {
  using Error::Error;
};

// evaluation point outside a basis interval
struct DomainError : Error {
  using Error::Error;
};

// encoder or packet geometry that the streaming recursion cannot handle
struct SupportError : Error {
  using Error::Error;
};

inline double sqr(double x) { return x * x; }

// Moore-Penrose pseudo-inverse by SVD with a relative cutoff
template <typename Mat>
Mat pinv(const Mat& a, double rcond = 1e-12) {
  Eigen::BDCSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double cut = s.size() ? rcond * s(0) : 0.0;
  Eigen::VectorXd inv(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) inv(i) = s(i) > cut ? 1.0 / s(i) : 0.0;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().adjoint();
}

inline double condition_number(const MatC& a) {
  Eigen::BDCSVD<MatC> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  const double lo = s(s.size() - 1);
  return lo > 0 ? s(0) / lo : std::numeric_limits<double>::infinity();
}

}  // namespace sbb
