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
#include <bit>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <lapacke.h>

#include "sbb/common.hpp"

namespace sbb {

namespace detail {

// sqrt(k + 1/2) P_k(x) for k = 0..n-1, orthonormal on [-1, 1]
inline void normalized_legendre(double x, Eigen::Index n, double* out) {
  if (n <= 0) return;
  double p0 = 1.0, p1 = x;
  out[0] = std::sqrt(0.5);
  if (n > 1) out[1] = x * std::sqrt(1.5);
  for (Eigen::Index k = 1; k + 1 < n; ++k) {
    const double kd = static_cast<double>(k);
    const double p2 = ((2.0 * kd + 1.0) * x * p1 - kd * p0) / (kd + 1.0);
    out[k + 1] = p2 * std::sqrt(kd + 1.5);
    p0 = p1;
    p1 = p2;
  }
}

// Gauss-Legendre nodes and weights on [-1, 1]
inline void gauss_legendre(int n, VecR& x, VecR& w) {
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 1; k < n; ++k) {
        const double p2 = ((2.0 * k + 1.0) * z * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      if (n == 1) {
        p1 = z;
        dp = 1.0;
      }
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x(i) = -z;
    x(n - 1 - i) = z;
    w(i) = w(n - 1 - i) = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

// Composite Gauss-Legendre rule over consecutive breakpoints, panels no wider than h
inline void composite_gauss(const std::vector<double>& breaks, double h, int order, VecR& t, VecR& w) {
  VecR gx, gw;
  gauss_legendre(order, gx, gw);
  std::vector<double> tv, wv;
  for (std::size_t b = 0; b + 1 < breaks.size(); ++b) {
    const double a = breaks[b], e = breaks[b + 1];
    if (!(e > a)) continue;
    const int panels = std::max(1, static_cast<int>(std::ceil((e - a) / h)));
    const double ph = (e - a) / panels;
    for (int p = 0; p < panels; ++p) {
      const double lo = a + p * ph;
      for (int q = 0; q < order; ++q) {
        tv.push_back(lo + 0.5 * ph * (gx(q) + 1.0));
        wv.push_back(0.5 * ph * gw(q));
      }
    }
  }
  t = Eigen::Map<VecR>(tv.data(), static_cast<Eigen::Index>(tv.size()));
  w = Eigen::Map<VecR>(wv.data(), static_cast<Eigen::Index>(wv.size()));
}

// Trapezoid weights on a uniform grid with Gregory end corrections; exact for
// polynomials up to the given order, so the endpoint O(h^2) error disappears.
inline VecR gregory_weights(Eigen::Index points, double h, int order = 8) {
  VecR w = VecR::Constant(points, h);
  if (points < 2) return VecR::Zero(points);
  w(0) = w(points - 1) = 0.5 * h;
  order = std::min<int>(order, static_cast<int>(points / 2) - 1);
  VecR gx, gw;
  gauss_legendre(16, gx, gw);
  const Eigen::Index n = points - 1;
  for (int k = 1; k <= order; ++k) {
    // signed Gregory coefficient: integral over [0,1] of binom(x, k+1)
    double g = 0.0;
    for (int q = 0; q < gx.size(); ++q) {
      const double x = 0.5 * (gx(q) + 1.0);
      double v = 1.0;
      for (int j = 0; j <= k; ++j) v *= (x - j) / (j + 1.0);
      g += 0.5 * gw(q) * v;
    }
    double binom = 1.0;
    for (int j = 0; j <= k; ++j) {
      if (j > 0) binom = binom * (k - j + 1) / j;
      const double fwd = ((k - j) % 2 ? -1.0 : 1.0) * binom;
      const double bwd = (j % 2 ? -1.0 : 1.0) * binom;
      w(j) -= h * g * fwd;
      w(n - j) -= (k % 2 ? -1.0 : 1.0) * h * g * bwd;
    }
  }
  return w;
}

struct ProlateSeries {
  double c = 0.0;
  VecR eigenvalues;  // concentration eigenvalues, non-increasing
  MatR coef;         // normalized Legendre coefficients, one column per function
};

// Prolate functions on [-1, 1] for bandwidth parameter c from the
// Legendre-Galerkin form of the commuting differential operator. The matrix
// splits by parity into two symmetric tridiagonal problems; only the first
// nfun eigenvectors are requested. Eigenvalues of the integral operator follow
// from psi(0) (even) or psi'(0) (odd), which keeps small ones relatively
// accurate instead of limited by an absolute quadrature error.
inline ProlateSeries prolate_series_sized(double c, int nfun, Eigen::Index nleg) {
  ProlateSeries out;
  out.c = c;
  nleg += nleg % 2;
  out.coef = MatR::Zero(nleg, nfun);
  out.eigenvalues = VecR::Zero(nfun);

  // P_k(0) and P_k'(0) = k P_{k-1}(0)
  VecR p_at0(nleg + 1);
  p_at0(0) = 1.0;
  p_at0(1) = 0.0;
  for (Eigen::Index k = 1; k < nleg; ++k) p_at0(k + 1) = -static_cast<double>(k) / (k + 1.0) * p_at0(k - 1);

  for (int parity = 0; parity < 2; ++parity) {
    const lapack_int want = (nfun - parity + 1) / 2;
    if (want <= 0) continue;
    const lapack_int m = static_cast<lapack_int>(nleg / 2);
    std::vector<double> d(m), e(m, 0.0);
    for (lapack_int i = 0; i < m; ++i) {
      const double k = 2.0 * i + parity;
      d[i] = k * (k + 1.0) + c * c * (2.0 * k * (k + 1.0) - 1.0) / ((2.0 * k + 3.0) * (2.0 * k - 1.0));
      if (i + 1 < m)
        e[i] = c * c * (k + 2.0) * (k + 1.0) / ((2.0 * k + 3.0) * std::sqrt((2.0 * k + 1.0) * (2.0 * k + 5.0)));
    }
    // divide and conquer on the full tridiagonal beats selected-index MRRR here
    std::vector<double> z(static_cast<std::size_t>(m) * m);
    const lapack_int info = LAPACKE_dstevd(LAPACK_COL_MAJOR, 'V', m, d.data(), e.data(), z.data(), m);
    if (info != 0)
      throw NumericalError("prolate eigensolve did not converge (Legendre system size " + std::to_string(m) +
                           ", info " + std::to_string(info) + ")");
    for (lapack_int j = 0; j < want; ++j) {
      const double* beta = z.data() + static_cast<std::size_t>(j) * m;
      const int n = 2 * j + parity;
      double anchor = 0.0;  // psi(0) or psi'(0)
      for (lapack_int i = 0; i < m; ++i) {
        const Eigen::Index k = 2 * i + parity;
        const double nk = std::sqrt(k + 0.5);
        anchor += beta[i] * nk * (parity == 0 ? p_at0(k) : k * p_at0(k - 1));
      }
      const double sign = anchor < 0 ? -1.0 : 1.0;
      for (lapack_int i = 0; i < m; ++i) out.coef(2 * i + parity, n) = sign * beta[i];
      const double lam_f = parity == 0 ? std::sqrt(2.0) * std::abs(beta[0]) / std::abs(anchor)
                                       : c * std::sqrt(2.0 / 3.0) * std::abs(beta[0]) / std::abs(anchor);
      out.eigenvalues(n) = c / (2.0 * pi) * lam_f * lam_f;
    }
  }
  // rounding can push the top eigenvalues past 1 and the deep tail out of order
  const double tiny = std::numeric_limits<double>::min();
  for (Eigen::Index n = 0; n < nfun; ++n) {
    double v = std::min(out.eigenvalues(n), 1.0);
    if (n > 0) v = std::min(v, out.eigenvalues(n - 1));
    out.eigenvalues(n) = std::isfinite(v) && v > tiny ? v : tiny;
  }
  return out;
}

inline Eigen::Index trailing_row(const MatR& coef, double cut = 1e-22) {
  Eigen::Index last = 0;
  for (Eigen::Index k = 0; k < coef.rows(); ++k)
    if (coef.row(k).cwiseAbs().maxCoeff() > cut) last = k;
  return last;
}

// Prolate functions on [-1, 1] for bandwidth parameter c from the
// Legendre-Galerkin form of the commuting differential operator. The matrix
// splits by parity into two symmetric tridiagonal problems. Eigenvalues of the
// integral operator follow from psi(0) (even) or psi'(0) (odd), which keeps
// small ones relatively accurate instead of limited by an absolute quadrature
// error. The Legendre length grows until the coefficients have decayed.
inline ProlateSeries prolate_series(double c, int nfun) {
  Eigen::Index nleg = static_cast<Eigen::Index>(1.1 * c) + nfun + 60;
  for (;;) {
    ProlateSeries out = prolate_series_sized(c, nfun, nleg);
    const Eigen::Index last = trailing_row(out.coef);
    if (last + 20 < out.coef.rows()) {
      out.coef.conservativeResize(last + 1, Eigen::NoChange);
      return out;
    }
    nleg = nleg + nleg / 2;
  }
}

// Enough eigenvalues that the neglected tail is far below double precision
inline int eigenvalue_count(double omega_t) {
  return static_cast<int>(std::ceil(2.0 * omega_t)) + 24 + static_cast<int>(8.0 * std::log(2.0 + omega_t));
}

// psi_k(t) on [0, T] for the first coef.cols() functions
inline MatR series_values(double T, const MatR& coef, const VecR& times) {
  const Eigen::Index nleg = coef.rows();
  MatR out(times.size(), coef.cols());
  const double scale = std::sqrt(2.0 / T);
  constexpr Eigen::Index chunk = 512;
  MatR v(chunk, nleg);
  for (Eigen::Index r0 = 0; r0 < times.size(); r0 += chunk) {
    const Eigen::Index rows = std::min(chunk, times.size() - r0);
    std::vector<double> row(nleg);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double x = std::clamp(2.0 * times(r0 + r) / T - 1.0, -1.0, 1.0);
      normalized_legendre(x, nleg, row.data());
      for (Eigen::Index k = 0; k < nleg; ++k) v(r, k) = row[k];
    }
    out.middleRows(r0, rows).noalias() = scale * v.topRows(rows) * coef;
  }
  return out;
}

}  // namespace detail

// Slepian basis for [0, T] and band [-Omega, Omega] (Hz). Functions are
// orthonormal in L2[0, T]; eigenvalues are those of the time-band limiting
// operator with kernel sin(2 pi Omega (t - s)) / (pi (t - s)).
struct SlepianBasis {
  double bandwidth = 0.0;
  double interval_length = 0.0;
  double tolerance = 0.0;
  int grid_density = 0;
  int dim = 0;          // d(Omega T) at this tolerance
  VecR eigenvalues;     // non-increasing, tail included beyond the kept functions
  VecR grid_times;      // uniform reference grid on [0, T]
  VecR quad_weights;    // corrected trapezoid weights on grid_times
  MatR basis_samples;   // grid x kept
  MatR series;          // Legendre coefficients; empty for bases read from a cache file

  Eigen::Index kept() const { return basis_samples.cols(); }
  double omega_t() const { return bandwidth * interval_length; }
  double step() const { return grid_times.size() > 1 ? grid_times(1) - grid_times(0) : interval_length; }
  double total_mass() const { return eigenvalues.sum(); }
};

// Smallest d whose eigenvalue tail is at most eps times the total mass
inline int dimension_from_eigenvalues(const VecR& lam, double eps) {
  const Eigen::Index n = lam.size();
  if (n == 0) return 1;
  VecR tail(n + 1);
  tail(n) = 0.0;
  for (Eigen::Index k = n - 1; k >= 0; --k) tail(k) = tail(k + 1) + lam(k);
  const double bound = eps * tail(0);
  for (Eigen::Index d = 1; d <= n; ++d)
    if (tail(d) <= bound) return static_cast<int>(d);
  return static_cast<int>(n);
}

inline void check_time_bandwidth(double omega_t) {
  if (omega_t > 1e4)
    throw ConfigError("time-bandwidth product " + std::to_string(omega_t) + " exceeds 1e4; refusing to build basis");
}

// Concentration eigenvalues for a given Omega*T, at least `count` of them
inline VecR slepian_eigenvalues(double omega_t, int count = 0) {
  check_time_bandwidth(omega_t);
  count = std::max(count, detail::eigenvalue_count(omega_t));
  return detail::prolate_series(pi * omega_t, count).eigenvalues;
}

inline int dimension(double omega_t, double eps) {
  if (!(eps > 0.0 && eps < 0.5)) throw ConfigError("tolerance must lie in (0, 1/2)");
  if (!(omega_t > 0.0)) return 1;
  return dimension_from_eigenvalues(slepian_eigenvalues(omega_t), eps);
}

inline Eigen::Index grid_size(double omega_t, int grid_density) {
  return std::max<Eigen::Index>(1024, static_cast<Eigen::Index>(grid_density) *
                                          static_cast<Eigen::Index>(std::ceil(2.0 * omega_t)));
}

inline SlepianBasis build_basis(double omega, double T, double eps, int grid_density = 48, int min_kept = 0) {
  if (!(omega > 0.0) || !(T > 0.0)) throw ConfigError("bandwidth and interval length must be positive");
  if (!(eps > 0.0 && eps < 0.5)) throw ConfigError("tolerance must lie in (0, 1/2)");
  if (grid_density < 8) throw ConfigError("grid density must be at least 8 points per Nyquist interval");
  const double ot = omega * T;
  check_time_bandwidth(ot);

  int count = detail::eigenvalue_count(ot);
  detail::ProlateSeries ps = detail::prolate_series(pi * ot, std::max(count, min_kept));
  SlepianBasis b;
  b.bandwidth = omega;
  b.interval_length = T;
  b.tolerance = eps;
  b.grid_density = grid_density;
  b.eigenvalues = ps.eigenvalues;
  b.dim = dimension_from_eigenvalues(b.eigenvalues, eps);
  const Eigen::Index kept = std::max<Eigen::Index>(b.dim + 8, min_kept);
  b.series = ps.coef.leftCols(kept);
  b.series.conservativeResize(detail::trailing_row(b.series) + 1, Eigen::NoChange);

  const Eigen::Index g = grid_size(ot, grid_density);
  b.grid_times = VecR::LinSpaced(g, 0.0, T);
  b.grid_times(g - 1) = T;
  b.quad_weights = detail::gregory_weights(g, T / static_cast<double>(g - 1));
  b.basis_samples = detail::series_values(T, b.series, b.grid_times);
  if (!b.basis_samples.allFinite())
    throw NumericalError("non-finite basis samples on grid of size " + std::to_string(g));
  return b;
}

namespace detail {

inline void check_domain(const SlepianBasis& b, const VecR& times) {
  const double slack = 1e-12 * b.interval_length;
  for (Eigen::Index i = 0; i < times.size(); ++i)
    if (!(times(i) >= -slack && times(i) <= b.interval_length + slack))
      throw DomainError("time " + std::to_string(times(i)) + " outside basis interval [0, " +
                        std::to_string(b.interval_length) + "]");
}

// Eight-point Lagrange stencil on the uniform grid
inline Eigen::Index lagrange_stencil(const SlepianBasis& b, double t, double* w) {
  constexpr int order = 8;
  const Eigen::Index g = b.grid_times.size();
  const double h = b.step();
  const double s = t / h;
  Eigen::Index i0 = static_cast<Eigen::Index>(std::floor(s)) - order / 2 + 1;
  i0 = std::clamp<Eigen::Index>(i0, 0, g - order);
  const double u = s - static_cast<double>(i0);
  for (int j = 0; j < order; ++j) {
    double v = 1.0;
    for (int l = 0; l < order; ++l)
      if (l != j) v *= (u - l) / static_cast<double>(j - l);
    w[j] = v;
  }
  return i0;
}

inline Eigen::Index grid_index(const SlepianBasis& b, double t) {
  const Eigen::Index g = b.grid_times.size();
  const auto i = static_cast<Eigen::Index>(std::llround(t / b.step()));
  if (i >= 0 && i < g && b.grid_times(i) == t) return i;
  return -1;
}

}  // namespace detail

// Values of the selected basis functions at arbitrary times in [0, T]. The
// Legendre series is used when available; cache-loaded bases fall back to
// eight-point interpolation of the stored samples. Grid nodes return the
// stored samples exactly in both cases.
inline MatR evaluate(const SlepianBasis& b, const std::vector<int>& indices, const VecR& times) {
  detail::check_domain(b, times);
  for (int k : indices)
    if (k < 0 || k >= b.kept()) throw DomainError("basis index " + std::to_string(k) + " not kept");
  MatR out(times.size(), static_cast<Eigen::Index>(indices.size()));
  if (b.series.size() > 0) {
    MatR sel(b.series.rows(), out.cols());
    for (std::size_t j = 0; j < indices.size(); ++j) sel.col(j) = b.series.col(indices[j]);
    out = detail::series_values(b.interval_length, sel, times);
  } else {
    double w[8];
    for (Eigen::Index i = 0; i < times.size(); ++i) {
      const Eigen::Index i0 = detail::lagrange_stencil(b, times(i), w);
      for (std::size_t j = 0; j < indices.size(); ++j) {
        double v = 0.0;
        for (int l = 0; l < 8; ++l) v += w[l] * b.basis_samples(i0 + l, indices[j]);
        out(i, j) = v;
      }
    }
  }
  for (Eigen::Index i = 0; i < times.size(); ++i) {
    const Eigen::Index gi = detail::grid_index(b, times(i));
    if (gi < 0) continue;
    for (std::size_t j = 0; j < indices.size(); ++j) out(i, j) = b.basis_samples(gi, indices[j]);
  }
  return out;
}

inline MatR evaluate(const SlepianBasis& b, Eigen::Index count, const VecR& times) {
  std::vector<int> idx(static_cast<std::size_t>(count));
  for (Eigen::Index k = 0; k < count; ++k) idx[k] = static_cast<int>(k);
  return evaluate(b, idx, times);
}

// Sparse interpolation operator H from the uniform grid to target times
inline Eigen::SparseMatrix<double> interpolation_matrix(const SlepianBasis& b, const VecR& targets) {
  detail::check_domain(b, targets);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(targets.size()) * 8);
  double w[8];
  for (Eigen::Index i = 0; i < targets.size(); ++i) {
    const Eigen::Index gi = detail::grid_index(b, targets(i));
    if (gi >= 0) {
      trip.emplace_back(static_cast<int>(i), static_cast<int>(gi), 1.0);
      continue;
    }
    const Eigen::Index i0 = detail::lagrange_stencil(b, targets(i), w);
    for (int l = 0; l < 8; ++l) trip.emplace_back(static_cast<int>(i), static_cast<int>(i0 + l), w[l]);
  }
  Eigen::SparseMatrix<double> h(targets.size(), b.grid_times.size());
  h.setFromTriplets(trip.begin(), trip.end());
  return h;
}

// Gram matrix of the kept functions under the grid quadrature
inline MatR grid_gram(const SlepianBasis& b) {
  return b.basis_samples.transpose() * b.quad_weights.asDiagonal() * b.basis_samples;
}

// Binary cache: f64 Omega, T, eps; i64 grid density, kept count; then kept
// eigenvalues and the grid x kept samples, row-major, little-endian.
inline void save_basis(const std::string& path, const SlepianBasis& b) {
  static_assert(std::endian::native == std::endian::little, "cache layout assumes a little-endian host");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open basis cache for writing: " + path);
  const double hdr[3] = {b.bandwidth, b.interval_length, b.tolerance};
  const std::int64_t ints[2] = {b.grid_density, static_cast<std::int64_t>(b.kept())};
  f.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
  f.write(reinterpret_cast<const char*>(ints), sizeof ints);
  f.write(reinterpret_cast<const char*>(b.eigenvalues.data()), static_cast<std::streamsize>(b.kept() * sizeof(double)));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = b.basis_samples;
  f.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
  if (!f) throw ConfigError("short write to basis cache: " + path);
}

inline SlepianBasis load_basis(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open basis cache: " + path);
  double hdr[3];
  std::int64_t ints[2];
  f.read(reinterpret_cast<char*>(hdr), sizeof hdr);
  f.read(reinterpret_cast<char*>(ints), sizeof ints);
  if (!f || ints[0] < 8 || ints[1] < 1) throw ConfigError("malformed basis cache header: " + path);
  SlepianBasis b;
  b.bandwidth = hdr[0];
  b.interval_length = hdr[1];
  b.tolerance = hdr[2];
  b.grid_density = static_cast<int>(ints[0]);
  const Eigen::Index kept = ints[1];
  const Eigen::Index g = grid_size(b.omega_t(), b.grid_density);
  b.eigenvalues.resize(kept);
  f.read(reinterpret_cast<char*>(b.eigenvalues.data()), static_cast<std::streamsize>(kept * sizeof(double)));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(g, kept);
  f.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
  if (!f) throw ConfigError("truncated basis cache: " + path);
  b.basis_samples = rm;
  b.grid_times = VecR::LinSpaced(g, 0.0, b.interval_length);
  b.quad_weights = detail::gregory_weights(g, b.interval_length / static_cast<double>(g - 1));
  b.dim = dimension_from_eigenvalues(b.eigenvalues, b.tolerance);
  return b;
}

}  // namespace sbb
