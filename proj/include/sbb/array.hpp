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
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sbb/common.hpp"
#include "sbb/slepian.hpp"

namespace sbb {

using Vec3 = Eigen::Vector3d;

struct ArrayGeometry {
  std::vector<Vec3> positions;  // meters, relative to the array center
  double carrier = 0.0;         // Hz
  double speed = speed_of_light;

  Eigen::Index size() const { return static_cast<Eigen::Index>(positions.size()); }

  void validate() const {
    if (positions.empty()) throw ConfigError("array geometry has no elements");
    if (!(carrier > 0.0)) throw ConfigError("carrier frequency must be positive");
    if (!(speed > 0.0)) throw ConfigError("propagation speed must be positive");
    for (const auto& p : positions)
      if (!p.allFinite()) throw ConfigError("array geometry has a non-finite element position");
  }
};

struct ArrivalAngle {
  double azimuth = 0.0;    // radians
  double elevation = 0.0;  // radians

  Vec3 direction() const {
    return {std::cos(azimuth) * std::cos(elevation), std::sin(azimuth) * std::cos(elevation), std::sin(elevation)};
  }
};

inline double deg2rad(double d) { return d * pi / 180.0; }

struct SamplingPlan {
  VecR snapshot_times;
  double sample_interval = 0.0;

  Eigen::Index count() const { return snapshot_times.size(); }
};

// N snapshots at the Nyquist interval 1/(2 Omega), starting at t0
inline SamplingPlan uniform_plan(double omega, Eigen::Index n, double t0 = 0.0) {
  SamplingPlan p;
  p.sample_interval = 1.0 / (2.0 * omega);
  p.snapshot_times = VecR::LinSpaced(n, 0.0, static_cast<double>(n - 1) * p.sample_interval).array() + t0;
  if (n == 1) p.snapshot_times(0) = t0;
  return p;
}

// Half-wavelength line along the y axis, centered; azimuth pi/2 is endfire
inline ArrayGeometry ula(int m, double carrier, double speed = speed_of_light) {
  if (m < 1) throw ConfigError("ula needs at least one element");
  ArrayGeometry g;
  g.carrier = carrier;
  g.speed = speed;
  const double dy = speed / (2.0 * carrier);
  for (int i = 0; i < m; ++i) g.positions.emplace_back(0.0, (i - 0.5 * (m - 1)) * dy, 0.0);
  return g;
}

// Half-wavelength grid in the z = 0 plane, centered
inline ArrayGeometry upa(int mx, int my, double carrier, double speed = speed_of_light) {
  if (mx < 1 || my < 1) throw ConfigError("upa needs at least one element per side");
  ArrayGeometry g;
  g.carrier = carrier;
  g.speed = speed;
  const double d = speed / (2.0 * carrier);
  for (int ix = 0; ix < mx; ++ix)
    for (int iy = 0; iy < my; ++iy) g.positions.emplace_back((ix - 0.5 * (mx - 1)) * d, (iy - 0.5 * (my - 1)) * d, 0.0);
  return g;
}

// Text geometry: three floats (meters) per line; blank lines and '#' comments skipped
inline ArrayGeometry load_geometry(const std::string& path, double carrier, double speed = speed_of_light) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open geometry file: " + path);
  ArrayGeometry g;
  g.carrier = carrier;
  g.speed = speed;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream in(line);
    double x, y, z;
    if (!(in >> x)) continue;
    std::string rest;
    if (!(in >> y >> z) || (in >> rest))
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected three coordinates");
    g.positions.emplace_back(x, y, z);
  }
  g.validate();
  return g;
}

// Parses "ula(M)", "upa(Mx,My)" or a path to a geometry file
inline ArrayGeometry parse_geometry(const std::string& spec, double carrier) {
  int a = 0, b = 0;
  char tail = 0;
  if (std::sscanf(spec.c_str(), "ula(%d)%c", &a, &tail) == 1) return ula(a, carrier);
  if (std::sscanf(spec.c_str(), "upa(%d,%d)%c", &a, &b, &tail) == 2) return upa(a, b, carrier);
  if (spec.rfind("ula", 0) == 0 || spec.rfind("upa", 0) == 0) throw ConfigError("malformed geometry generator: " + spec);
  return load_geometry(spec, carrier);
}

inline VecR delays(const ArrayGeometry& g, const ArrivalAngle& a) {
  const Vec3 v = a.direction();
  VecR tau(g.size());
  for (Eigen::Index m = 0; m < g.size(); ++m) tau(m) = g.positions[m].dot(v) / g.speed;
  return tau;
}

inline double aperture_span(const ArrayGeometry& g, const ArrivalAngle& a) {
  const VecR tau = delays(g, a);
  return tau.maxCoeff() - tau.minCoeff();
}

enum class Regime { narrowband, broadband };

struct RegimeInfo {
  Regime regime;
  double product;  // 2 Omega T_1
};

inline RegimeInfo regime(double omega, double t1) {
  if (!(omega > 0.0)) throw ConfigError("bandwidth must be positive");
  const double p = 2.0 * omega * t1;
  return {p >= 1.0 ? Regime::broadband : Regime::narrowband, p};
}

// Length of the interval touched by N Nyquist snapshots
inline double batch_span(double t1, double omega, Eigen::Index n) {
  return t1 + static_cast<double>(n - 1) / (2.0 * omega);
}

inline int representation_dim(const ArrayGeometry& g, const ArrivalAngle& a, double omega, Eigen::Index n,
                              double eps) {
  if (n < 1) throw ConfigError("snapshot count must be at least 1");
  return dimension(omega * batch_span(aperture_span(g, a), omega, n), eps);
}

// L := D_N - ceil(2 Omega T_1) - N + 1
inline int dimension_margin(int d_n, double omega, double t1, Eigen::Index n) {
  return d_n - static_cast<int>(std::ceil(2.0 * omega * t1 - 1e-12)) - static_cast<int>(n) + 1;
}

}  // namespace sbb
