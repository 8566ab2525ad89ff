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

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "sbb/array.hpp"
#include "sbb/batch.hpp"
#include "sbb/common.hpp"
#include "sbb/scenario.hpp"

namespace sbb {

enum class EncoderStructure { subarray = 0, spatial_block = 1, spatial_temporal = 2, random = 3 };

inline const char* structure_name(EncoderStructure s) {
  switch (s) {
    case EncoderStructure::subarray: return "subarray";
    case EncoderStructure::spatial_block: return "spatial_block";
    case EncoderStructure::spatial_temporal: return "spatial_temporal";
    case EncoderStructure::random: return "random";
  }
  return "unknown";
}

// Linear measurements w = Phi y of one stacked batch (rows n*M + m)
struct Encoder {
  MatC matrix;  // P x MN
  EncoderStructure structure = EncoderStructure::random;
  std::vector<Eigen::Index> block_layout;  // rows per snapshot for block-diagonal encoders

  Eigen::Index measurements() const { return matrix.rows(); }
  Eigen::Index samples() const { return matrix.cols(); }
  VecC apply(const VecC& y) const { return matrix * y; }
};

inline MatC block_diagonal(const MatC& block, Eigen::Index copies) {
  MatC out = MatC::Zero(block.rows() * copies, block.cols() * copies);
  for (Eigen::Index n = 0; n < copies; ++n) out.block(n * block.rows(), n * block.cols(), block.rows(), block.cols()) = block;
  return out;
}

// One block per snapshot; row m' holds the weights of subarray m' (scaled to a unit row)
inline Encoder make_subarray_encoder(const std::vector<std::vector<Eigen::Index>>& partition, const VecC& weights,
                                     Eigen::Index snapshots) {
  const Eigen::Index m = weights.size();
  std::vector<int> seen(m, 0);
  MatC blk = MatC::Zero(static_cast<Eigen::Index>(partition.size()), m);
  for (std::size_t r = 0; r < partition.size(); ++r) {
    const auto& set = partition[r];
    if (set.empty()) throw ConfigError("empty subarray in partition");
    for (Eigen::Index i : set) {
      if (i < 0 || i >= m) throw ConfigError("subarray index " + std::to_string(i) + " out of range");
      if (seen[i]++) throw ConfigError("element " + std::to_string(i) + " appears in more than one subarray");
      blk(static_cast<Eigen::Index>(r), i) = weights(i);
    }
    const double nrm = blk.row(static_cast<Eigen::Index>(r)).norm();
    if (nrm > 0.0) blk.row(static_cast<Eigen::Index>(r)) /= nrm;
  }
  for (Eigen::Index i = 0; i < m; ++i)
    if (!seen[i]) throw ConfigError("element " + std::to_string(i) + " is not covered by the partition");
  Encoder e;
  e.matrix = block_diagonal(blk, snapshots);
  e.structure = EncoderStructure::subarray;
  e.block_layout.assign(snapshots, blk.rows());
  return e;
}

// Conjugate steering phases exp(+j 2 pi f_c tau_m)
inline VecC steering_weights(const ArrayScenario& s) {
  const VecR tau = s.delays();
  VecC w(tau.size());
  for (Eigen::Index i = 0; i < tau.size(); ++i) w(i) = std::polar(1.0, 2.0 * pi * s.geometry.carrier * tau(i));
  return w;
}

// Rectangular tiles of an "ula(M)" or "upa(Mx,My)" array, tile given as "axb"
inline std::vector<std::vector<Eigen::Index>> tile_partition(const std::string& geometry, const std::string& tile) {
  int mx = 0, my = 0, a = 0, b = 0;
  bool line = false;
  if (std::sscanf(geometry.c_str(), " upa ( %d , %d )", &mx, &my) == 2) {
  } else if (std::sscanf(geometry.c_str(), " ula ( %d )", &mx) == 1) {
    my = 1;
    line = true;
  } else {
    throw ConfigError("subarray tiles need a ula(M) or upa(Mx,My) geometry, got '" + geometry + "'");
  }
  if (std::sscanf(tile.c_str(), " %d x %d", &a, &b) != 2 || a < 1 || b < 1)
    throw ConfigError("subarray tile must look like 4x1, got '" + tile + "'");
  if (line && b != 1) throw ConfigError("linear array tiles must be ax1");
  if (mx % a || my % b) throw ConfigError("tile " + tile + " does not divide the array " + geometry);
  std::vector<std::vector<Eigen::Index>> parts;
  for (int tx = 0; tx < mx / a; ++tx)
    for (int ty = 0; ty < my / b; ++ty) {
      std::vector<Eigen::Index> set;
      for (int ix = tx * a; ix < (tx + 1) * a; ++ix)
        for (int iy = ty * b; iy < (ty + 1) * b; ++iy) set.push_back(static_cast<Eigen::Index>(ix) * my + iy);
      parts.push_back(std::move(set));
    }
  return parts;
}

inline Encoder make_spatial_slepian_encoder(const MatC& u, Eigen::Index snapshots) {
  if (u.cols() > u.rows()) throw ConfigError("per-snapshot dimension exceeds the element count");
  Encoder e;
  e.matrix = block_diagonal(u.adjoint(), snapshots);
  e.structure = EncoderStructure::spatial_block;
  e.block_layout.assign(snapshots, u.cols());
  return e;
}

enum class SpatioTemporalMode { pinv, adjoint, weights };

inline Encoder make_spatiotemporal_encoder(const MatC& a, SpatioTemporalMode mode, const MatC& w = MatC()) {
  Encoder e;
  e.structure = EncoderStructure::spatial_temporal;
  switch (mode) {
    case SpatioTemporalMode::pinv: e.matrix = pinv(a); break;
    case SpatioTemporalMode::adjoint: e.matrix = a.adjoint(); break;
    case SpatioTemporalMode::weights:
      if (w.cols() != a.rows()) throw ConfigError("supplied weights do not match the forward model");
      e.matrix = w;
      break;
  }
  return e;
}

// i.i.d. CN(0, 1/P) entries
inline Encoder make_random_encoder(Eigen::Index p, Eigen::Index samples, std::uint64_t seed) {
  if (p < 1 || p > samples) throw ConfigError("random encoder needs 1 <= P <= MN");
  std::mt19937_64 rng(seed);
  Encoder e;
  e.matrix.resize(p, samples);
  for (Eigen::Index j = 0; j < samples; ++j)
    for (Eigen::Index i = 0; i < p; ++i) e.matrix(i, j) = complex_normal(rng, 1.0 / static_cast<double>(p));
  e.structure = EncoderStructure::random;
  return e;
}

// min 1/2 |w - Phi A alpha|^2 + delta |alpha|^2 through the SVD of Phi A
inline LsResult encoded_ls(const MatC& phi, const MatC& a, const VecC& w, double delta = 0.0) {
  if (phi.cols() != a.rows()) throw ConfigError("encoder width does not match the forward model");
  if (w.size() != phi.rows()) throw ConfigError("measurement length does not match the encoder");
  return LeastSquares(phi * a, delta).solve(w);
}

// trace((Phi A)^+ Phi Phi^H (Phi A)^+H): noise gain of the encoded estimate
inline double variance_multiplier(const MatC& phi, const MatC& a) {
  const MatC c = phi * a;
  Eigen::BDCSVD<MatC> svd(c, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VecR& s = svd.singularValues();
  if (s.size() < a.cols() || s(s.size() - 1) <= 1e-12 * s(0))
    throw NumericalError("encoded model Phi A is rank deficient");
  const MatC cp = svd.matrixV() * s.cwiseInverse().asDiagonal() * svd.matrixU().adjoint();
  const MatC x = cp * phi;
  return x.squaredNorm();
}

// Layout shared with the basis cache: three f64 (format version, structure,
// block count), two i64 (rows, cols), then row-major interleaved complex f64.
inline void save_encoder(const std::string& path, const Encoder& e) {
  static_assert(std::endian::native == std::endian::little, "encoder layout assumes a little-endian host");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open encoder file for writing: " + path);
  const double hdr[3] = {1.0, static_cast<double>(static_cast<int>(e.structure)),
                         static_cast<double>(e.block_layout.size())};
  const std::int64_t ints[2] = {e.matrix.rows(), e.matrix.cols()};
  f.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
  f.write(reinterpret_cast<const char*>(ints), sizeof ints);
  Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = e.matrix;
  f.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(cplx)));
  if (!f) throw ConfigError("short write to encoder file: " + path);
}

inline Encoder load_encoder(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open encoder file: " + path);
  double hdr[3];
  std::int64_t ints[2];
  f.read(reinterpret_cast<char*>(hdr), sizeof hdr);
  f.read(reinterpret_cast<char*>(ints), sizeof ints);
  const int code = static_cast<int>(hdr[1]);
  if (!f || hdr[0] != 1.0 || code < 0 || code > 3 || ints[0] < 1 || ints[1] < 1)
    throw ConfigError("malformed encoder header: " + path);
  Encoder e;
  e.structure = static_cast<EncoderStructure>(code);
  Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(ints[0], ints[1]);
  f.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(cplx)));
  if (!f) throw ConfigError("truncated encoder file: " + path);
  e.matrix = rm;
  const auto blocks = static_cast<Eigen::Index>(hdr[2]);
  if (blocks > 0) {
    if (e.matrix.rows() % blocks) throw ConfigError("encoder block count does not divide its rows: " + path);
    e.block_layout.assign(blocks, e.matrix.rows() / blocks);
  }
  return e;
}

}  // namespace sbb
