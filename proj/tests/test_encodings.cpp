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

#include <filesystem>
#include <random>

#include "sbb/batch.hpp"
#include "sbb/encodings.hpp"
#include "support.hpp"

namespace sbb {
namespace {

using test::rel;

struct Model {
  ArrayScenario s = make_scenario(ula(16, 20e9), 5e9, ArrivalAngle{deg2rad(40.0), 0.0}, 8);
  MatC a;
  Model() {
    const SlepianBasis b = scenario_basis(s, 1e-3);
    a = build_forward(s, b, b.dim).stacked;
  }
};

TEST(Encoder, IdentityMatchesFullLeastSquares) {
  const Model m;
  std::mt19937_64 rng(1);
  const VecC y = test::random_vector(m.a.rows(), rng);
  const MatC phi = MatC::Identity(m.a.rows(), m.a.rows());
  EXPECT_LT(rel(encoded_ls(phi, m.a, phi * y).alpha, solve_ls(m.a, y, 0.0).alpha), 1e-12);
  EXPECT_NEAR(variance_multiplier(phi, m.a), (pinv(m.a)).squaredNorm(), 1e-10 * pinv(m.a).squaredNorm());
}

TEST(Encoder, EncodedModelIsExactOnItsRange) {
  const Model m;
  std::mt19937_64 rng(2);
  const VecC alpha = test::random_vector(m.a.cols(), rng);
  const Encoder e = make_random_encoder(m.a.cols() + 20, m.a.rows(), 5);
  EXPECT_LT(rel(encoded_ls(e.matrix, m.a, e.apply(m.a * alpha)).alpha, alpha), 1e-9);
}

TEST(Encoder, SubarrayBlocksAndSingletons) {
  const std::vector<std::vector<Eigen::Index>> parts = tile_partition("ula(8)", "2x1");
  ASSERT_EQ(parts.size(), 4u);
  EXPECT_EQ(parts[1], (std::vector<Eigen::Index>{2, 3}));
  const VecC w = VecC::Ones(8);
  const Encoder e = make_subarray_encoder(parts, w, 3);
  EXPECT_EQ(e.matrix.rows(), 12);
  EXPECT_EQ(e.matrix.cols(), 24);
  EXPECT_EQ(e.block_layout, (std::vector<Eigen::Index>(3, 4)));
  EXPECT_EQ(e.matrix.block(0, 8, 4, 8).norm(), 0.0);
  EXPECT_NEAR(e.matrix.row(5).norm(), 1.0, 1e-15);
  std::vector<std::vector<Eigen::Index>> single;
  for (Eigen::Index i = 0; i < 8; ++i) single.push_back({i});
  EXPECT_LT((make_subarray_encoder(single, w, 2).matrix - MatC::Identity(16, 16)).norm(), 1e-15);
}

TEST(Encoder, PartitionErrors) {
  const VecC w = VecC::Ones(4);
  EXPECT_THROW(make_subarray_encoder({{0, 1}, {1, 2, 3}}, w, 1), ConfigError);
  EXPECT_THROW(make_subarray_encoder({{0, 1}, {2}}, w, 1), ConfigError);
  EXPECT_THROW(make_subarray_encoder({{0, 1}, {}}, w, 1), ConfigError);
  EXPECT_THROW(tile_partition("ula(8)", "3x1"), ConfigError);
  EXPECT_THROW(tile_partition("ula(8)", "2x2"), ConfigError);
  EXPECT_THROW(tile_partition("ring(8)", "2x1"), ConfigError);
  EXPECT_EQ(tile_partition("upa(4,4)", "2x2").size(), 4u);
}

TEST(Encoder, SpatialBlockStructure) {
  std::mt19937_64 rng(3);
  const MatC q = test::random_matrix(6, 3, rng).householderQr().householderQ() * MatC::Identity(6, 3);
  const Encoder e = make_spatial_slepian_encoder(q, 4);
  EXPECT_EQ(e.matrix.rows(), 12);
  EXPECT_EQ(e.matrix.cols(), 24);
  EXPECT_LT((e.matrix * e.matrix.adjoint() - MatC::Identity(12, 12)).norm(), 1e-12);
  EXPECT_THROW(make_spatial_slepian_encoder(test::random_matrix(3, 4, rng), 2), ConfigError);
}

TEST(Encoder, SpatioTemporalPinvReproducesLeastSquares) {
  const Model m;
  std::mt19937_64 rng(4);
  const VecC y = test::random_vector(m.a.rows(), rng);
  const Encoder e = make_spatiotemporal_encoder(m.a, SpatioTemporalMode::pinv);
  EXPECT_EQ(e.measurements(), m.a.cols());
  EXPECT_LT(rel(encoded_ls(e.matrix, m.a, e.apply(y)).alpha, solve_ls(m.a, y, 0.0).alpha), 1e-6);
  EXPECT_NEAR(variance_multiplier(e.matrix, m.a), pinv(m.a).squaredNorm(), 1e-6 * pinv(m.a).squaredNorm());
  const Encoder adj = make_spatiotemporal_encoder(m.a, SpatioTemporalMode::adjoint);
  EXPECT_LT(rel(encoded_ls(adj.matrix, m.a, adj.apply(y)).alpha, solve_ls(m.a, y, 0.0).alpha), 1e-6);
  EXPECT_THROW(make_spatiotemporal_encoder(m.a, SpatioTemporalMode::weights, MatC::Identity(3, 3)), ConfigError);
}

TEST(Encoder, RandomIsSeededAndScaled) {
  const Encoder a = make_random_encoder(40, 128, 11), b = make_random_encoder(40, 128, 11),
                c = make_random_encoder(40, 128, 12);
  EXPECT_EQ((a.matrix - b.matrix).norm(), 0.0);
  EXPECT_GT((a.matrix - c.matrix).norm(), 1.0);
  // each column has expected squared norm 1
  EXPECT_NEAR(a.matrix.squaredNorm() / 128.0, 1.0, 0.1);
  EXPECT_THROW(make_random_encoder(0, 10, 1), ConfigError);
  EXPECT_THROW(make_random_encoder(11, 10, 1), ConfigError);
}

TEST(Encoder, RandomVarianceExceedsSlepianAndFalls) {
  const Model m;
  const double base = pinv(m.a).squaredNorm();
  const Eigen::Index d = m.a.cols();
  double prev = std::numeric_limits<double>::infinity();
  for (Eigen::Index p : {d + 2, 2 * d, 4 * d}) {
    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed)
      mean += variance_multiplier(make_random_encoder(p, m.a.rows(), seed).matrix, m.a) / 10.0;
    EXPECT_GT(mean, base);
    EXPECT_LT(mean, prev);
    prev = mean;
  }
}

TEST(Encoder, RankDeficientModelIsReported) {
  const Model m;
  const MatC phi = MatC::Identity(m.a.cols() - 1, m.a.rows());
  EXPECT_THROW(variance_multiplier(phi, m.a), NumericalError);
  EXPECT_THROW(encoded_ls(phi, m.a, VecC::Zero(3)), ConfigError);
  EXPECT_THROW(encoded_ls(MatC::Identity(4, 5), m.a, VecC::Zero(4)), ConfigError);
}

TEST(Encoder, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "sbb_encoder_roundtrip.bin";
  Encoder e = make_subarray_encoder(tile_partition("ula(4)", "2x1"), VecC::Ones(4), 3);
  e.matrix(0, 1) = cplx(0.25, -1.5);
  save_encoder(path.string(), e);
  EXPECT_EQ(std::filesystem::file_size(path), 40u + 6u * 12u * 16u);
  const Encoder r = load_encoder(path.string());
  EXPECT_EQ((r.matrix - e.matrix).norm(), 0.0);
  EXPECT_EQ(r.structure, EncoderStructure::subarray);
  EXPECT_EQ(r.block_layout, e.block_layout);
  std::filesystem::resize_file(path, 60);
  EXPECT_THROW(load_encoder(path.string()), ConfigError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_encoder(path.string()), ConfigError);
}

}  // namespace
}  // namespace sbb
