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
#include <fstream>
#include <set>

#include "sbb/experiments.hpp"

namespace sbb {
namespace {

namespace fs = std::filesystem;

ScenarioConfig tiny() {
  return parse_config_string(
      "geometry = ula(8)\n"
      "snapshots = 8\n"
      "trials = 3\n"
      "snr_db = 10\n"
      "das_taps = 8\n"
      "subarrays = 2x1\n");
}

std::string csv(const Table& t) {
  std::ostringstream o;
  t.write_csv(o);
  return o.str();
}

TEST(Output, TableAndFormatting) {
  Table t;
  t.columns = {"a", "b"};
  t.add({"1", "2"});
  EXPECT_THROW(t.add({"1"}), std::logic_error);
  EXPECT_EQ(csv(t), "a,b\n1,2\n");
  EXPECT_EQ(fmt(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(fmt(std::nan("")), "nan");
  EXPECT_EQ(fmt(0.125), "0.125");
  EXPECT_EQ(fmt(42), "42");
}

TEST(Output, TrialSeedsAreDistinctAndStable) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t t = 0; t < 1000; ++t) seen.insert(trial_seed(7, t));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_EQ(trial_seed(7, 3, 1), trial_seed(7, 3, 1));
  EXPECT_NE(trial_seed(7, 3, 1), trial_seed(7, 3, 2));
  EXPECT_NE(trial_seed(7, 3), trial_seed(8, 3));
}

TEST(Output, ParallelTrialsVisitsEveryTrialAndPropagatesErrors) {
  std::vector<int> hit(50, 0);
  parallel_trials(50, 4, [&](int i) { hit[i] += 1; });
  for (int h : hit) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_trials(10, 3, [](int i) {
                 if (i == 4) throw NumericalError("boom");
               }),
               NumericalError);
}

TEST(Output, StatsOfKnownSample) {
  const Stats s = stats({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.std, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(stats({}).mean, 0.0);
}

TEST(Output, WriteResultRecordsProvenance) {
  const fs::path dir = fs::temp_directory_path() / "sbb_write_result";
  fs::remove_all(dir);
  ScenarioConfig c = tiny();
  ExperimentResult r;
  r.command = "probe";
  r.table.columns = {"x"};
  r.table.add({"1"});
  Table e;
  e.columns = {"y"};
  r.extra.emplace_back("more", e);
  r.aggregates["answer"] = 42;
  write_result(r, c, dir.string());
  EXPECT_TRUE(fs::exists(dir / "probe.csv"));
  EXPECT_TRUE(fs::exists(dir / "probe_more.csv"));
  std::ifstream f(dir / "probe.json");
  const auto j = nlohmann::json::parse(f);
  EXPECT_EQ(j["command"], "probe");
  EXPECT_EQ(j["version"], version_string);
  EXPECT_EQ(j["aggregates"]["answer"], 42);
  EXPECT_EQ(j["config"]["geometry"], "ula(8)");
  const std::uint64_t h = config_hash(c);
  c.seed += 1;
  EXPECT_NE(config_hash(c), h);
  fs::remove_all(dir);
}

TEST(Dims, ExplicitProbesFollowTheDimensionRule) {
  ScenarioConfig c = tiny();
  c.omega_t = {0.5, 5.0, 50.0};
  const ExperimentResult r = cmd_dims(c);
  ASSERT_EQ(r.table.rows.size(), 3u);
  EXPECT_EQ(r.table.rows[1][2], std::to_string(dimension(5.0, 1e-3)));
  EXPECT_EQ(r.table.rows[2][3], "100");
}

TEST(Dims, TabulatedRegimesUseTwentyProbes) {
  const ExperimentResult r = cmd_dims(tiny());
  EXPECT_EQ(r.aggregates["probes"], 20 * static_cast<int>(tabulated_regimes().size()));
  int bad = 0;
  for (const auto& row : r.table.rows) bad += row.back() == "0";
  EXPECT_EQ(r.aggregates["violations"], bad);
}

TEST(Conventional, DeterministicAcrossThreadCounts) {
  ScenarioConfig c = tiny();
  const std::string one = csv(cmd_conventional(c).table);
  c.threads = 3;
  EXPECT_EQ(csv(cmd_conventional(c).table), one);
}

TEST(Conventional, SlepianGainStaysNearTheSubspaceCeiling) {
  ScenarioConfig c = tiny();
  c.trials = 6;
  c.snr_db = {0.0};
  const ArrayScenario s = scenario_from(c);
  const double ceiling = subspace_gain(s.elements() * s.snapshots(), model_dim(c, s));
  const ExperimentResult r = cmd_conventional(c);
  bool found = false;
  for (const auto& j : r.aggregates["summary"])
    if (j["method"] == "slepian") {
      found = true;
      EXPECT_NEAR(j["mean_gain_db"].get<double>(), ceiling, 1.5);
    }
  EXPECT_TRUE(found);
}

TEST(Adaptive, NeedsAnInterferer) {
  EXPECT_THROW(cmd_adaptive(tiny()), ConfigError);
}

TEST(Streaming, BinaryBatchesRoundTrip) {
  const fs::path p = fs::temp_directory_path() / "sbb_batches.bin";
  std::vector<VecC> v{VecC::Constant(3, cplx(1.5, -2.0)), VecC::Constant(3, cplx(0.25, 4.0))};
  write_complex64_batches(p.string(), v);
  const auto back = read_complex64_batches(p.string(), 3);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ((back[1] - v[1]).norm(), 0.0);
  EXPECT_THROW(read_complex64_batches(p.string(), 4), ConfigError);
  fs::remove(p);
}

TEST(Merge, AccuracyImprovesWithPacketMargin) {
  const ArrayScenario s = make_scenario(ula(16, 20e9), 5e9, ArrivalAngle{pi / 2, 0.0}, 16);
  const auto cells = merge_accuracy(s, 3, {2, 8}, {2});
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_LT(cells[1].error, cells[0].error);
  EXPECT_GT(cells[0].error, 0.0);
  EXPECT_EQ(cells[1].packet_dim - cells[0].packet_dim, 6);
}

}  // namespace
}  // namespace sbb
