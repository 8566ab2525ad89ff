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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

namespace fs = std::filesystem;

struct Cli : ::testing::Test {
  fs::path dir;
  void SetUp() override {
    dir = fs::temp_directory_path() / ("sbb_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  fs::path config(const std::string& text) const {
    const fs::path p = dir / "run.cfg";
    std::ofstream(p) << text;
    return p;
  }

  int run(const std::string& args) const {
    const std::string cmd = std::string(SBB_CLI_PATH) + " " + args + " > " + (dir / "log.txt").string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }

  std::string log() const {
    std::ifstream f(dir / "log.txt");
    return {std::istreambuf_iterator<char>(f), {}};
  }
};

constexpr const char* kSmall =
    "geometry = ula(8)\nsnapshots = 8\ntrials = 2\nsnr_db = 10\ndas_taps = 8\nsubarrays = 2x1\n"
    "interferers = 30:0:0\npackets = 12\nwarmup = 2\nmerge = 1\nsnapshot_margins = 0,2\nmargins = 0\n"
    "sections = budget\nencoder_dims = 4\n";

TEST_F(Cli, DimsWritesOutputs) {
  EXPECT_EQ(run("dims --out " + (dir / "o").string()), 0) << log();
  EXPECT_TRUE(fs::exists(dir / "o" / "dims.csv"));
  EXPECT_TRUE(fs::exists(dir / "o" / "dims.json"));
}

TEST_F(Cli, EveryVerbRunsOnASmallConfig) {
  const fs::path cfg = config(kSmall);
  for (const char* verb : {"conventional", "adaptive", "streaming", "encode", "diag"}) {
    EXPECT_EQ(run(std::string(verb) + " --config " + cfg.string() + " --threads 2 --out " + (dir / "o").string()), 0)
        << verb << "\n" << log();
    EXPECT_TRUE(fs::exists(dir / "o" / (std::string(verb) + ".csv"))) << verb;
  }
  EXPECT_TRUE(fs::exists(dir / "o" / "encoder.bin"));
}

TEST_F(Cli, SeedFlagChangesOnlyTheSeed) {
  const fs::path cfg = config(kSmall);
  ASSERT_EQ(run("conventional --config " + cfg.string() + " --seed 5 --trials 1 --out " + (dir / "a").string()), 0) << log();
  ASSERT_EQ(run("conventional --config " + cfg.string() + " --seed 5 --trials 1 --out " + (dir / "b").string()), 0) << log();
  std::ifstream a(dir / "a" / "conventional.csv"), b(dir / "b" / "conventional.csv");
  const std::string sa{std::istreambuf_iterator<char>(a), {}}, sb{std::istreambuf_iterator<char>(b), {}};
  EXPECT_EQ(sa, sb);
  std::ifstream j(dir / "a" / "conventional.json");
  const std::string sj{std::istreambuf_iterator<char>(j), {}};
  EXPECT_NE(sj.find("\"seed\": 5"), std::string::npos);
}

TEST_F(Cli, ConfigErrorsExitWithTwo) {
  EXPECT_EQ(run("conventional --config " + (dir / "missing.cfg").string()), 2);
  EXPECT_EQ(run("conventional --config " + config("colour = red\n").string()), 2);
  EXPECT_NE(log().find("unknown key"), std::string::npos);
  EXPECT_EQ(run("adaptive --config " + config("geometry = ula(8)\nsnapshots = 8\n").string() + " --out " +
                (dir / "o").string()),
            2);
  EXPECT_EQ(run("nonsense"), 2);
  EXPECT_EQ(run("dims --trials 0"), 2);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, StreamingReadsBinaryBatches) {
  // 4 batches of 8 elements x 8 snapshots, complex64
  const fs::path bin = dir / "in.bin";
  {
    std::ofstream f(bin, std::ios::binary);
    for (int i = 0; i < 4 * 64; ++i) {
      const float v[2] = {static_cast<float>(i % 7) - 3.0f, 0.5f};
      f.write(reinterpret_cast<const char*>(v), sizeof v);
    }
  }
  const fs::path cfg = config(std::string(kSmall) + "stream_input = " + bin.string() + "\n");
  EXPECT_EQ(run("streaming --config " + cfg.string() + " --out " + (dir / "o").string()), 0) << log();
  EXPECT_TRUE(fs::exists(dir / "o" / "streaming.csv"));
  std::ofstream(bin, std::ios::app | std::ios::binary) << "xyz";
  EXPECT_EQ(run("streaming --config " + cfg.string() + " --out " + (dir / "o").string()), 2);
}

}  // namespace
