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


#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "sbb/experiments.hpp"

namespace {

struct Options {
  std::string config;
  std::string out = "out";
  std::uint64_t seed = 0;
  int trials = 0;
  int threads = 0;
};

sbb::ScenarioConfig resolve(const Options& o, const CLI::App& app) {
  sbb::ScenarioConfig c = o.config.empty() ? sbb::ScenarioConfig{} : sbb::load_config(o.config);
  if (app.count("--seed")) c.seed = o.seed;
  if (app.count("--trials")) c.trials = o.trials;
  if (app.count("--threads")) c.threads = o.threads;
  sbb::validate(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Slepian-basis wideband array beamforming experiments"};
  app.require_subcommand(1);
  Options opt;
  std::string verb;
  for (const char* name : {"dims", "conventional", "adaptive", "streaming", "encode", "diag"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", opt.config, "flat key = value config file");
    sub->add_option("--out", opt.out, "output directory")->capture_default_str();
    sub->add_option("--seed", opt.seed, "base seed");
    sub->add_option("--trials", opt.trials, "Monte Carlo trials")->check(CLI::PositiveNumber);
    sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->callback([&verb, name] { verb = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const CLI::App& sub = *app.get_subcommands().front();
  try {
    const sbb::ScenarioConfig c = resolve(opt, sub);
    sbb::ExperimentResult r;
    if (verb == "dims") r = sbb::cmd_dims(c);
    else if (verb == "conventional") r = sbb::cmd_conventional(c);
    else if (verb == "adaptive") r = sbb::cmd_adaptive(c);
    else if (verb == "streaming") r = sbb::cmd_streaming(c);
    else if (verb == "encode") r = sbb::cmd_encode(c, opt.out);
    else r = sbb::cmd_diag(c);
    sbb::write_result(r, c, opt.out);
    std::cout << verb << ": wrote " << r.table.rows.size() << " rows to " << opt.out << "/" << r.command << ".csv\n";
    return 0;
  } catch (const sbb::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const sbb::DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const sbb::SupportError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const sbb::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
}
