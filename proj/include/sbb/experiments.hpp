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
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sbb/adaptive.hpp"
#include "sbb/array.hpp"
#include "sbb/batch.hpp"
#include "sbb/common.hpp"
#include "sbb/diagnostics.hpp"
#include "sbb/encodings.hpp"
#include "sbb/forward.hpp"
#include "sbb/scenario.hpp"
#include "sbb/slepian.hpp"
#include "sbb/streaming.hpp"

namespace sbb {

inline constexpr const char* version_string = "sbb 1.0.0";

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> r) {
    if (r.size() != columns.size()) throw std::logic_error("table row width mismatch");
    rows.push_back(std::move(r));
  }

  void write_csv(std::ostream& out) const {
    for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
    out << "\n";
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
      out << "\n";
    }
  }
};

inline std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string fmt(long long v) { return std::to_string(v); }
inline std::string fmt(int v) { return std::to_string(v); }
inline std::string fmt(long v) { return std::to_string(v); }

struct ExperimentResult {
  std::string command;
  Table table;
  std::vector<std::pair<std::string, Table>> extra;  // written as <command>_<name>.csv
  nlohmann::ordered_json aggregates = nlohmann::ordered_json::object();
};

inline std::uint64_t config_hash(const ScenarioConfig& c) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& [k, v] : config_pairs(c))
    for (char ch : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ull;
    }
  return h;
}

inline void write_result(const ExperimentResult& r, const ScenarioConfig& c, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + out_dir + ": " + ec.message());
  auto open = [&](const std::string& name) {
    std::ofstream f(fs::path(out_dir) / name);
    if (!f) throw ConfigError("cannot write " + (fs::path(out_dir) / name).string());
    return f;
  };
  {
    auto f = open(r.command + ".csv");
    r.table.write_csv(f);
  }
  for (const auto& [name, t] : r.extra) {
    auto f = open(r.command + "_" + name + ".csv");
    t.write_csv(f);
  }
  nlohmann::ordered_json j;
  j["command"] = r.command;
  j["version"] = version_string;
  j["seed"] = c.seed;
  char hash[20];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(c)));
  j["config_hash"] = hash;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config_pairs(c)) cfg[k] = v;
  j["config"] = cfg;
  j["aggregates"] = r.aggregates;
  auto f = open(r.command + ".json");
  f << j.dump(2) << "\n";
}

// Independent, reproducible stream per (seed, trial, purpose)
inline std::uint64_t trial_seed(std::uint64_t seed, std::uint64_t trial, std::uint64_t stream = 0) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (trial + 1) + 0xbf58476d1ce4e5b9ull * stream;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Runs fn(trial) for every trial on a small worker pool; the first exception wins
template <class F>
void parallel_trials(int trials, int threads, F&& fn) {
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex mu;
  auto work = [&] {
    for (;;) {
      const int i = next++;
      if (i >= trials) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!err) err = std::current_exception();
        next = trials;
      }
    }
  };
  const int n = std::max(1, std::min(threads, trials));
  if (n == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);
}

struct Stats {
  double mean = 0.0;
  double std = 0.0;
};

inline Stats stats(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  for (double x : v) s.std += sqr(x - s.mean);
  s.std = v.size() > 1 ? std::sqrt(s.std / static_cast<double>(v.size() - 1)) : 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// Shared scenario plumbing

inline ArrayScenario scenario_from(const ScenarioConfig& c, int snapshots = -1) {
  return make_scenario(parse_geometry(c.geometry, c.carrier), c.bandwidth, c.angle(), snapshots > 0 ? snapshots : c.snapshots);
}

inline ArrayScenario with_angle(const ArrayScenario& s, ArrivalAngle a) {
  ArrayScenario o = s;
  o.angle = a;
  return o;
}

inline ArrivalAngle angle_deg(double az, double el) { return {deg2rad(az), deg2rad(el)}; }

inline Eigen::Index ceil_2wt(double omega, double t) {
  return static_cast<Eigen::Index>(std::ceil(2.0 * omega * t - 1e-9));
}

// D_N: ceil(2 Omega T_N) + margin when a margin is configured, else d(Omega T_N) at the tolerance
inline Eigen::Index model_dim(const ScenarioConfig& c, const ArrayScenario& s) {
  const double len = basis_interval(s).length;
  if (c.margin != -1000) {
    const Eigen::Index d = ceil_2wt(s.bandwidth, len) + c.margin;
    if (d < 1) throw ConfigError("margin leaves no model dimensions");
    return d;
  }
  return dimension(s.bandwidth * len, c.tolerance);
}

inline TestSignal make_signal(const ScenarioConfig& c, std::uint64_t seed, const std::shared_ptr<const SlepianBasis>& b,
                              double origin) {
  if (c.signal == "random_slepian") {
    return random_slepian(b, origin, seed);
  }
  return sum_of_sinusoids(c.bandwidth, seed, c.tones);
}

inline double signal_power(const TestSignal& s) { return s.power(); }

// Element streams sampled at t0 + i Ts for i < count: exp(-j 2 pi f_c tau_m) s(t - tau_m), M x count
inline MatC element_streams(const TestSignal& sig, const ArrayScenario& s, const ArrivalAngle& a, double t0, Eigen::Index count) {
  const VecR tau = delays(s.geometry, a);
  const double ts = s.plan.sample_interval;
  MatC out(s.elements(), count);
  for (Eigen::Index m = 0; m < s.elements(); ++m) {
    const cplx ph = std::polar(1.0, -2.0 * pi * s.geometry.carrier * tau(m));
    out.row(m) = ph * sig.uniform(t0 - tau(m), ts, count).transpose();
  }
  return out;
}

inline VecC stack_columns(const MatC& m) { return Eigen::Map<const VecC>(m.data(), m.size()); }

// ---------------------------------------------------------------------------
// dims

struct DimRegime {
  enum Kind { equal, at_most, at_least };
  double eps;
  double lo, hi;
  Kind kind;
  int value;  // equal: d == value; at_most / at_least: offset from ceil(2 Omega T)

  std::string label() const {
    char buf[96];
    const char* op = kind == equal ? "d=" : kind == at_most ? "d<=ceil(2wt)+" : "d>=ceil(2wt)+";
    std::snprintf(buf, sizeof buf, "%s%d on [%g,%g]", op, value, lo, hi);
    return buf;
  }

  std::vector<double> probes(int count = 20) const {
    std::vector<double> p(count);
    for (int i = 0; i < count; ++i) p[i] = lo + (hi - lo) * i / (count - 1);
    return p;
  }

  bool holds(double ot, Eigen::Index d) const {
    const Eigen::Index c = ceil_2wt(1.0, ot);
    switch (kind) {
      case equal: return d == value;
      case at_most: return d <= c + value;
      case at_least: return d >= c + value;
    }
    return false;
  }
};

// Published brackets for d(Omega T) at eps = 1e-3 and 1e-4
inline std::vector<DimRegime> tabulated_regimes() {
  using K = DimRegime::Kind;
  return {
      {1e-3, 0.001, 0.031, K::equal, 1},   {1e-3, 0.032, 0.268, K::equal, 2},  {1e-3, 0.17, 3.4, K::at_most, 2},
      {1e-3, 10.0, 200.0, K::at_most, 3},  {1e-3, 0.32, 200.0, K::at_least, 1}, {1e-4, 0.0005, 0.009, K::equal, 1},
      {1e-4, 0.010, 0.151, K::equal, 2},   {1e-4, 0.152, 0.439, K::equal, 3},  {1e-4, 0.15, 3.0, K::at_most, 3},
      {1e-4, 10.0, 200.0, K::at_most, 4},  {1e-4, 1.0, 200.0, K::at_least, 3},
  };
}

inline ExperimentResult cmd_dims(const ScenarioConfig& c) {
  ExperimentResult r;
  r.command = "dims";
  if (!c.omega_t.empty()) {
    r.table.columns = {"eps", "omega_t", "d", "ceil_2wt"};
    for (double ot : c.omega_t)
      r.table.add({fmt(c.tolerance), fmt(ot), fmt(static_cast<long long>(dimension(ot, c.tolerance))),
                   fmt(static_cast<long long>(ceil_2wt(1.0, ot)))});
    return r;
  }
  r.table.columns = {"eps", "regime", "omega_t", "d", "ceil_2wt", "ok"};
  int violations = 0, probes = 0;
  for (const auto& reg : tabulated_regimes())
    for (double ot : reg.probes()) {
      const Eigen::Index d = dimension(ot, reg.eps);
      const bool ok = reg.holds(ot, d);
      violations += !ok;
      ++probes;
      r.table.add({fmt(reg.eps), "\"" + reg.label() + "\"", fmt(ot), fmt(static_cast<long long>(d)),
                   fmt(static_cast<long long>(ceil_2wt(1.0, ot))), ok ? "1" : "0"});
    }
  r.aggregates["probes"] = probes;
  r.aggregates["violations"] = violations;
  return r;
}

// ---------------------------------------------------------------------------
// conventional: Slepian LS against delay-and-sum and subarray encodings

struct SnrRecord {
  std::string method;
  int trial;
  double nominal;
  double snr;
  double sir = std::nan("");
};

inline void summarize(ExperimentResult& r, const std::vector<SnrRecord>& recs, double ideal,
                      const std::map<std::string, double>& targets = {}) {
  std::map<std::pair<std::string, std::pair<double, double>>, std::vector<double>> groups;
  std::vector<std::pair<std::string, std::pair<double, double>>> order;
  for (const auto& x : recs) {
    auto key = std::make_pair(x.method, std::make_pair(x.nominal, x.sir));
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(x.snr);
  }
  Table t;
  t.columns = {"method", "nominal_snr_db", "sir_db", "trials", "mean_snr_db", "std_snr_db", "mean_gain_db", "ideal_gain_db"};
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& key : order) {
    const Stats s = stats(groups[key]);
    t.add({key.first, fmt(key.second.first), fmt(key.second.second), fmt(static_cast<long long>(groups[key].size())),
           fmt(s.mean), fmt(s.std), fmt(s.mean - key.second.first), fmt(ideal)});
    nlohmann::ordered_json j;
    j["method"] = key.first;
    j["nominal_snr_db"] = key.second.first;
    if (!std::isnan(key.second.second)) j["sir_db"] = key.second.second;
    j["mean_snr_db"] = s.mean;
    j["std_snr_db"] = s.std;
    j["mean_gain_db"] = s.mean - key.second.first;
    rows.push_back(j);
  }
  r.extra.emplace_back("summary", t);
  r.aggregates["ideal_gain_db"] = ideal;
  for (const auto& [k, v] : targets) r.aggregates[k] = v;
  r.aggregates["summary"] = rows;
}

inline Table snr_table(const std::vector<SnrRecord>& recs) {
  Table t;
  t.columns = {"method", "trial", "nominal_snr_db", "sir_db", "beamformed_snr_db", "gain_db"};
  for (const auto& x : recs)
    t.add({x.method, fmt(x.trial), fmt(x.nominal), fmt(x.sir), fmt(x.snr), fmt(x.snr - x.nominal)});
  return t;
}

inline ExperimentResult cmd_conventional(const ScenarioConfig& c) {
  const ArrayScenario s = scenario_from(c);
  const BasisInterval bi = basis_interval(s);
  const Eigen::Index d = model_dim(c, s);
  auto basis = std::make_shared<SlepianBasis>(scenario_basis(s, c.tolerance, static_cast<int>(d) + 8));
  const ForwardModel model = build_forward(s, *basis, d, false);
  const LeastSquares ls(model.stacked, c.delta);
  const MatC psi_out = evaluate(*basis, d, output_offsets(s, bi)).cast<cplx>();
  const Eigen::Index m = s.elements(), n = s.snapshots();
  const double ts = s.plan.sample_interval;

  std::vector<std::string> methods = c.methods;
  if (methods.empty()) {
    methods.push_back("slepian");
    for (int t : c.das_taps) methods.push_back("das" + std::to_string(t));
    for (const auto& tile : c.subarrays) methods.push_back("subarray" + tile);
  }
  struct Method {
    std::string name;
    int taps = 0;
    std::shared_ptr<LeastSquares> enc;
    MatC phi;
  };
  std::vector<Method> ms;
  int max_taps = 0;
  for (const auto& name : methods) {
    Method me{name};
    if (name == "slepian") {
    } else if (name.rfind("das", 0) == 0) {
      me.taps = static_cast<int>(detail::to_int("methods", name.substr(3)));
      if (me.taps < 1) throw ConfigError("delay-and-sum needs a positive tap count");
      max_taps = std::max(max_taps, me.taps);
    } else if (name.rfind("subarray", 0) == 0) {
      const Encoder e = make_subarray_encoder(tile_partition(c.geometry, name.substr(8)), steering_weights(s), n);
      me.phi = e.matrix;
      me.enc = std::make_shared<LeastSquares>(me.phi * model.stacked, c.delta);
    } else {
      throw ConfigError("unknown conventional method '" + name + "'");
    }
    ms.push_back(std::move(me));
  }
  // padded element streams so the delay-and-sum filters see real history
  const auto pad = static_cast<Eigen::Index>(max_taps / 2 + std::ceil(s.t1() / ts) + 2);
  const double t0 = s.plan.snapshot_times(0);

  std::vector<std::vector<SnrRecord>> per_trial(c.trials);
  parallel_trials(c.trials, c.threads, [&](int trial) {
    const TestSignal sig = make_signal(c, trial_seed(c.seed, trial, 0), basis, -bi.shift);
    const double p = signal_power(sig);
    const MatC clean = element_streams(sig, s, s.angle, t0 - pad * ts, n + 2 * pad);
    const VecC truth = sig.uniform(t0, ts, n);
    std::mt19937_64 rng(trial_seed(c.seed, trial, 1));
    for (double snr : c.snr_db) {
      const double np = p * std::pow(10.0, -snr / 10.0);
      const MatC streams = clean + white_noise(m, n + 2 * pad, np, rng);
      const VecC y = stack_columns(streams.middleCols(pad, n));
      for (const auto& me : ms) {
        VecC est;
        if (me.name == "slepian") {
          est = psi_out * (ls.weights() * y);
        } else if (me.taps > 0) {
          est = delay_and_sum(streams, s.delays(), s.geometry.carrier, ts, me.taps).segment(pad, n);
        } else {
          est = psi_out * me.enc->solve(me.phi * y).alpha;
        }
        per_trial[trial].push_back({me.name, trial, snr, beamformed_snr(est, truth)});
      }
    }
  });
  std::vector<SnrRecord> recs;
  for (auto& v : per_trial) recs.insert(recs.end(), v.begin(), v.end());
  ExperimentResult r;
  r.command = "conventional";
  r.table = snr_table(recs);
  summarize(r, recs, ideal_gain(m),
            {{"model_dim", static_cast<double>(d)},
             {"subspace_gain_db", subspace_gain(m * n, d)},
             {"t1_s", s.t1()},
             {"tn_s", bi.length}});
  return r;
}

// ---------------------------------------------------------------------------
// adaptive: nulling, MVDR / MPDR and LCMV against plain LS

inline ExperimentResult cmd_adaptive(const ScenarioConfig& c) {
  if (c.interferers.empty()) throw ConfigError("adaptive runs need at least one interferer (interferers = az:el:sir)");
  const ArrayScenario s = scenario_from(c);
  const BasisInterval bi = basis_interval(s);
  const Eigen::Index d = model_dim(c, s);
  auto basis = std::make_shared<SlepianBasis>(scenario_basis(s, c.tolerance, static_cast<int>(d) + 8));
  const ForwardModel model = build_forward(s, *basis, d, false);
  const MatC& a = model.stacked;
  const MatC a_pinv = pinv(a);
  const MatC psi_out = evaluate(*basis, d, output_offsets(s, bi)).cast<cplx>();
  const Eigen::Index m = s.elements(), n = s.snapshots();
  const double ts = s.plan.sample_interval;

  std::vector<ArrivalAngle> iang;
  MatC ai_all(m * n, 0);
  for (const auto& spec : c.interferers) {
    iang.push_back(angle_deg(spec.azimuth_deg, spec.elevation_deg));
    const ArrayScenario si = with_angle(s, iang.back());
    const Eigen::Index di = model_dim(c, si);
    const SlepianBasis bi_basis = scenario_basis(si, c.tolerance, static_cast<int>(di));
    const MatC ai = build_forward(si, bi_basis, di, false).stacked;
    MatC tmp(m * n, ai_all.cols() + ai.cols());
    tmp << ai_all, ai;
    ai_all = tmp;
  }
  const NullProjector proj = null_projector(ai_all);

  std::vector<std::string> methods = c.methods;
  if (methods.empty()) methods = {"ls", "nulling", "mvdr", "mpdr", "lcmv"};
  for (const auto& me : methods)
    if (me != "ls" && me != "nulling" && me != "mvdr" && me != "mpdr" && me != "lcmv")
      throw ConfigError("unknown adaptive method '" + me + "'");

  // sweep points: SNR sweep at the configured SIRs, then an SIR sweep at 30 dB
  struct Point {
    double snr;
    std::vector<double> sir;
  };
  std::vector<Point> points;
  std::vector<double> base_sir;
  for (const auto& i : c.interferers) base_sir.push_back(i.sir_db);
  for (double snr : c.snr_db) points.push_back({snr, base_sir});
  for (double sir : c.sir_db) points.push_back({30.0, std::vector<double>(base_sir.size(), sir)});

  // weights depend only on the second-order statistics of each point
  std::vector<std::map<std::string, MatC>> weights(points.size());
  for (std::size_t pi_ = 0; pi_ < points.size(); ++pi_) {
    const double np = std::pow(10.0, -points[pi_].snr / 10.0);
    std::vector<SourceSpec> inter;
    for (std::size_t i = 0; i < iang.size(); ++i) inter.push_back({iang[i], std::pow(10.0, -points[pi_].sir[i] / 10.0)});
    for (const auto& me : methods) {
      if (me == "ls") {
        weights[pi_][me] = a_pinv;
      } else if (me == "nulling") {
        weights[pi_][me] = a_pinv - (a_pinv * proj.range) * proj.range.adjoint();
      } else if (me == "mvdr" || me == "lcmv") {
        const CovarianceModel r = build_covariance(s, inter, np, c.tolerance);
        weights[pi_][me] = me == "mvdr" ? mvdr_weights(a, r).w
                                        : lcmv_weights(a, r, {{ai_all, MatC::Zero(d, ai_all.cols())}}).w;
      } else {
        std::vector<SourceSpec> all = inter;
        all.push_back({s.angle, 1.0});
        weights[pi_][me] = mvdr_weights(a, build_covariance(s, all, np, c.tolerance)).w;
      }
    }
  }

  const double t0 = s.plan.snapshot_times(0);
  std::vector<std::vector<SnrRecord>> per_trial(c.trials);
  parallel_trials(c.trials, c.threads, [&](int trial) {
    const TestSignal sig = make_signal(c, trial_seed(c.seed, trial, 0), basis, -bi.shift);
    const double p = signal_power(sig);
    const VecC clean = stack_columns(element_streams(sig, s, s.angle, t0, n));
    const VecC truth = sig.uniform(t0, ts, n);
    std::vector<VecC> ivec;
    std::vector<double> ipow;
    for (std::size_t i = 0; i < iang.size(); ++i) {
      const TestSignal is = sum_of_sinusoids(c.bandwidth, trial_seed(c.seed, trial, 10 + i), c.tones);
      ipow.push_back(signal_power(is));
      ivec.push_back(stack_columns(element_streams(is, s, iang[i], t0, n)));
    }
    std::mt19937_64 rng(trial_seed(c.seed, trial, 1));
    for (std::size_t pi_ = 0; pi_ < points.size(); ++pi_) {
      const auto& pt = points[pi_];
      VecC y = clean + stack_columns(white_noise(m, n, p * std::pow(10.0, -pt.snr / 10.0), rng));
      for (std::size_t i = 0; i < iang.size(); ++i) y += sir_scale(p, ipow[i], pt.sir[i]) * ivec[i];
      const double sir_col = pt.sir.front();
      for (const auto& me : methods) {
        const VecC est = psi_out * (weights[pi_].at(me) * y);
        per_trial[trial].push_back({me, trial, pt.snr, beamformed_snr(est, truth), sir_col});
      }
    }
  });
  std::vector<SnrRecord> recs;
  for (auto& v : per_trial) recs.insert(recs.end(), v.begin(), v.end());
  ExperimentResult r;
  r.command = "adaptive";
  r.table = snr_table(recs);
  summarize(r, recs, ideal_gain(m), {{"model_dim", static_cast<double>(d)}, {"interferer_dim", static_cast<double>(proj.interferer_dim)}});
  return r;
}

// ---------------------------------------------------------------------------
// streaming

// Reconstruction of a run of packets, optionally merged in groups of B'
struct StreamSynthesis {
  int group = 1;
  MatC psi_a, psi_b;          // N x D: batch k outputs against packets k and k-1
  std::vector<MatC> psi_m;    // N x D' for offsets r = 0..B'
  std::shared_ptr<PacketMerge> merge;

  // outputs of batch k given packet estimates alpha[0..K)
  VecC batch_output(Eigen::Index k, const std::vector<VecC>& alpha, const std::vector<VecC>& beta) const {
    const Eigen::Index kk = static_cast<Eigen::Index>(alpha.size());
    auto merged = [&](Eigen::Index p) { return group > 1 && (p / group) < static_cast<Eigen::Index>(beta.size()); };
    VecC out = VecC::Zero(psi_a.rows());
    if (k < kk) {
      if (merged(k)) out += psi_m[k % group] * beta[k / group];
      else out += psi_a * alpha[k];
    }
    if (k >= 1) {
      const Eigen::Index p = k - 1;
      if (merged(p)) {
        if (k % group == 0) out += psi_m[group] * beta[p / group];  // previous group seen from its right edge
      } else {
        out += psi_b * alpha[p];
      }
    }
    return out;
  }

  std::vector<VecC> merge_all(const std::vector<VecC>& alpha) const {
    std::vector<VecC> beta;
    if (group <= 1) return beta;
    for (std::size_t g = 0; (g + 1) * group <= alpha.size(); ++g)
      beta.push_back(merge->project(std::vector<VecC>(alpha.begin() + g * group, alpha.begin() + (g + 1) * group)));
    return beta;
  }
};

inline StreamSynthesis stream_synthesis(const PacketBasis& pb, int group, Eigen::Index merged_dim) {
  StreamSynthesis sy;
  sy.group = group;
  VecR t(pb.batch);
  for (Eigen::Index i = 0; i < pb.batch; ++i) t(i) = pb.batch_time(0, i);
  sy.psi_a = pb.lapped->values(t).cast<cplx>();
  sy.psi_b = pb.lapped->values(t.array() + pb.stride).cast<cplx>();
  if (group > 1) {
    auto merged = std::make_shared<LappedBasis>(pb.lapped->bandwidth(), group * pb.stride, pb.lapped->eps(), merged_dim);
    sy.merge = std::make_shared<PacketMerge>(build_merge(*pb.lapped, merged, group));
    for (int r = 0; r <= group; ++r) sy.psi_m.push_back(merged->values(t.array() + r * pb.stride).cast<cplx>());
  }
  return sy;
}

struct StreamRun {
  std::vector<VecC> alpha;
  StreamCounters counters;
};

inline StreamRun run_stream(PacketStream st, const std::vector<VecC>& batches) {
  if (batches.size() < 2) throw ConfigError("streaming needs at least two batches");
  StreamRun out;
  out.alpha.resize(batches.size());
  auto take = [&](const std::vector<std::pair<Eigen::Index, VecC>>& v) {
    for (const auto& [k, a] : v) out.alpha[k] = a;
  };
  take(st.init(batches[0], batches[1]).finalized);
  for (std::size_t k = 2; k < batches.size(); ++k) take(st.step(batches[k]).finalized);
  take(st.flush());
  out.counters = st.counters();
  return out;
}

// Binary stream input: records of M x N little-endian complex64, snapshot-major (n*M + m)
inline std::vector<VecC> read_complex64_batches(const std::string& path, Eigen::Index rows) {
  static_assert(std::endian::native == std::endian::little, "stream input assumes a little-endian host");
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open stream input: " + path);
  std::vector<VecC> out;
  std::vector<float> buf(2 * rows);
  while (f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
    VecC y(rows);
    for (Eigen::Index i = 0; i < rows; ++i) y(i) = cplx(buf[2 * i], buf[2 * i + 1]);
    out.push_back(std::move(y));
  }
  if (f.gcount() != 0) throw ConfigError("stream input ends with a partial record: " + path);
  return out;
}

inline void write_complex64_batches(const std::string& path, const std::vector<VecC>& batches) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open stream output: " + path);
  for (const auto& y : batches)
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const float v[2] = {static_cast<float>(y(i).real()), static_cast<float>(y(i).imag())};
      f.write(reinterpret_cast<const char*>(v), sizeof v);
    }
}

inline ExperimentResult cmd_streaming(const ScenarioConfig& c) {
  const ArrayScenario s = scenario_from(c);
  const double ts = s.plan.sample_interval;
  const Eigen::Index m = s.elements(), n = s.snapshots();
  const double overlap = c.overlap_factor * s.t1();
  const double stride = static_cast<double>(n) * ts;
  const Eigen::Index d = default_packet_dim(c.bandwidth, stride, overlap, c.packet_margin);
  const PacketBasis pb = build_packet_basis(s, d, overlap);
  MatC phi;
  if (c.measured_margin >= 0) phi = make_spatial_slepian_encoder(snapshot_subspace(s, c.measured_margin, c.tolerance), n).matrix;
  auto make_stream = [&] {
    PacketStream st = phi.size() ? PacketStream::measured(pb, phi, c.delta, c.buffer) : PacketStream::from_basis(pb, c.delta, c.buffer);
    st.precompute_steady_state();
    return st;
  };
  ExperimentResult r;
  r.command = "streaming";
  r.aggregates["packet_dim"] = d;
  r.aggregates["overlap_s"] = overlap;
  r.aggregates["measurements_per_batch"] = phi.size() ? phi.rows() : m * n;
  {
    const PacketStream probe = make_stream();
    r.aggregates["ridge"] = probe.ridge();
    r.aggregates["ill_conditioned"] = probe.ill_conditioned();
  }

  if (!c.stream_input.empty()) {
    std::vector<VecC> batches = read_complex64_batches(c.stream_input, m * n);
    if (phi.size())
      for (auto& y : batches) y = phi * y;
    const StreamRun run = run_stream(make_stream(), batches);
    const StreamSynthesis sy = stream_synthesis(pb, 1, 0);
    Table coef;
    coef.columns = {"packet", "index", "re", "im"};
    for (std::size_t k = 0; k < run.alpha.size(); ++k)
      for (Eigen::Index i = 0; i < run.alpha[k].size(); ++i)
        coef.add({fmt(static_cast<long long>(k)), fmt(static_cast<long long>(i)), fmt(run.alpha[k](i).real()),
                  fmt(run.alpha[k](i).imag())});
    r.table.columns = {"batch", "sample", "time_s", "re", "im"};
    for (std::size_t k = 0; k < run.alpha.size(); ++k) {
      const VecC out = sy.batch_output(static_cast<Eigen::Index>(k), run.alpha, {});
      for (Eigen::Index i = 0; i < n; ++i)
        r.table.add({fmt(static_cast<long long>(k)), fmt(static_cast<long long>(i)), fmt(pb.batch_time(k, i)),
                     fmt(out(i).real()), fmt(out(i).imag())});
    }
    r.extra.emplace_back("coefficients", coef);
    r.aggregates["batches"] = batches.size();
    r.aggregates["large_matvecs"] = run.counters.large_matvecs;
    return r;
  }

  const int kk = c.packets;
  std::vector<StreamSynthesis> syn;
  for (int g : c.merge)
    syn.push_back(stream_synthesis(pb, g, g > 1 ? default_packet_dim(c.bandwidth, g * stride, overlap, c.packet_margin) : 0));
  // single-batch reference with the plain interval basis
  const Eigen::Index dn = model_dim(c, s);
  const SlepianBasis bb = scenario_basis(s, c.tolerance, static_cast<int>(dn));
  const ForwardModel fm = build_forward(s, bb, dn, false);
  const MatC batch_w = evaluate(bb, dn, output_offsets(s, basis_interval(s))).cast<cplx>() * LeastSquares(fm.stacked, c.delta).weights();
  const double first = pb.batch_time(0, 0);
  const int lo = c.warmup + 1, hi = kk - c.warmup;  // scored batches [lo, hi)

  std::vector<std::vector<SnrRecord>> per_trial(c.trials);
  parallel_trials(c.trials, c.threads, [&](int trial) {
    const TestSignal sig = sum_of_sinusoids(c.bandwidth, trial_seed(c.seed, trial, 0), c.tones);
    const double p = signal_power(sig);
    const MatC clean = element_streams(sig, s, s.angle, first, static_cast<Eigen::Index>(kk) * n);
    const VecC truth_all = sig.uniform(first, ts, static_cast<Eigen::Index>(kk) * n);
    std::mt19937_64 rng(trial_seed(c.seed, trial, 1));
    for (double snr : c.snr_db) {
      const double np = p * std::pow(10.0, -snr / 10.0);
      std::vector<VecC> ys(kk), ws(kk);
      for (int k = 0; k < kk; ++k) {
        ys[k] = stack_columns(clean.middleCols(static_cast<Eigen::Index>(k) * n, n) + white_noise(m, n, np, rng));
        ws[k] = phi.size() ? VecC(phi * ys[k]) : ys[k];
      }
      const StreamRun run = run_stream(make_stream(), ws);
      const VecC truth = truth_all.segment(static_cast<Eigen::Index>(lo) * n, static_cast<Eigen::Index>(hi - lo) * n);
      for (std::size_t j = 0; j < syn.size(); ++j) {
        const auto beta = syn[j].merge_all(run.alpha);
        VecC est(truth.size());
        for (int k = lo; k < hi; ++k) est.segment(static_cast<Eigen::Index>(k - lo) * n, n) = syn[j].batch_output(k, run.alpha, beta);
        per_trial[trial].push_back({"stream_merge" + std::to_string(syn[j].group), trial, snr, beamformed_snr(est, truth)});
      }
      VecC est(truth.size());
      for (int k = lo; k < hi; ++k) est.segment(static_cast<Eigen::Index>(k - lo) * n, n) = batch_w * ys[k];
      per_trial[trial].push_back({"batch", trial, snr, beamformed_snr(est, truth)});
    }
  });
  std::vector<SnrRecord> recs;
  for (auto& v : per_trial) recs.insert(recs.end(), v.begin(), v.end());
  r.table = snr_table(recs);
  summarize(r, recs, ideal_gain(m), {{"batch_dim", static_cast<double>(dn)}, {"batch_subspace_gain_db", subspace_gain(m * n, dn)}});
  return r;
}

// ---------------------------------------------------------------------------
// encode: snapshot encodings, spatial-temporal and random measurements

inline ExperimentResult cmd_encode(const ScenarioConfig& c, const std::string& out_dir = "") {
  const ArrayScenario s = scenario_from(c);
  const BasisInterval bi = basis_interval(s);
  const Eigen::Index d = model_dim(c, s);
  auto basis = std::make_shared<SlepianBasis>(scenario_basis(s, c.tolerance, static_cast<int>(d) + 8));
  const ForwardModel model = build_forward(s, *basis, d, false);
  const MatC& a = model.stacked;
  const Eigen::Index m = s.elements(), n = s.snapshots();
  const LeastSquares full(a, c.delta);
  const double full_var = variance_multiplier(a);

  ExperimentResult r;
  r.command = "encode";
  r.table.columns = {"encoder", "parameter", "measurements", "variance_multiplier", "relative_difference"};
  r.table.add({"full", "0", fmt(static_cast<long long>(m * n)), fmt(full_var), "0"});
  r.table.add({"spatiotemporal", "pinv", fmt(static_cast<long long>(d)),
               fmt(variance_multiplier(make_spatiotemporal_encoder(a, SpatioTemporalMode::pinv).matrix, a)), "0"});

  // snapshot (spatial Slepian) encodings against the full LS estimate on noiseless data
  std::vector<Eigen::Index> ps;
  nlohmann::ordered_json snap = nlohmann::ordered_json::array();
  const double t0 = s.plan.snapshot_times(0);
  for (int l1 : c.snapshot_margins) {
    MatC u;
    try {
      u = snapshot_subspace(s, l1, c.tolerance);
    } catch (const ConfigError&) {
      continue;  // D_1 beyond the element count
    }
    const Encoder e = make_spatial_slepian_encoder(u, n);
    const LeastSquares enc(e.matrix * a, c.delta);
    std::vector<double> diffs(c.trials);
    parallel_trials(c.trials, c.threads, [&](int trial) {
      const TestSignal sig = make_signal(c, trial_seed(c.seed, trial, 0), basis, -bi.shift);
      const VecC y = stack_columns(element_streams(sig, s, s.angle, t0, n));
      const VecC af = full.solve(y).alpha;
      diffs[trial] = (enc.solve(e.matrix * y).alpha - af).norm() / af.norm();
    });
    const Stats st = stats(diffs);
    const double vm = variance_multiplier(e.matrix, a);
    r.table.add({"spatial", fmt(l1), fmt(static_cast<long long>(e.measurements())), fmt(vm), fmt(st.mean)});
    ps.push_back(e.measurements());
    nlohmann::ordered_json j;
    j["snapshot_margin"] = l1;
    j["snapshot_dim"] = u.cols();
    j["measurements"] = e.measurements();
    j["variance_multiplier"] = vm;
    j["mean_relative_difference"] = st.mean;
    snap.push_back(j);
  }
  for (const auto& tile : c.subarrays) {
    const Encoder e = make_subarray_encoder(tile_partition(c.geometry, tile), steering_weights(s), n);
    double vm = std::numeric_limits<double>::infinity();
    try {
      vm = variance_multiplier(e.matrix, a);
    } catch (const NumericalError&) {
    }
    r.table.add({"subarray", tile, fmt(static_cast<long long>(e.measurements())), fmt(vm), "nan"});
  }

  // random measurements, averaged over draws
  std::vector<Eigen::Index> rps;
  for (int p : c.encoder_dims) rps.push_back(p);
  if (rps.empty()) {
    rps = ps;
    rps.push_back(d);
    rps.push_back(2 * d);
    rps.push_back(4 * d);
  }
  std::sort(rps.begin(), rps.end());
  rps.erase(std::unique(rps.begin(), rps.end()), rps.end());
  nlohmann::ordered_json rnd = nlohmann::ordered_json::array();
  for (Eigen::Index p : rps) {
    if (p < d || p > m * n) continue;
    std::vector<double> v(c.trials);
    parallel_trials(c.trials, c.threads, [&](int trial) {
      const Encoder e = make_random_encoder(p, m * n, trial_seed(c.seed, trial, 100 + static_cast<std::uint64_t>(p)));
      v[trial] = variance_multiplier(e.matrix, a);
    });
    const Stats st = stats(v);
    r.table.add({"random", fmt(static_cast<long long>(p)), fmt(static_cast<long long>(p)), fmt(st.mean), "nan"});
    nlohmann::ordered_json j;
    j["measurements"] = p;
    j["mean_variance_multiplier"] = st.mean;
    j["std_variance_multiplier"] = st.std;
    rnd.push_back(j);
  }
  r.aggregates["model_dim"] = d;
  r.aggregates["full_variance_multiplier"] = full_var;
  r.aggregates["spatial"] = snap;
  r.aggregates["random"] = rnd;

  if (!out_dir.empty()) {
    Encoder e;
    if (c.encoder == "spatiotemporal") {
      e = make_spatiotemporal_encoder(a, SpatioTemporalMode::pinv);
    } else if (c.encoder == "random") {
      e = make_random_encoder(c.encoder_dims.empty() ? 2 * d : c.encoder_dims.front(), m * n, trial_seed(c.seed, 0, 99));
    } else if (c.encoder == "subarray") {
      if (c.subarrays.empty()) throw ConfigError("encoder = subarray needs a subarrays tile");
      e = make_subarray_encoder(tile_partition(c.geometry, c.subarrays.front()), steering_weights(s), n);
    } else {
      e = make_spatial_slepian_encoder(snapshot_subspace(s, c.snapshot_margins.empty() ? 2 : c.snapshot_margins.front(), c.tolerance), n);
    }
    std::filesystem::create_directories(out_dir);
    save_encoder((std::filesystem::path(out_dir) / "encoder.bin").string(), e);
    r.aggregates["exported_encoder"] = structure_name(e.structure);
    r.aggregates["exported_shape"] = {e.matrix.rows(), e.matrix.cols()};
  }
  return r;
}

// ---------------------------------------------------------------------------
// diag: error budget, sampling comparison, nulling bias and merge accuracy

struct MergeCell {
  int packet_margin;
  int merged_margin;
  Eigen::Index packet_dim;
  Eigen::Index merged_dim;
  double error;
};

// Low-rank merge accuracy for packets of N snapshots whose extended length is T_N
inline std::vector<MergeCell> merge_accuracy(const ArrayScenario& s, int packets, const std::vector<int>& packet_margins,
                                             const std::vector<int>& merged_margins) {
  const double ts = s.plan.sample_interval;
  const double stride = static_cast<double>(s.snapshots()) * ts;
  const double overlap = std::max(0.0, s.t1() - ts);
  const double omega = s.bandwidth;
  std::map<int, std::shared_ptr<const LappedBasis>> merged;
  for (int q : merged_margins)
    merged[q] = std::make_shared<LappedBasis>(omega, packets * stride, 0.5 * overlap,
                                              default_packet_dim(omega, packets * stride, overlap, q));
  std::vector<MergeCell> out;
  for (int p : packet_margins) {
    const LappedBasis pk(omega, stride, 0.5 * overlap, default_packet_dim(omega, stride, overlap, p));
    for (int q : merged_margins) {
      const PacketMerge mg = build_merge(pk, merged[q], packets);
      out.push_back({p, q, pk.dim(), merged[q]->dim(), low_rank_merge(mg).error});
    }
  }
  return out;
}

inline ExperimentResult cmd_diag(const ScenarioConfig& c) {
  const ArrayScenario s = scenario_from(c);
  const BasisInterval bi = basis_interval(s);
  const Eigen::Index base = ceil_2wt(s.bandwidth, bi.length);
  ExperimentResult r;
  r.command = "diag";
  r.table.columns = {"section", "parameter", "dim", "quantity", "value", "normalized"};
  auto has = [&](const std::string& sec) { return std::find(c.sections.begin(), c.sections.end(), sec) != c.sections.end(); };

  if (has("budget")) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (int l : c.margins) {
      const ErrorBudget e = error_budget(s, base + l, c.tolerance);
      const std::string sd = fmt(static_cast<long long>(e.dim));
      r.table.add({"budget", fmt(l), sd, "truncation_bias", fmt(e.truncation_bias), fmt(e.truncation_normalized())});
      r.table.add({"budget", fmt(l), sd, "mismatch_bias", fmt(e.mismatch_bias), fmt(e.mismatch_normalized())});
      r.table.add({"budget", fmt(l), sd, "variance_multiplier", fmt(e.variance_multiplier), fmt(e.variance_normalized())});
      nlohmann::ordered_json j;
      j["margin"] = l;
      j["dim"] = e.dim;
      j["truncation_normalized"] = e.truncation_normalized();
      j["mismatch_normalized"] = e.mismatch_normalized();
      j["variance_normalized"] = e.variance_normalized();
      rows.push_back(j);
    }
    r.aggregates["budget"] = rows;
  }

  if (has("sampling")) {
    // the array's sample pattern against MN uniformly random sample times on [0, T_N]
    const Eigen::Index mn = s.elements() * s.snapshots();
    const int draws = std::min(c.trials, 20);
    for (int l : c.margins) {
      const Eigen::Index d = base + l;
      const SlepianBasis b = scenario_basis(s, c.tolerance, static_cast<int>(d) + 8);
      const ForwardModel f = build_forward(s, b, d, false);
      const MatC ap = pinv(f.stacked);
      const double energy = 2.0 * s.bandwidth * b.interval_length;
      const std::string sd = fmt(static_cast<long long>(d));
      r.table.add({"sampling_array", fmt(l), sd, "mismatch_bias", fmt(mismatch_bias(ap, signal_covariance(f, s.bandwidth), b.eigenvalues)),
                   fmt(mismatch_bias(ap, signal_covariance(f, s.bandwidth), b.eigenvalues) / energy)});
      r.table.add({"sampling_array", fmt(l), sd, "variance_multiplier", fmt(variance_multiplier(f.stacked)),
                   fmt(variance_multiplier(f.stacked) / b.interval_length)});
      std::vector<double> mis(draws), var(draws);
      parallel_trials(draws, c.threads, [&](int t) {
        std::mt19937_64 rng(trial_seed(c.seed, t, 200));
        std::uniform_real_distribution<double> u(0.0, b.interval_length);
        VecR times(mn);
        for (auto& x : times) x = u(rng);
        const MatC ar = evaluate(b, d, times).cast<cplx>();
        const MatC arp = pinv(ar);
        mis[t] = mismatch_bias(arp, build_kernel_gram(times, s.bandwidth).cast<cplx>(), b.eigenvalues);
        var[t] = variance_multiplier(ar);
      });
      const Stats sm = stats(mis), sv = stats(var);
      r.table.add({"sampling_random", fmt(l), sd, "mismatch_bias", fmt(sm.mean), fmt(sm.mean / energy)});
      r.table.add({"sampling_random", fmt(l), sd, "variance_multiplier", fmt(sv.mean), fmt(sv.mean / b.interval_length)});
    }
  }

  if (has("nulling")) {
    const Eigen::Index d = model_dim(c, s);
    const SlepianBasis b = scenario_basis(s, c.tolerance, static_cast<int>(d));
    const ForwardModel f = build_forward(s, b, d, false);
    const MatC ap = pinv(f.stacked);
    const double energy = 2.0 * s.bandwidth * b.interval_length;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (double az : c.null_angles_deg) {
      if (std::abs(az - c.azimuth_deg) < 1e-9) continue;
      const ArrayScenario si = with_angle(s, angle_deg(az, c.elevation_deg));
      const Eigen::Index di = model_dim(c, si);
      const SlepianBasis bi_b = scenario_basis(si, c.tolerance, static_cast<int>(di));
      const NullProjector p = null_projector(build_forward(si, bi_b, di, false).stacked);
      const double nb = nulling_bias(f.stacked, ap, p, b.eigenvalues);
      r.table.add({"nulling", fmt(az), fmt(static_cast<long long>(d)), "nulling_bias", fmt(nb), fmt(nb / energy)});
      nlohmann::ordered_json j;
      j["interferer_azimuth_deg"] = az;
      j["nulling_bias_normalized"] = nb / energy;
      rows.push_back(j);
    }
    r.aggregates["nulling"] = rows;
  }

  if (has("merge")) {
    const ArrayScenario sm = scenario_from(c, c.merge_snapshots);
    Table t;
    t.columns = {"packet_margin", "merged_margin", "packet_dim", "merged_dim", "relative_error"};
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& cell : merge_accuracy(sm, c.merge_packets, c.merge_packet_margins, c.merge_margins)) {
      t.add({fmt(cell.packet_margin), fmt(cell.merged_margin), fmt(static_cast<long long>(cell.packet_dim)),
             fmt(static_cast<long long>(cell.merged_dim)), fmt(cell.error)});
      r.table.add({"merge", fmt(cell.packet_margin) + ":" + fmt(cell.merged_margin), fmt(static_cast<long long>(cell.merged_dim)),
                   "low_rank_error", fmt(cell.error), fmt(cell.error)});
      nlohmann::ordered_json j;
      j["packet_margin"] = cell.packet_margin;
      j["merged_margin"] = cell.merged_margin;
      j["error"] = cell.error;
      rows.push_back(j);
    }
    r.extra.emplace_back("merge", t);
    r.aggregates["merge"] = rows;
  }
  return r;
}

}  // namespace sbb
