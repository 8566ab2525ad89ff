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

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sbb/batch.hpp"
#include "sbb/common.hpp"
#include "sbb/forward.hpp"

namespace sbb {

enum class SignalModel { sum_of_sinusoids, random_slepian };

// Bandlimited test signal with exact evaluation at any time
struct TestSignal {
  double bandwidth = 0.0;
  double duration = 0.0;
  SignalModel model = SignalModel::sum_of_sinusoids;
  std::uint64_t seed = 0;
  // sum of sinusoids
  VecR freqs;
  VecC amps;
  // random Slepian: s(t) = sum_k coef_k psi_k(t - origin) on [origin, origin + T]
  std::shared_ptr<const SlepianBasis> basis;
  VecC coef;
  double origin = 0.0;

  VecC operator()(const VecR& t) const {
    if (model == SignalModel::sum_of_sinusoids) {
      VecC out = VecC::Zero(t.size());
      for (Eigen::Index i = 0; i < t.size(); ++i)
        for (Eigen::Index k = 0; k < freqs.size(); ++k) out(i) += amps(k) * std::polar(1.0, 2.0 * pi * freqs(k) * t(i));
      return out;
    }
    const VecR u = t.array() - origin;
    return evaluate(*basis, coef.size(), u).cast<cplx>() * coef;
  }

  // Values on t0 + i dt, i < n; tones use a phasor recurrence re-anchored every 64 steps
  VecC uniform(double t0, double dt, Eigen::Index n) const {
    if (model != SignalModel::sum_of_sinusoids) return (*this)(VecR(VecR::LinSpaced(n, t0, t0 + dt * static_cast<double>(n - 1))));
    VecC out = VecC::Zero(n);
    for (Eigen::Index k = 0; k < freqs.size(); ++k) {
      const cplx step = std::polar(1.0, 2.0 * pi * freqs(k) * dt);
      cplx z;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (i % 64 == 0) z = amps(k) * std::polar(1.0, 2.0 * pi * freqs(k) * (t0 + dt * static_cast<double>(i)));
        out(i) += z;
        z *= step;
      }
    }
    return out;
  }

  cplx operator()(double t) const {
    VecR v(1);
    v(0) = t;
    return (*this)(v)(0);
  }

  // expected power per sample
  double power() const {
    if (model == SignalModel::sum_of_sinusoids) return amps.squaredNorm();
    return 2.0 * bandwidth;
  }
};

inline cplx complex_normal(std::mt19937_64& rng, double var) {
  std::normal_distribution<double> nd(0.0, std::sqrt(0.5 * var));
  const double re = nd(rng);
  const double im = nd(rng);
  return {re, im};
}

// 256 tones uniform over [-Omega, Omega] with CN(0, 1/256) amplitudes: unit expected power
inline TestSignal sum_of_sinusoids(double omega, std::uint64_t seed, int tones = 256) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uf(-omega, omega);
  TestSignal s;
  s.bandwidth = omega;
  s.model = SignalModel::sum_of_sinusoids;
  s.seed = seed;
  s.freqs.resize(tones);
  s.amps.resize(tones);
  for (int k = 0; k < tones; ++k) {
    s.freqs(k) = uf(rng);
    s.amps(k) = complex_normal(rng, 1.0 / tones);
  }
  return s;
}

// alpha_k ~ CN(0, lambda_k) over the kept functions, so E int |s|^2 = sum lambda = 2 Omega T
inline TestSignal random_slepian(std::shared_ptr<const SlepianBasis> b, double origin, std::uint64_t seed,
                                 Eigen::Index count = -1) {
  std::mt19937_64 rng(seed);
  TestSignal s;
  s.bandwidth = b->bandwidth;
  s.duration = b->interval_length;
  s.model = SignalModel::random_slepian;
  s.seed = seed;
  if (count < 0) count = b->kept();
  s.coef.resize(count);
  for (Eigen::Index k = 0; k < count; ++k) s.coef(k) = complex_normal(rng, b->eigenvalues(k));
  s.basis = std::move(b);
  s.origin = origin;
  return s;
}

struct Interferer {
  TestSignal signal;
  ArrivalAngle angle;
  double scale = 1.0;  // amplitude factor applied to the signal
};

// Amplitude factor giving interferer power = signal power * 10^(-SIR/10)
inline double sir_scale(double signal_power, double interferer_power, double sir_db) {
  return std::sqrt(signal_power / interferer_power * std::pow(10.0, -sir_db / 10.0));
}

// Plane-wave samples of one source: exp(-j 2 pi f_c tau_m) s(t_n - tau_m), M x N
inline MatC plane_wave(const TestSignal& sig, const ArrayGeometry& g, const ArrivalAngle& a, const VecR& times) {
  const VecR tau = delays(g, a);
  const Eigen::Index m = g.size(), n = times.size();
  VecR t(m * n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i) t(j * m + i) = times(j) - tau(i);
  const VecC v = sig(t);
  MatC out(m, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i) out(i, j) = std::polar(1.0, -2.0 * pi * g.carrier * tau(i)) * v(j * m + i);
  return out;
}

inline MatC white_noise(Eigen::Index m, Eigen::Index n, double power, std::mt19937_64& rng) {
  MatC e(m, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i) e(i, j) = complex_normal(rng, power);
  return e;
}

inline SnapshotBatch sample_array(const TestSignal& sig, const ArrayScenario& s, double noise_power,
                                  const std::vector<Interferer>& interferers, std::mt19937_64& rng) {
  SnapshotBatch b;
  b.times = s.plan.snapshot_times;
  b.samples = plane_wave(sig, s.geometry, s.angle, b.times);
  for (const auto& in : interferers) b.samples += in.scale * plane_wave(in.signal, s.geometry, in.angle, b.times);
  if (noise_power > 0.0) b.samples += white_noise(s.elements(), s.snapshots(), noise_power, rng);
  return b;
}

// ---------------------------------------------------------------------------
// Experiment configuration: flat "key = value" text, '#' comments, lists
// separated by commas. Unknown keys are rejected.

struct InterfererSpec {
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
  double sir_db = 0.0;
};

struct ScenarioConfig {
  std::string geometry = "ula(64)";
  double carrier = 20e9;
  double bandwidth = 5e9;
  double azimuth_deg = 90.0;
  double elevation_deg = 0.0;
  std::vector<InterfererSpec> interferers;
  std::vector<double> snr_db = {0, 10, 20, 30, 40};
  std::vector<double> sir_db;  // optional SIR sweep for the first interferer
  int snapshots = 32;
  int trials = 50;
  std::uint64_t seed = 1;
  double tolerance = 1e-3;
  int margin = -1000;  // L override; the default uses D_N from the tolerance
  double delta = 0.0;
  std::string signal = "sum_of_sinusoids";
  int tones = 256;
  std::vector<int> das_taps = {16, 32, 64};
  std::vector<std::string> subarrays;  // e.g. "2x1", "4x4"
  std::vector<std::string> methods;    // empty selects each command's defaults
  std::string encoder = "spatial";
  std::vector<int> encoder_dims;
  std::vector<int> snapshot_margins = {0, 1, 2, 3, 4, 6, 8};
  int buffer = 5;
  std::vector<int> merge = {1, 3, 5};
  int packets = 120;
  int packet_margin = 2;
  int warmup = 5;
  double overlap_factor = 1.0;  // packet overlap as a multiple of T_1
  std::vector<int> margins = {0, 2, 4, 6, 8};
  int threads = 1;
  std::string stream_input;  // optional binary complex64 batches for `streaming`
  int measured_margin = -1;  // >= 0 streams spatial Slepian measurements with D_1 = ceil(2 Omega T_1) + margin
  std::vector<double> omega_t;  // probes for `dims`; empty runs the tabulated regimes
  std::vector<std::string> sections = {"budget", "sampling", "nulling", "merge"};
  std::vector<double> null_angles_deg = {0, 15, 30, 45, 60, 75, 80, 85, 88};
  int merge_snapshots = 64;
  int merge_packets = 5;
  std::vector<int> merge_packet_margins = {2, 4, 6, 8, 10};
  std::vector<int> merge_margins = {2, 4, 6, 8};

  ArrivalAngle angle() const { return {deg2rad(azimuth_deg), deg2rad(elevation_deg)}; }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char ch : s) {
    if (ch == '(') ++depth;
    if (ch == ')') --depth;
    if (ch == sep && depth == 0) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline long long to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != std::floor(d)) throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  return static_cast<long long>(d);
}

}  // namespace detail

inline void validate(const ScenarioConfig& c) {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(c.carrier > 0, "carrier must be positive");
  need(c.bandwidth > 0, "bandwidth must be positive");
  need(c.snapshots >= 1, "snapshots must be at least 1");
  need(c.trials >= 1, "trials must be at least 1");
  need(c.tolerance > 0 && c.tolerance < 0.5, "tolerance must lie in (0, 1/2)");
  need(c.delta >= 0, "delta must be non-negative");
  need(c.signal == "sum_of_sinusoids" || c.signal == "random_slepian", "signal must be sum_of_sinusoids or random_slepian");
  need(c.tones >= 1, "tones must be positive");
  need(c.buffer >= 1, "buffer must be at least 1");
  need(c.packets >= 3, "packets must be at least 3");
  need(c.warmup >= 0 && 2 * c.warmup < c.packets, "warmup must leave interior packets");
  need(c.overlap_factor >= 0, "overlap_factor must be non-negative");
  need(c.threads >= 1, "threads must be at least 1");
  for (int t : c.das_taps) need(t >= 1, "das_taps entries must be positive");
  for (int b : c.merge) need(b >= 1, "merge entries must be positive");
  need(c.merge_snapshots >= 2 && c.merge_packets >= 1, "merge table needs merge_snapshots >= 2 and merge_packets >= 1");
  for (double v : c.omega_t) need(v >= 0, "omega_t probes must be non-negative");
  for (const auto& sec : c.sections)
    need(sec == "budget" || sec == "sampling" || sec == "nulling" || sec == "merge",
         "sections entries must be budget, sampling, nulling or merge");
  need(c.encoder == "spatial" || c.encoder == "spatiotemporal" || c.encoder == "random" || c.encoder == "subarray",
       "encoder must be spatial, spatiotemporal, random or subarray");
}

inline ScenarioConfig parse_config(std::istream& in, const std::string& name = "<config>") {
  ScenarioConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto num = [](double& dst) -> Setter { return [&dst](const std::string& k, const std::string& v) { dst = detail::to_double(k, v); }; };
  auto integer = [](int& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) { dst = static_cast<int>(detail::to_int(k, v)); };
  };
  auto str = [](std::string& dst) -> Setter { return [&dst](const std::string&, const std::string& v) { dst = v; }; };
  auto nums = [](std::vector<double>& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) {
      dst.clear();
      for (const auto& p : detail::split(v, ',')) dst.push_back(detail::to_double(k, p));
    };
  };
  auto ints = [](std::vector<int>& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) {
      dst.clear();
      for (const auto& p : detail::split(v, ',')) dst.push_back(static_cast<int>(detail::to_int(k, p)));
    };
  };
  auto strs = [](std::vector<std::string>& dst) -> Setter {
    return [&dst](const std::string&, const std::string& v) { dst = detail::split(v, ','); };
  };
  const std::map<std::string, Setter> table = {
      {"geometry", str(c.geometry)},
      {"carrier", num(c.carrier)},
      {"bandwidth", num(c.bandwidth)},
      {"azimuth_deg", num(c.azimuth_deg)},
      {"elevation_deg", num(c.elevation_deg)},
      {"interferers",
       [&c](const std::string& k, const std::string& v) {
         c.interferers.clear();
         for (const auto& item : detail::split(v, ',')) {
           const auto f = detail::split(item, ':');
           if (f.size() != 3) throw ConfigError("key '" + k + "': expected azimuth:elevation:sir entries");
           c.interferers.push_back({detail::to_double(k, f[0]), detail::to_double(k, f[1]), detail::to_double(k, f[2])});
         }
       }},
      {"snr_db", nums(c.snr_db)},
      {"sir_db", nums(c.sir_db)},
      {"snapshots", integer(c.snapshots)},
      {"trials", integer(c.trials)},
      {"seed", [&c](const std::string& k, const std::string& v) { c.seed = static_cast<std::uint64_t>(detail::to_int(k, v)); }},
      {"tolerance", num(c.tolerance)},
      {"margin", integer(c.margin)},
      {"delta", num(c.delta)},
      {"signal", str(c.signal)},
      {"tones", integer(c.tones)},
      {"das_taps", ints(c.das_taps)},
      {"subarrays", strs(c.subarrays)},
      {"methods", strs(c.methods)},
      {"encoder", str(c.encoder)},
      {"encoder_dims", ints(c.encoder_dims)},
      {"snapshot_margins", ints(c.snapshot_margins)},
      {"buffer", integer(c.buffer)},
      {"merge", ints(c.merge)},
      {"packets", integer(c.packets)},
      {"packet_margin", integer(c.packet_margin)},
      {"warmup", integer(c.warmup)},
      {"overlap_factor", num(c.overlap_factor)},
      {"margins", ints(c.margins)},
      {"threads", integer(c.threads)},
      {"stream_input", str(c.stream_input)},
      {"measured_margin", integer(c.measured_margin)},
      {"omega_t", nums(c.omega_t)},
      {"sections", strs(c.sections)},
      {"null_angles_deg", nums(c.null_angles_deg)},
      {"merge_snapshots", integer(c.merge_snapshots)},
      {"merge_packets", integer(c.merge_packets)},
      {"merge_packet_margins", ints(c.merge_packet_margins)},
      {"merge_margins", ints(c.merge_margins)},
  };
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(name + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError(name + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->second(key, val);
  }
  validate(c);
  return c;
}

// Key/value listing in the config file syntax, for provenance records
inline std::vector<std::pair<std::string, std::string>> config_pairs(const ScenarioConfig& c) {
  auto join = [](const auto& v) {
    std::ostringstream o;
    o.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) o << (i ? "," : "") << v[i];
    return o.str();
  };
  auto num = [](double x) {
    std::ostringstream o;
    o.precision(17);
    o << x;
    return o.str();
  };
  std::vector<std::string> inter;
  for (const auto& i : c.interferers) inter.push_back(num(i.azimuth_deg) + ":" + num(i.elevation_deg) + ":" + num(i.sir_db));
  return {{"geometry", c.geometry},
          {"carrier", num(c.carrier)},
          {"bandwidth", num(c.bandwidth)},
          {"azimuth_deg", num(c.azimuth_deg)},
          {"elevation_deg", num(c.elevation_deg)},
          {"interferers", join(inter)},
          {"snr_db", join(c.snr_db)},
          {"sir_db", join(c.sir_db)},
          {"snapshots", std::to_string(c.snapshots)},
          {"trials", std::to_string(c.trials)},
          {"seed", std::to_string(c.seed)},
          {"tolerance", num(c.tolerance)},
          {"margin", std::to_string(c.margin)},
          {"delta", num(c.delta)},
          {"signal", c.signal},
          {"tones", std::to_string(c.tones)},
          {"das_taps", join(c.das_taps)},
          {"subarrays", join(c.subarrays)},
          {"methods", join(c.methods)},
          {"encoder", c.encoder},
          {"encoder_dims", join(c.encoder_dims)},
          {"snapshot_margins", join(c.snapshot_margins)},
          {"buffer", std::to_string(c.buffer)},
          {"merge", join(c.merge)},
          {"packets", std::to_string(c.packets)},
          {"packet_margin", std::to_string(c.packet_margin)},
          {"warmup", std::to_string(c.warmup)},
          {"overlap_factor", num(c.overlap_factor)},
          {"margins", join(c.margins)},
          {"threads", std::to_string(c.threads)},
          {"stream_input", c.stream_input},
          {"measured_margin", std::to_string(c.measured_margin)},
          {"omega_t", join(c.omega_t)},
          {"sections", join(c.sections)},
          {"null_angles_deg", join(c.null_angles_deg)},
          {"merge_snapshots", std::to_string(c.merge_snapshots)},
          {"merge_packets", std::to_string(c.merge_packets)},
          {"merge_packet_margins", join(c.merge_packet_margins)},
          {"merge_margins", join(c.merge_margins)}};
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  return parse_config(f, path);
}

inline ScenarioConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

}  // namespace sbb
