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
#include <cmath>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sbb/common.hpp"
#include "sbb/forward.hpp"
#include "sbb/slepian.hpp"

namespace sbb {

// Smooth rising cutoff on [-eps, eps] with rise(s)^2 + rise(-s)^2 = 1
struct FoldWindow {
  double eps = 0.0;

  double rise(double s) const {
    if (eps <= 0.0) return s >= 0.0 ? 1.0 : 0.0;
    double x = std::clamp(s / eps, -1.0, 1.0);
    for (int i = 0; i < 3; ++i) x = std::sin(0.5 * pi * x);
    return std::sin(0.25 * pi * (1.0 + x));
  }
};

// Orthonormal lapped basis for the core [0, L]: Slepian functions on the
// extended interval [-eps, L + eps] are folded into the core, the best
// D-dimensional subspace of the folded (eigenvalue-weighted) family is kept,
// and the result is unfolded back onto the extended support. Neighbouring
// packets built this way with the same window are orthogonal, and eps = 0
// gives back the plain Slepian basis of the core.
class LappedBasis {
 public:
  LappedBasis(double omega, double length, double eps, Eigen::Index d) : omega_(omega), length_(length), win_{eps} {
    if (!(length > 0.0)) throw ConfigError("packet core length must be positive");
    if (eps < 0.0 || 2.0 * eps > length) throw ConfigError("fold overlap must fit inside the packet core");
    ext_ = std::make_shared<SlepianBasis>(build_basis(omega, length + 2.0 * eps, 1e-12, 16));
    const Eigen::Index nf = ext_->kept();
    if (d < 1 || d > nf) throw ConfigError("packet dimension " + std::to_string(d) + " outside 1.." + std::to_string(nf));
    VecR t, w;
    core_quadrature(t, w);
    MatR f = fold_values(t);
    for (Eigen::Index j = 0; j < nf; ++j) f.col(j) *= std::sqrt(ext_->eigenvalues(j));
    f = w.cwiseSqrt().asDiagonal() * f;
    Eigen::BDCSVD<MatR> svd(f, Eigen::ComputeThinV);
    const VecR s = svd.singularValues();
    if (s(d - 1) <= 1e-14 * s(0)) throw NumericalError("lapped packet basis is rank deficient at dimension " + std::to_string(d));
    coef_ = MatR(nf, d);
    for (Eigen::Index k = 0; k < d; ++k)
      coef_.col(k) = svd.matrixV().col(k).cwiseProduct(ext_->eigenvalues.head(nf).cwiseSqrt()) / s(k);
    for (Eigen::Index k = 0; k < d; ++k)
      if (coef_.col(k).sum() < 0.0) coef_.col(k) *= -1.0;
    energy_ = s.head(d).array().square();
  }

  Eigen::Index dim() const { return coef_.cols(); }
  double length() const { return length_; }
  double eps() const { return win_.eps; }
  double bandwidth() const { return omega_; }
  const VecR& captured_energy() const { return energy_; }  // per-function share of the folded process energy

  // Folded Slepian family (U f_j)(t) for t in the core
  MatR fold_values(const VecR& t) const {
    const double e = win_.eps, l = length_;
    const Eigen::Index n = t.size();
    VecR direct(n), mirror(n), cd(n), cm(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = std::clamp(t(i), 0.0, l);
      direct(i) = p;
      mirror(i) = p;
      cd(i) = 1.0;
      cm(i) = 0.0;
      if (e > 0.0 && p < e) {
        cd(i) = win_.rise(p);
        cm(i) = win_.rise(-p);
        mirror(i) = -p;
      } else if (e > 0.0 && p > l - e) {
        const double s = l - p;
        cd(i) = win_.rise(s);
        cm(i) = -win_.rise(-s);
        mirror(i) = l + s;
      }
    }
    const MatR fd = ext_eval(direct);
    const MatR fm = ext_eval(mirror);
    return cd.asDiagonal() * fd + cm.asDiagonal() * fm;
  }

  // Core functions e_k(t), t in [0, L]
  MatR core_values(const VecR& t) const { return fold_values(t) * coef_; }

  // Packet functions psi_k(t) on the extended support, zero elsewhere
  MatR values(const VecR& t) const {
    const double e = win_.eps, l = length_;
    const Eigen::Index n = t.size();
    VecR p(n), c(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = t(i);
      p(i) = std::clamp(x, 0.0, l);
      c(i) = 1.0;
      if (x <= -e || x >= l + e || (e == 0.0 && (x < 0.0 || x > l))) {
        c(i) = 0.0;
      } else if (x < 0.0) {
        c(i) = win_.rise(x);
        p(i) = -x;
      } else if (x < e) {
        c(i) = win_.rise(x);
      } else if (x > l) {
        c(i) = -win_.rise(l - x);
        p(i) = 2.0 * l - x;
      } else if (x > l - e) {
        c(i) = win_.rise(l - x);
      }
    }
    return c.asDiagonal() * core_values(p);
  }

  // Composite Gauss rule on the core with breakpoints at the fold edges
  void core_quadrature(VecR& t, VecR& w) const {
    const double e = win_.eps, l = length_;
    std::vector<double> br{0.0};
    if (e > 0.0) br.push_back(e);
    if (e > 0.0) br.push_back(l - e);
    br.push_back(l);
    std::sort(br.begin(), br.end());
    detail::composite_gauss(br, panel_width(), 16, t, w);
  }

  double panel_width() const {
    double h = 1.0 / omega_;
    if (win_.eps > 0.0) h = std::min(h, 0.5 * win_.eps);
    return h;
  }

 private:
  MatR ext_eval(const VecR& t) const {
    const VecR u = (t.array() + win_.eps).cwiseMax(0.0).cwiseMin(ext_->interval_length);
    return detail::series_values(ext_->interval_length, ext_->series, u);
  }

  double omega_;
  double length_;
  FoldWindow win_;
  std::shared_ptr<SlepianBasis> ext_;
  MatR coef_;
  VecR energy_;
};

// Quadrature covering packets [first, last] of a lapped family with core
// length L, breakpoints at every core edge and fold edge
inline void lapped_quadrature(double length, double eps, int first, int last, double h, VecR& t, VecR& w) {
  std::vector<double> br;
  for (int k = first; k <= last + 1; ++k) {
    const double a = k * length;
    br.push_back(a);
    if (eps > 0.0) {
      br.push_back(a - eps);
      br.push_back(a + eps);
    }
  }
  std::sort(br.begin(), br.end());
  br.erase(std::unique(br.begin(), br.end()), br.end());
  detail::composite_gauss(br, h, 16, t, w);
}

// Packets have cores [k L, (k+1) L] with L = N T_s. Batch k holds N snapshots
// whose delayed samples are centred on the packet edge k L, so it touches
// packets k-1 and k only.
struct PacketBasis {
  std::shared_ptr<const LappedBasis> lapped;
  double stride = 0.0;         // L = N T_s
  double overlap = 0.0;        // 2 eps
  double first_time = 0.0;     // array-centre time of snapshot 0 of batch 0
  Eigen::Index elements = 0;
  Eigen::Index batch = 0;      // N
  MatC a;                      // MN x D, batch k against packet k
  MatC b;                      // MN x D, batch k against packet k-1
  MatC e;                      // A^H B
  VecR offsets;                // delayed sample times of batch 0
  VecC phases;

  Eigen::Index dim() const { return a.cols(); }
  double batch_time(Eigen::Index k, Eigen::Index n) const {
    return first_time + static_cast<double>(k * batch + n) * stride / static_cast<double>(batch);
  }
};

inline Eigen::Index default_packet_dim(double omega, double stride, double overlap, int margin) {
  return static_cast<Eigen::Index>(std::ceil(2.0 * omega * (stride + overlap) - 1e-9)) + margin;
}

// Packet basis for a scenario whose plan holds one batch of N snapshots.
// overlap < 0 selects the aperture span T_1.
inline PacketBasis build_packet_basis(const ArrayScenario& s, Eigen::Index d, double overlap = -1.0) {
  const double ts = s.plan.sample_interval;
  const Eigen::Index n = s.snapshots();
  const double t1 = s.t1();
  if (overlap < 0.0) overlap = t1;
  const double stride = static_cast<double>(n) * ts;
  const double eps = 0.5 * overlap;
  // the batch span must stay clear of the fold zones of packets k-2 and k+1
  const double need = t1 + overlap - (static_cast<double>(n) + 1.0) * ts;
  if (need > 1e-9 * ts || overlap > stride) {
    const double nmin = (t1 + overlap) / ts - 1.0;
    throw ConfigError("batch of " + std::to_string(n) + " snapshots is too short for aperture " + std::to_string(t1) +
                      " s with overlap " + std::to_string(overlap) + " s; use at least " +
                      std::to_string(static_cast<long long>(std::ceil(std::max(nmin, 2.0 * eps / ts) - 1e-9))) +
                      " snapshots per batch");
  }
  if (overlap + 1e-9 * ts < t1) throw ConfigError("packet overlap must be at least the aperture span T_1");
  PacketBasis pb;
  pb.lapped = std::make_shared<LappedBasis>(s.bandwidth, stride, eps, d);
  pb.stride = stride;
  pb.overlap = overlap;
  pb.elements = s.elements();
  pb.batch = n;
  const VecR tau = s.delays();
  const double centre = 0.5 * (tau.maxCoeff() + tau.minCoeff());
  pb.first_time = -0.5 * static_cast<double>(n - 1) * ts + centre;
  pb.offsets.resize(s.elements() * n);
  pb.phases.resize(s.elements() * n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < s.elements(); ++i) {
      pb.offsets(j * s.elements() + i) = pb.first_time + static_cast<double>(j) * ts - tau(i);
      pb.phases(j * s.elements() + i) = std::polar(1.0, -2.0 * pi * s.geometry.carrier * tau(i));
    }
  pb.a = pb.phases.asDiagonal() * pb.lapped->values(pb.offsets).cast<cplx>();
  pb.b = pb.phases.asDiagonal() * pb.lapped->values(pb.offsets.array() + stride).cast<cplx>();
  pb.e = pb.a.adjoint() * pb.b;
  return pb;
}

struct StreamCounters {
  std::size_t large_matvecs = 0;  // D x MN products
  std::size_t small_matvecs = 0;  // D x D products and triangular solves
  std::size_t steps = 0;
};

struct StreamOutput {
  Eigen::Index newest = 0;
  std::vector<std::pair<Eigen::Index, VecC>> finalized;  // packets that left the buffer
};

// Streaming solver for the chained problem
//   min sum_k |y_k - A alpha_k - B alpha_{k-1}|^2 + delta sum_k |alpha_k|^2
// by the forward block recursion with a bounded backtracking buffer.
class PacketStream {
 public:
  PacketStream(MatC a, MatC b, double delta = 0.0, int buffer = 5)
      : a_(std::move(a)), b_(std::move(b)), delta_(delta), buffer_(buffer) {
    if (a_.rows() != b_.rows() || a_.cols() != b_.cols()) throw ConfigError("A and B blocks must have equal shapes");
    if (buffer_ < 1) throw ConfigError("buffer length must be at least 1");
    if (delta_ < 0.0) throw ConfigError("ridge parameter must be non-negative");
    if (delta_ == 0.0) {
      // The recursion works on normal equations, which square the condition
      // number, so the fallback ridge engages earlier than in the batch solver.
      const VecR sv = two_packet_system(a_, b_).bdcSvd().singularValues();
      const double smax = sv(0), smin = sv(sv.size() - 1);
      if (!(smin > 0.0) || smax / smin > 1e7) {
        delta_ = 1e-8 * smax * smax;
        ill_conditioned_ = true;
      }
    }
    e_ = a_.adjoint() * b_;
    aha_ = a_.adjoint() * a_;
    aha_.diagonal().array() += delta_;
    q0_ = aha_ + b_.adjoint() * b_;
    q0_ = 0.5 * (q0_ + q0_.adjoint()).eval();
  }

  static PacketStream from_basis(const PacketBasis& pb, double delta = 0.0, int buffer = 5) {
    return PacketStream(pb.a, pb.b, delta, buffer);
  }

  // Measurement-domain variant: the same encoder Phi is applied to every batch
  static PacketStream measured(const PacketBasis& pb, const MatC& phi, double delta = 0.0, int buffer = 5) {
    if (phi.cols() != pb.a.rows())
      throw SupportError("encoder spans " + std::to_string(phi.cols()) + " samples but a batch has " +
                         std::to_string(pb.a.rows()) + "; each measurement may only touch one batch");
    return PacketStream(phi * pb.a, phi * pb.b, delta, buffer);
  }

  // [A 0; B A]: two batches where the newest packet is seen through A only.
  // Every Schur complement the recursion factors is at least as well
  // conditioned as this system.
  static MatC two_packet_system(const MatC& a, const MatC& b) {
    const Eigen::Index r = a.rows(), d = a.cols();
    MatC s = MatC::Zero(2 * r, 2 * d);
    s.block(0, 0, r, d) = a;
    s.block(r, 0, r, d) = b;
    s.block(r, d, r, d) = a;
    return s;
  }

  double ridge() const { return delta_; }
  bool ill_conditioned() const { return ill_conditioned_; }
  Eigen::Index dim() const { return a_.cols(); }
  Eigen::Index rows() const { return a_.rows(); }
  int buffer_length() const { return buffer_; }
  const MatC& q0() const { return q0_; }
  const MatC& q_current() const { return q_; }
  const MatC& coupling() const { return e_; }
  const StreamCounters& counters() const { return counters_; }
  const std::vector<double>& q_increments() const { return dq_; }
  bool steady() const { return steady_; }

  // Iterate the Q/U recursion only until successive Q differ by less than tol
  // (Frobenius); later steps reuse the converged factorisations.
  void precompute_steady_state(double tol = 1e-12) {
    precompute_ = true;
    tol_ = tol;
  }

  StreamOutput init(const VecC& y0, const VecC& y1) {
    check(y0);
    check(y1);
    started_ = true;
    k_ = 0;
    steady_ = false;
    dq_.clear();
    hist_.clear();
    est_.clear();
    const VecC ahy0 = matvec(a_, y0);
    const VecC bhy1 = matvec(b_, y1);
    q_ = q0_;
    auto f = std::make_shared<Eigen::LLT<MatC>>(factor(q_, 0));
    auto u = std::make_shared<MatC>(f->solve(e_.adjoint()));
    hist_.push_back({0, u, f->solve(ahy0 + bhy1)});
    counters_.small_matvecs += 1;
    qf_ = f;
    ahy_prev_ = matvec(a_, y1);
    return finish(true);
  }

  StreamOutput step(const VecC& y) {
    if (!started_) throw ConfigError("stream step called before init");
    check(y);
    ++k_;
    const VecC bhy = matvec(b_, y);
    const VecC ahy = matvec(a_, y);
    const History& prev = hist_.back();
    std::shared_ptr<MatC> u;
    if (steady_) {
      u = prev.u;
    } else {
      MatC qk = q0_ - e_ * (*prev.u);
      qk = 0.5 * (qk + qk.adjoint()).eval();
      dq_.push_back((qk - q_).norm());
      q_ = std::move(qk);
      qf_ = std::make_shared<Eigen::LLT<MatC>>(factor(q_, k_));
      u = std::make_shared<MatC>(qf_->solve(e_.adjoint()));
      if (precompute_ && dq_.back() < tol_) steady_ = true;
    }
    const VecC v = qf_->solve(ahy_prev_ + bhy - e_ * prev.v);
    counters_.small_matvecs += 2;
    hist_.push_back({k_, u, v});
    while (static_cast<int>(hist_.size()) > buffer_) hist_.pop_front();
    ahy_prev_ = ahy;
    return finish(false);
  }

  // Packets still in the buffer, oldest first
  const std::deque<std::pair<Eigen::Index, VecC>>& buffered() const { return est_; }

  // Emit everything left in the buffer at the end of a stream
  std::vector<std::pair<Eigen::Index, VecC>> flush() {
    std::vector<std::pair<Eigen::Index, VecC>> out(est_.begin(), est_.end());
    est_.clear();
    return out;
  }

 private:
  struct History {
    Eigen::Index index;
    std::shared_ptr<MatC> u;
    VecC v;
  };

  Eigen::LLT<MatC> factor(const MatC& q, Eigen::Index step) const {
    Eigen::LLT<MatC> f(q);
    if (f.info() != Eigen::Success)
      throw NumericalError("streaming recursion lost positive definiteness at step " + std::to_string(step) +
                           (delta_ == 0.0 ? "; try a positive ridge delta" : ""));
    return f;
  }

  void check(const VecC& y) const {
    if (y.size() != a_.rows())
      throw ConfigError("batch length " + std::to_string(y.size()) + " does not match " + std::to_string(a_.rows()));
  }

  VecC matvec(const MatC& m, const VecC& x) {
    ++counters_.large_matvecs;
    return m.adjoint() * x;
  }

  // Newest packet K+1 from the last recursion state, then backtracking
  // alpha_l = v_l - U_l alpha_{l+1} over the buffer.
  StreamOutput finish(bool first) {
    ++counters_.steps;
    const History& last = hist_.back();
    if (!newest_ || !newest_steady_) {
      MatC m = aha_ - e_ * (*last.u);
      m = 0.5 * (m + m.adjoint()).eval();
      newest_ = std::make_shared<Eigen::LLT<MatC>>(factor(m, k_ + 1));
      newest_steady_ = steady_;
    }
    StreamOutput out;
    out.newest = k_ + 1;
    const Eigen::Index lo = first ? 0 : std::max<Eigen::Index>(0, k_ + 2 - buffer_);
    std::deque<std::pair<Eigen::Index, VecC>> next;
    VecC cur = newest_->solve(ahy_prev_ - e_ * last.v);
    counters_.small_matvecs += 2;
    next.emplace_front(k_ + 1, cur);
    for (auto h = hist_.rbegin(); h != hist_.rend() && h->index >= lo; ++h) {
      cur = h->v - (*h->u) * cur;
      counters_.small_matvecs += 1;
      next.emplace_front(h->index, cur);
    }
    for (auto& p : est_)
      if (p.first < next.front().first) out.finalized.push_back(p);
    while (static_cast<Eigen::Index>(next.size()) > buffer_) {
      out.finalized.push_back(next.front());
      next.pop_front();
    }
    est_ = std::move(next);
    return out;
  }

  MatC a_, b_, e_, aha_, q0_, q_;
  double delta_;
  bool ill_conditioned_ = false;
  int buffer_;
  bool started_ = false;
  Eigen::Index k_ = 0;
  VecC ahy_prev_;
  std::deque<History> hist_;
  std::deque<std::pair<Eigen::Index, VecC>> est_;
  std::shared_ptr<Eigen::LLT<MatC>> qf_, newest_;
  bool newest_steady_ = false;
  bool precompute_ = false, steady_ = false;
  double tol_ = 1e-12;
  StreamCounters counters_;
  std::vector<double> dq_;
};

// Merging B' consecutive packets onto the lapped basis of their union
struct PacketMerge {
  std::shared_ptr<const LappedBasis> merged;
  int count = 0;  // B'
  MatR g;         // D' x B'D, <psi'_d, psi_{k,j}>
  Eigen::Index packet_dim = 0;

  Eigen::Index dim() const { return g.rows(); }

  VecC project(const std::vector<VecC>& alphas) const {
    if (static_cast<int>(alphas.size()) != count) throw ConfigError("merge expects " + std::to_string(count) + " packets");
    VecC stacked(g.cols());
    for (int k = 0; k < count; ++k) stacked.segment(k * packet_dim, packet_dim) = alphas[k];
    return g.cast<cplx>() * stacked;
  }
};

inline PacketMerge build_merge(const LappedBasis& packet, std::shared_ptr<const LappedBasis> merged, int count) {
  if (count < 1) throw ConfigError("merge count must be at least 1");
  if (std::abs(merged->length() - count * packet.length()) > 1e-9 * merged->length() || merged->eps() != packet.eps())
    throw ConfigError("merged basis does not cover the packets being merged");
  PacketMerge m;
  m.count = count;
  m.packet_dim = packet.dim();
  m.merged = std::move(merged);
  VecR t, w;
  lapped_quadrature(packet.length(), packet.eps(), 0, count - 1, packet.panel_width(), t, w);
  const MatR pm = w.asDiagonal() * m.merged->values(t);
  m.g.resize(m.merged->dim(), count * packet.dim());
  for (int k = 0; k < count; ++k)
    m.g.middleCols(k * packet.dim(), packet.dim()) = pm.transpose() * packet.values(t.array() - k * packet.length());
  return m;
}

inline PacketMerge build_merge(const LappedBasis& packet, int count, Eigen::Index merged_dim) {
  return build_merge(packet, std::make_shared<LappedBasis>(packet.bandwidth(), count * packet.length(), packet.eps(), merged_dim),
                     count);
}

// Low-rank form: P_{S'} restricted to S is approximated by I - W W^H in packet
// coordinates, W spanning the directions of S dropped by the merge.
struct LowRankMerge {
  MatR w;  // B'D x (B'D - D')
  double error = 0.0;

  VecC apply(const VecC& stacked) const { return stacked - w.cast<cplx>() * (w.transpose().cast<cplx>() * stacked); }
};

inline LowRankMerge low_rank_merge(const PacketMerge& m) {
  const MatR gram = m.g.transpose() * m.g;
  Eigen::SelfAdjointEigenSolver<MatR> es(gram);
  const Eigen::Index n = gram.rows();
  const Eigen::Index drop = std::max<Eigen::Index>(0, n - m.dim());
  LowRankMerge lr;
  lr.w = es.eigenvectors().leftCols(drop);
  // |V' G - V_S (I - W W^T)|_F / |G|_F with V', V_S orthonormal and V'^T V_S = G
  const MatR p = MatR::Identity(n, n) - lr.w * lr.w.transpose();
  const double gg = m.g.squaredNorm();
  const double cross = (m.g.transpose() * m.g * p).trace();
  const double err2 = std::max(0.0, gg - 2.0 * cross + p.trace());
  lr.error = std::sqrt(err2 / gg);
  return lr;
}

}  // namespace sbb
