#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "adadelay/delay.hpp"
#include "adadelay/problems.hpp"
#include "adadelay/rng.hpp"
#include "adadelay/stepsize.hpp"
#include "adadelay/types.hpp"
#include "adadelay/vector.hpp"

namespace adadelay {

struct RunRecordRow {
  TimeIndex t = 0;
  std::uint64_t tau = 0;
  double eta = 0.0;
  double alpha = 0.0;
  double f_gap = std::numeric_limits<double>::quiet_NaN();
};

struct RunRecord {
  std::vector<RunRecordRow> rows;
  DenseVec averaged_iterate;  // empty when no updates were applied
  std::uint64_t seed = 0;
  std::string config_hash;
  std::uint64_t T = 0;
  double L = 1.0;
  double alpha0 = 1.0;
  double f_star = 0.0;
  bool sum_gap_valid = false;
  double sum_gap = 0.0;        // sum_t f(x(t+1)) - f*
  double final_avg_gap = 0.0;  // f(averaged iterate) - f*
  double final_gap = 0.0;      // f(x(T+1)) - f*
  std::uint64_t tau_sum = 0;
  std::uint64_t delay_clamp_events = 0;
  std::uint64_t policy_clamp_events = 0;
};

// Bounded window of recent iterates, indexed by absolute time. Slot t holds
// x(t); a lag beyond the window is a hard error rather than a stale read.
class IterateRing {
 public:
  IterateRing(std::size_t capacity, DenseVec x1)
      : cap_(std::max<std::size_t>(capacity, 1)), slots_(cap_) {
    slots_[1 % cap_] = std::move(x1);
    newest_ = 1;
  }

  void push(TimeIndex t, DenseVec x) {
    if (t != newest_ + 1) throw std::logic_error("iterate ring: out-of-order push");
    slots_[t % cap_] = std::move(x);
    newest_ = t;
  }

  const DenseVec& get(TimeIndex t) const {
    if (t > newest_ || newest_ - t >= cap_) {
      throw std::runtime_error("history ring: requested lag exceeds capacity");
    }
    return slots_[t % cap_];
  }

  std::size_t capacity() const { return cap_; }

 private:
  std::size_t cap_;
  std::vector<DenseVec> slots_;
  TimeIndex newest_ = 0;
};

// Server owning the iterate, the averaging accumulator, the step policy and
// the bounded iterate history. Updates are applied strictly serially; t is
// the index of the iterate currently held.
class ServerState {
 public:
  ServerState(DenseVec x1, Projection projection, std::unique_ptr<StepPolicy> policy,
              double L, double alpha0, std::size_t history_capacity,
              bool track_cumsum = false)
      : projection_(std::move(projection)),
        policy_(std::move(policy)),
        L_(L),
        alpha0_(alpha0),
        x_(std::move(x1)),
        xbar_acc_(x_.size(), 0.0),
        ring_(history_capacity, x_) {
    if (!(L_ > 0)) throw std::invalid_argument("server: L must be positive");
    if (!(alpha0_ > 0)) throw std::invalid_argument("server: alpha0 must be positive");
    projection_.apply(x_);
    if (track_cumsum) {
      cumsum_ring_ = std::make_unique<IterateRing>(history_capacity, DenseVec(x_.size(), 0.0));
    }
  }

  struct ApplyInfo {
    std::uint64_t tau = 0;
    double eta = 0.0;
    double alpha = 0.0;
  };

  TimeIndex time() const { return t_; }
  std::uint64_t updates_applied() const { return t_ - 1; }
  const DenseVec& iterate() const { return x_; }
  const DenseVec& iterate_at(TimeIndex s) const { return ring_.get(s); }
  const Projection& projection() const { return projection_; }
  StepPolicy& policy() { return *policy_; }
  const StepPolicy& policy() const { return *policy_; }
  std::uint64_t tau_sum() const { return tau_sum_; }

  DenseVec averaged_iterate() const {
    if (t_ == 1) throw std::runtime_error("averaged iterate undefined before any update");
    DenseVec out(xbar_acc_.size());
    const double inv = 1.0 / static_cast<double>(t_ - 1);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xbar_acc_[i] * inv;
    return out;
  }

  // Pull for the parameter-server protocol: records the server time, and for
  // AdaptiveRevision snapshots the per-feature cumulative gradient sums.
  TimeIndex register_pull(std::uint64_t minibatch_id,
                          const std::vector<std::uint64_t>& features) {
    InFlight rec;
    rec.computed_at = t_;
    if (policy_->needs_g_bak()) {
      rec.snaps.reserve(features.size());
      for (std::uint64_t j : features) {
        const bool stored = policy_->store_pull_snapshot(j, minibatch_id);
        rec.snaps.push_back({j, stored ? 0.0 : policy_->cumulative_gradient(j), stored});
      }
    }
    inflight_.emplace(minibatch_id, std::move(rec));
    return t_;
  }

  ApplyInfo apply(const DelayedGradientMessage& msg) {
    if (msg.computed_at > t_) {
      throw std::runtime_error("causality violation: gradient computed at t=" +
                               std::to_string(msg.computed_at) + " applied at t=" +
                               std::to_string(t_));
    }
    if (msg.computed_at < 1) throw std::invalid_argument("computed_at must be >= 1");
    const std::uint64_t tau = t_ - msg.computed_at;

    std::unordered_map<std::uint64_t, double> g_bak;
    if (policy_->needs_g_bak()) {
      g_bak = resolve_g_bak(msg, tau);
    } else {
      inflight_.erase(msg.minibatch_id);
    }

    ApplyInfo info;
    info.tau = tau;
    if (!policy_->per_coordinate()) {
      info.eta = policy_->eta(t_, tau);
      info.alpha = alpha0_ / (L_ + info.eta);
      msg.gradient.for_each_entry([&](std::uint64_t j, double v) {
        if (j >= x_.size()) throw std::invalid_argument("gradient index out of range");
        x_[j] -= info.alpha * v;
      });
    } else {
      double max_eta = 0.0;
      msg.gradient.for_each_entry([&](std::uint64_t j, double v) {
        if (j >= x_.size()) throw std::invalid_argument("gradient index out of range");
        if (v == 0.0) return;
        double gb = 0.0;
        if (!g_bak.empty()) {
          auto it = g_bak.find(j);
          if (it != g_bak.end()) gb = it->second;
        }
        const double eta_j = policy_->eta_coord(j, t_, tau, v, gb);
        max_eta = std::max(max_eta, eta_j);
        x_[j] -= alpha0_ / (L_ + eta_j) * v;
      });
      info.eta = max_eta;  // representative pair: the smallest step used
      info.alpha = alpha0_ / (L_ + max_eta);
    }
    projection_.apply(x_);

    if (cumsum_ring_) {
      DenseVec cum = cumsum_ring_->get(t_);
      msg.gradient.for_each_entry([&](std::uint64_t j, double v) { cum[j] += v; });
      cumsum_ring_->push(t_ + 1, std::move(cum));
    }

    ring_.push(t_ + 1, x_);
    for (std::size_t i = 0; i < x_.size(); ++i) xbar_acc_[i] += x_[i];
    tau_sum_ += tau;
    t_ += 1;
    return info;
  }

  // Per-feature value slots currently held, counting one weight per touched
  // feature as a sparse parameter server would (map keys and in-flight
  // message payload are not value slots).
  std::size_t measured_state_entries() const {
    return policy_->touched_features() + policy_->numeric_entries();
  }

  void drop_inflight() { inflight_.clear(); }
  std::size_t inflight_count() const { return inflight_.size(); }

 private:
  struct Snap {
    std::uint64_t j = 0;
    double cookie = 0.0;
    bool stored = false;
  };
  struct InFlight {
    TimeIndex computed_at = 1;
    std::vector<Snap> snaps;
  };

  std::unordered_map<std::uint64_t, double> resolve_g_bak(const DelayedGradientMessage& msg,
                                                          std::uint64_t tau) {
    std::unordered_map<std::uint64_t, double> g_bak;
    auto it = inflight_.find(msg.minibatch_id);
    if (it != inflight_.end()) {
      for (const Snap& s : it->second.snaps) {
        const double at_pull =
            policy_->take_pull_snapshot(s.j, msg.minibatch_id, s.stored, s.cookie);
        g_bak[s.j] = policy_->cumulative_gradient(s.j) - at_pull;
      }
      inflight_.erase(it);
      return g_bak;
    }
    // sampled-delay mode: reconstruct from the cumulative-sum window
    if (!cumsum_ring_) throw std::logic_error("adaptive revision needs pull records");
    const DenseVec& now = cumsum_ring_->get(t_);
    const DenseVec& then = cumsum_ring_->get(t_ - tau);
    msg.gradient.for_each_entry(
        [&](std::uint64_t j, double) { g_bak[j] = now[j] - then[j]; });
    return g_bak;
  }

  Projection projection_;
  std::unique_ptr<StepPolicy> policy_;
  double L_;
  double alpha0_;
  DenseVec x_;
  DenseVec xbar_acc_;
  IterateRing ring_;
  std::unique_ptr<IterateRing> cumsum_ring_;
  std::unordered_map<std::uint64_t, InFlight> inflight_;
  TimeIndex t_ = 1;
  std::uint64_t tau_sum_ = 0;
};

inline ServerState::ApplyInfo apply_update(ServerState& state,
                                           const DelayedGradientMessage& msg) {
  return state.apply(msg);
}

inline DenseVec averaged_iterate(const ServerState& state) {
  return state.averaged_iterate();
}

struct EngineConfig {
  Objective objective;
  Projection projection;
  StepPolicyConfig policy;
  DelayModelSpec delay;
  double L = 1.0;
  double alpha0 = 1.0;
  std::uint64_t T = 0;
  std::uint64_t seed = 0;
  std::size_t minibatch = 1;
  DenseVec x1;
  double f_star = 0.0;
  int gap_every = 1;  // 1: per-step gap rows; 0: final gaps only
  bool record_rows = true;
  std::size_t history_capacity = 0;  // 0: sized from the delay model
};

// Full iterate/gradient log of one run, for the residual diagnostics.
// x[k] = x(k+1), so x.front() is x(1); g[t-1] is the gradient applied at t.
struct Trajectory {
  std::vector<DenseVec> x;
  std::vector<DenseVec> g;
  std::vector<std::uint64_t> tau;
  std::vector<double> eta;
  std::vector<double> alpha;
};

// Sampled-delay run: at each server step the delay model picks tau, the
// oracle is evaluated at the lagged iterate x(t - tau), and the update is
// applied with the delay-sensitive step alpha0 / (L + eta(t, tau)).
inline RunRecord run(const EngineConfig& cfg, Trajectory* traj = nullptr) {
  if (cfg.x1.empty()) throw std::invalid_argument("run: x1 must be provided");
  if (cfg.x1.size() != cfg.objective.dim()) {
    throw std::invalid_argument("run: x1 dimension mismatch");
  }
  if (cfg.delay.kind == DelayKind::induced) {
    throw std::invalid_argument("run: induced delays require the simulator");
  }
  DelayProcess delay(cfg.delay);
  const std::size_t cap =
      cfg.history_capacity ? cfg.history_capacity : delay.history_capacity();
  auto policy = make_policy(cfg.policy);
  const bool track_cumsum = policy->needs_g_bak();
  ServerState state(cfg.x1, cfg.projection, std::move(policy), cfg.L, cfg.alpha0, cap,
                    track_cumsum);

  RngStream oracle_rng(derive_seed(cfg.seed, "oracle"));
  RngStream delay_rng(derive_seed(cfg.seed, "delay"));
  RngStream batch_rng(derive_seed(cfg.seed, "batch"));

  const bool dataset_problem = cfg.objective.kind() != ObjectiveKind::quadratic_synthetic;
  const std::size_t n_rows =
      dataset_problem ? static_cast<std::size_t>(cfg.objective.n_rows()) : 0;

  RunRecord rec;
  rec.seed = cfg.seed;
  rec.T = cfg.T;
  rec.L = cfg.L;
  rec.alpha0 = cfg.alpha0;
  rec.f_star = cfg.f_star;
  rec.sum_gap_valid = cfg.gap_every == 1;
  if (cfg.record_rows) rec.rows.reserve(cfg.T);

  if (traj) {
    traj->x.clear();
    traj->g.clear();
    traj->tau.clear();
    traj->eta.clear();
    traj->alpha.clear();
    traj->x.push_back(state.iterate());
  }

  std::vector<std::size_t> batch(dataset_problem ? cfg.minibatch : 0);
  for (TimeIndex t = 1; t <= cfg.T; ++t) {
    const DelaySample d = delay.sample(t, delay_rng);
    const DenseVec& x_src = state.iterate_at(d.source_time);
    if (dataset_problem) {
      for (auto& id : batch) id = static_cast<std::size_t>(batch_rng.uniform_int(n_rows));
    }
    DelayedGradientMessage msg;
    msg.gradient = cfg.objective.stochastic_gradient(x_src, batch, oracle_rng);
    msg.computed_at = d.source_time;
    msg.minibatch_id = t;
    const auto info = state.apply(msg);

    double f_gap = std::numeric_limits<double>::quiet_NaN();
    if (cfg.gap_every == 1) {
      f_gap = cfg.objective.value(state.iterate()) - cfg.f_star;
      rec.sum_gap += f_gap;
    }
    if (cfg.record_rows) rec.rows.push_back({t, info.tau, info.eta, info.alpha, f_gap});
    if (traj) {
      traj->x.push_back(state.iterate());
      traj->g.push_back(msg.gradient.to_dense(cfg.x1.size()));
      traj->tau.push_back(info.tau);
      traj->eta.push_back(info.eta);
      traj->alpha.push_back(info.alpha);
    }
  }

  rec.tau_sum = state.tau_sum();
  rec.delay_clamp_events = delay.clamp_count();
  rec.policy_clamp_events = state.policy().clamp_events();
  if (cfg.T >= 1) {
    rec.averaged_iterate = state.averaged_iterate();
    rec.final_avg_gap = cfg.objective.value(rec.averaged_iterate) - cfg.f_star;
    rec.final_gap = cfg.objective.value(state.iterate()) - cfg.f_star;
  }
  return rec;
}

}  // namespace adadelay
