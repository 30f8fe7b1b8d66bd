#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "adadelay/delay.hpp"
#include "adadelay/engine.hpp"
#include "adadelay/problems.hpp"
#include "adadelay/rng.hpp"

namespace adadelay {

enum class ServiceKind { exponential, deterministic, lognormal };

inline const char* service_kind_name(ServiceKind k) {
  switch (k) {
    case ServiceKind::exponential: return "exponential";
    case ServiceKind::deterministic: return "deterministic";
    case ServiceKind::lognormal: return "lognormal";
  }
  return "?";
}

struct ServiceTime {
  ServiceKind kind = ServiceKind::exponential;
  double mean = 1.0;
  double log_sd = 0.5;  // lognormal shape parameter

  double sample(RngStream& rng) const {
    switch (kind) {
      case ServiceKind::exponential:
        return rng.exponential(mean);
      case ServiceKind::deterministic:
        return mean;
      case ServiceKind::lognormal:
        return rng.lognormal(std::log(mean) - 0.5 * log_sd * log_sd, log_sd);
    }
    return mean;
  }
};

// One worker of the parameter-server loop: read a minibatch from storage,
// pull the working set, compute gradients, push. Only the compute phase is
// slowed for stragglers.
struct WorkerSpec {
  std::uint32_t worker_id = 0;
  ServiceTime compute;
  ServiceTime read;
  double slowdown_factor = 1.0;
  std::size_t minibatch_size = 1;

  void validate() const {
    if (!(compute.mean > 0)) throw std::invalid_argument("worker: compute time must be > 0");
    if (read.mean < 0) throw std::invalid_argument("worker: read time must be >= 0");
    if (slowdown_factor < 1.0) throw std::invalid_argument("worker: slowdown factor < 1");
    if (minibatch_size == 0) throw std::invalid_argument("worker: empty minibatch");
  }
};

inline std::vector<WorkerSpec> make_workers(std::uint32_t count, ServiceTime compute,
                                            ServiceTime read, std::size_t minibatch_size) {
  std::vector<WorkerSpec> out(count);
  for (std::uint32_t w = 0; w < count; ++w) {
    out[w] = WorkerSpec{w, compute, read, 1.0, minibatch_size};
  }
  return out;
}

// Slows floor(fraction * W) seeded-randomly chosen workers by a factor drawn
// uniformly from factor_set.
inline std::vector<WorkerSpec> inject_stragglers(std::vector<WorkerSpec> workers,
                                                 double fraction,
                                                 const std::vector<double>& factor_set,
                                                 std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0) {
    throw std::invalid_argument("inject_stragglers: fraction must be in [0,1]");
  }
  if (factor_set.empty()) throw std::invalid_argument("inject_stragglers: empty factor set");
  const std::size_t k =
      static_cast<std::size_t>(fraction * static_cast<double>(workers.size()));
  RngStream rng(derive_seed(seed, "straggler"));
  std::vector<std::size_t> order(workers.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_int(i)]);
  }
  for (std::size_t i = 0; i < k; ++i) {
    workers[order[i]].slowdown_factor = factor_set[rng.uniform_int(factor_set.size())];
  }
  return workers;
}

struct SimEventRow {
  double sim_time = 0.0;
  char kind = 'L';  // 'L' pull, 'P' push
  std::uint32_t worker = 0;
  std::uint64_t minibatch = 0;
  std::uint64_t server_t = 0;  // updates applied after handling the event
};

struct SimConfig {
  std::vector<WorkerSpec> workers;
  Objective objective;
  Projection projection;
  StepPolicyConfig policy;
  double L = 1.0;
  double alpha0 = 1.0;
  std::uint64_t T = 0;  // server updates to apply
  std::uint64_t seed = 0;
  DenseVec x1;
  double f_star = 0.0;
  int gap_every = 0;
  bool record_rows = false;
  bool keep_event_log = false;
  double stats_early_fraction = 0.1;
};

struct SimResult {
  RunRecord record;
  DelayStats stats;
  std::vector<std::uint64_t> taus;
  std::uint64_t pulls_started = 0;
  std::uint64_t pushes_applied = 0;
  std::vector<SimEventRow> event_log;
  std::size_t state_entries = 0;
  std::size_t touched_features = 0;
};

// Deterministic event-driven simulation. Delays are induced by the schedule:
// tau of a minibatch is the number of server updates applied between its
// pull and its push. Ties are broken (time, push-before-pull, worker, seq).
inline SimResult simulate(const SimConfig& cfg) {
  if (cfg.workers.empty()) throw std::invalid_argument("simulate: need at least one worker");
  for (const auto& w : cfg.workers) w.validate();
  if (cfg.x1.empty() || cfg.x1.size() != cfg.objective.dim()) {
    throw std::invalid_argument("simulate: bad start iterate");
  }

  struct Event {
    double time;
    int kind;  // 0 push, 1 pull
    std::uint32_t worker;
    std::uint64_t seq;
    bool operator>(const Event& o) const {
      if (time != o.time) return time > o.time;
      if (kind != o.kind) return kind > o.kind;
      if (worker != o.worker) return worker > o.worker;
      return seq > o.seq;
    }
  };
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> queue;

  auto policy = make_policy(cfg.policy);
  ServerState state(cfg.x1, cfg.projection, std::move(policy), cfg.L, cfg.alpha0,
                    /*history_capacity=*/1, /*track_cumsum=*/false);

  struct WorkerRt {
    RngStream rng;
    DelayedGradientMessage pending;
  };
  std::vector<WorkerRt> rt;
  rt.reserve(cfg.workers.size());
  for (const auto& w : cfg.workers) {
    rt.push_back(WorkerRt{RngStream(derive_seed(cfg.seed, "worker", w.worker_id)), {}});
  }

  const bool dataset_problem = cfg.objective.kind() != ObjectiveKind::quadratic_synthetic;
  const std::size_t n_rows =
      dataset_problem ? static_cast<std::size_t>(cfg.objective.n_rows()) : 0;

  SimResult result;
  result.record.seed = cfg.seed;
  result.record.T = cfg.T;
  result.record.L = cfg.L;
  result.record.alpha0 = cfg.alpha0;
  result.record.f_star = cfg.f_star;
  result.record.sum_gap_valid = cfg.gap_every == 1;
  result.taus.reserve(cfg.T);

  std::uint64_t seq = 0;
  std::uint64_t next_minibatch = 0;
  for (std::size_t i = 0; i < cfg.workers.size(); ++i) {
    queue.push(Event{cfg.workers[i].read.sample(rt[i].rng), 1,
                     static_cast<std::uint32_t>(i), seq++});
  }

  std::vector<std::size_t> batch;
  std::vector<std::uint64_t> features;
  while (!queue.empty() && result.pushes_applied < cfg.T) {
    const Event ev = queue.top();
    queue.pop();
    WorkerRt& wrt = rt[ev.worker];
    const WorkerSpec& spec = cfg.workers[ev.worker];
    if (ev.kind == 1) {
      // pull: snapshot the iterate, compute the gradient, schedule the push
      ++result.pulls_started;
      const std::uint64_t mb = next_minibatch++;
      if (dataset_problem) {
        batch.resize(spec.minibatch_size);
        for (auto& id : batch) id = static_cast<std::size_t>(wrt.rng.uniform_int(n_rows));
      }
      Vector g = cfg.objective.stochastic_gradient(state.iterate(), batch, wrt.rng);
      features.clear();
      g.for_each_entry([&](std::uint64_t j, double) { features.push_back(j); });
      const TimeIndex computed_at = state.register_pull(mb, features);
      wrt.pending = DelayedGradientMessage{std::move(g), computed_at, spec.worker_id, mb};
      const double service = spec.compute.sample(wrt.rng) * spec.slowdown_factor;
      queue.push(Event{ev.time + service, 0, ev.worker, seq++});
      if (cfg.keep_event_log) {
        result.event_log.push_back(
            {ev.time, 'L', spec.worker_id, mb, state.updates_applied()});
      }
    } else {
      const auto info = state.apply(wrt.pending);
      ++result.pushes_applied;
      result.taus.push_back(info.tau);
      double f_gap = std::numeric_limits<double>::quiet_NaN();
      if (cfg.gap_every == 1) {
        f_gap = cfg.objective.value(state.iterate()) - cfg.f_star;
        result.record.sum_gap += f_gap;
      }
      if (cfg.record_rows) {
        result.record.rows.push_back(
            {state.updates_applied(), info.tau, info.eta, info.alpha, f_gap});
      }
      if (cfg.keep_event_log) {
        result.event_log.push_back(
            {ev.time, 'P', spec.worker_id, wrt.pending.minibatch_id, state.updates_applied()});
      }
      // back to the read phase before the next pull
      queue.push(Event{ev.time + spec.read.sample(wrt.rng), 1, ev.worker, seq++});
    }
  }
  state.drop_inflight();

  result.record.tau_sum = state.tau_sum();
  result.record.policy_clamp_events = state.policy().clamp_events();
  if (result.pushes_applied >= 1) {
    result.record.averaged_iterate = state.averaged_iterate();
    result.record.final_avg_gap =
        cfg.objective.value(result.record.averaged_iterate) - cfg.f_star;
    result.record.final_gap = cfg.objective.value(state.iterate()) - cfg.f_star;
    result.stats = delay_stats(result.taus, cfg.stats_early_fraction);
  }
  result.state_entries = state.measured_state_entries();
  result.touched_features = state.policy().touched_features();
  return result;
}

inline void export_trace(const std::vector<std::uint64_t>& taus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file: " + path);
  for (auto tau : taus) out << tau << '\n';
}

inline void write_event_log(const std::vector<SimEventRow>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write event log: " + path);
  out << "sim_time,kind,worker,minibatch,server_t\n";
  for (const auto& row : log) {
    out << row.sim_time << ',' << row.kind << ',' << row.worker << ',' << row.minibatch
        << ',' << row.server_t << '\n';
  }
}

}  // namespace adadelay
