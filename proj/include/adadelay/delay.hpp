#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "adadelay/rng.hpp"
#include "adadelay/stats.hpp"
#include "adadelay/types.hpp"

namespace adadelay {

enum class DelayKind {
  uniform,             // tau ~ U{0..min(2*tau_bar, t-1)}
  scaled,              // tau < theta*t, truncated geometric with bounded moments
  truncated_gaussian,  // discrete Gaussian profile on {0..min(cap, t-1)}
  trace,               // deterministic replay of a recorded sequence
  induced,             // delays come from the simulator schedule, never sampled
};

inline const char* delay_kind_name(DelayKind k) {
  switch (k) {
    case DelayKind::uniform: return "uniform";
    case DelayKind::scaled: return "scaled";
    case DelayKind::truncated_gaussian: return "gaussian";
    case DelayKind::trace: return "trace";
    case DelayKind::induced: return "induced";
  }
  return "?";
}

struct DelayModelSpec {
  DelayKind kind = DelayKind::uniform;
  double tau_bar = 0.0;       // uniform: half-width; scaled: asymptotic target mean
  double theta = 0.5;         // scaled: hard bound tau_t < theta*t
  std::uint64_t cap = 64;     // scaled / gaussian: hard support cap
  double gauss_mean = 0.0;
  double gauss_std = 1.0;
  std::vector<std::uint64_t> trace;

  void validate() const {
    switch (kind) {
      case DelayKind::uniform:
        if (tau_bar < 0) throw std::invalid_argument("uniform delay: tau_bar < 0");
        break;
      case DelayKind::scaled:
        if (!(theta > 0.0 && theta < 1.0)) {
          throw std::invalid_argument("scaled delay: theta must be in (0,1)");
        }
        if (tau_bar < 0) throw std::invalid_argument("scaled delay: tau_bar < 0");
        if (cap == 0) throw std::invalid_argument("scaled delay: cap must be >= 1");
        break;
      case DelayKind::truncated_gaussian:
        if (!(gauss_std > 0)) throw std::invalid_argument("gaussian delay: std must be > 0");
        break;
      case DelayKind::trace:
        break;
      case DelayKind::induced:
        break;
    }
  }
};

// Reads a delay trace: one nonnegative integer per line.
inline std::vector<std::uint64_t> read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);
  std::vector<std::uint64_t> out;
  std::string line;
  std::uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(line, &pos);
    } catch (const std::exception&) {
      throw std::runtime_error("trace line " + std::to_string(line_no) + ": not an integer");
    }
    if (pos != line.size()) {
      throw std::runtime_error("trace line " + std::to_string(line_no) + ": not an integer");
    }
    if (v < 0) {
      throw std::runtime_error("trace line " + std::to_string(line_no) + ": negative delay");
    }
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

inline std::vector<std::uint64_t> replay_trace(const std::string& path) {
  return read_trace(path);
}

// Per-run delay sampler. Sampling is clamped to the available history
// (tau <= t-1); clamp/truncation events are counted, never raised.
class DelayProcess {
 public:
  explicit DelayProcess(DelayModelSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    if (spec_.kind == DelayKind::scaled) {
      // geometric parameter hitting the target mean before truncation
      geom_p_ = spec_.tau_bar / (1.0 + spec_.tau_bar);
    }
  }

  const DelayModelSpec& spec() const { return spec_; }

  // Largest tau this model can emit at time t.
  std::uint64_t support_bound(TimeIndex t) const {
    const std::uint64_t hist = t - 1;
    switch (spec_.kind) {
      case DelayKind::uniform:
        return std::min<std::uint64_t>(2 * static_cast<std::uint64_t>(spec_.tau_bar), hist);
      case DelayKind::scaled: {
        const double lim = spec_.theta * static_cast<double>(t);
        std::uint64_t b = static_cast<std::uint64_t>(std::ceil(lim));
        if (b > 0) b -= 1;  // strict inequality tau < theta*t
        return std::min({b, spec_.cap, hist});
      }
      case DelayKind::truncated_gaussian:
        return std::min(spec_.cap, hist);
      case DelayKind::trace: {
        std::uint64_t m = 0;
        for (auto v : spec_.trace) m = std::max(m, v);
        return std::min(m, hist);
      }
      case DelayKind::induced:
        return hist;
    }
    return hist;
  }

  // History-ring capacity needed by the engine: max lag over all t, plus the
  // current iterate. Uniform default is 2*tau_bar + 1 slots of lag 0..2*tau_bar.
  std::uint64_t history_capacity() const {
    switch (spec_.kind) {
      case DelayKind::uniform:
        return 2 * static_cast<std::uint64_t>(spec_.tau_bar) + 1;
      case DelayKind::scaled:
      case DelayKind::truncated_gaussian:
        return spec_.cap + 1;
      case DelayKind::trace: {
        std::uint64_t m = 0;
        for (auto v : spec_.trace) m = std::max(m, v);
        return m + 1;
      }
      case DelayKind::induced:
        return 1;
    }
    return 1;
  }

  DelaySample sample(TimeIndex t, RngStream& rng) {
    if (t < 1) throw std::invalid_argument("sample_delay: t must be >= 1");
    std::uint64_t tau = 0;
    switch (spec_.kind) {
      case DelayKind::uniform: {
        const std::uint64_t full = 2 * static_cast<std::uint64_t>(spec_.tau_bar);
        const std::uint64_t m = support_bound(t);
        if (m < full) ++clamp_count_;
        tau = rng.uniform_int(m + 1);
        break;
      }
      case DelayKind::scaled:
      case DelayKind::truncated_gaussian: {
        const std::uint64_t m = support_bound(t);
        if (spec_.kind == DelayKind::truncated_gaussian && m < spec_.cap) ++clamp_count_;
        tau = sample_pmf(m, rng);
        break;
      }
      case DelayKind::trace: {
        if (t - 1 >= spec_.trace.size()) {
          throw std::runtime_error("delay trace exhausted at t=" + std::to_string(t));
        }
        tau = spec_.trace[t - 1];
        if (tau > t - 1) {
          tau = t - 1;
          ++clamp_count_;
        }
        break;
      }
      case DelayKind::induced:
        throw std::logic_error("induced delay model cannot be sampled");
    }
    return DelaySample{tau, t - tau};
  }

  // Exact first/second moments of the sampler at time t, by direct summation
  // over the (truncated, renormalized) support. These feed the lemma and
  // theorem bounds, which hold per-t with the true E[tau_t], E[tau_t^2].
  double mean_at(TimeIndex t) const { return moment_at(t, 1); }
  double second_moment_at(TimeIndex t) const { return moment_at(t, 2); }
  double theta_at(TimeIndex) const { return spec_.theta; }

  std::uint64_t clamp_count() const { return clamp_count_; }

 private:
  double weight(std::uint64_t s) const {
    switch (spec_.kind) {
      case DelayKind::uniform:
        return 1.0;
      case DelayKind::scaled:
        return std::pow(geom_p_, static_cast<double>(s));
      case DelayKind::truncated_gaussian: {
        const double z = (static_cast<double>(s) - spec_.gauss_mean) / spec_.gauss_std;
        return std::exp(-0.5 * z * z);
      }
      default:
        throw std::logic_error("weight undefined for this delay kind");
    }
  }

  std::uint64_t sample_pmf(std::uint64_t m, RngStream& rng) const {
    double z = 0.0;
    for (std::uint64_t s = 0; s <= m; ++s) z += weight(s);
    const double u = rng.uniform01() * z;
    double acc = 0.0;
    for (std::uint64_t s = 0; s <= m; ++s) {
      acc += weight(s);
      if (u < acc) return s;
    }
    return m;
  }

  double moment_at(TimeIndex t, int order) const {
    const std::uint64_t m = support_bound(t);
    if (spec_.kind == DelayKind::trace) {
      const double v = static_cast<double>(std::min(spec_.trace.at(t - 1), t - 1));
      return order == 1 ? v : v * v;
    }
    if (spec_.kind == DelayKind::induced) {
      throw std::logic_error("induced delay model has no analytic moments");
    }
    double z = 0.0, s1 = 0.0;
    for (std::uint64_t s = 0; s <= m; ++s) {
      const double w = weight(s);
      z += w;
      const double sv = static_cast<double>(s);
      s1 += w * (order == 1 ? sv : sv * sv);
    }
    return s1 / z;
  }

  DelayModelSpec spec_;
  double geom_p_ = 0.0;
  std::uint64_t clamp_count_ = 0;
};

inline DelaySample sample_delay(DelayProcess& model, TimeIndex t, RngStream& rng) {
  return model.sample(t, rng);
}

struct DelayStats {
  std::map<std::uint64_t, std::uint64_t> histogram;
  std::uint64_t count = 0;
  double mean_tau = 0.0;
  double second_moment = 0.0;
  double theta_hat = 0.0;  // least-squares slope of tau_t on t over the early phase
  std::uint64_t clamp_count = 0;
};

inline DelayStats delay_stats(const std::vector<std::uint64_t>& taus,
                              double early_fraction = 0.1) {
  if (taus.empty()) throw std::invalid_argument("delay_stats: empty sample");
  DelayStats st;
  st.count = taus.size();
  double s1 = 0.0, s2 = 0.0;
  for (auto tau : taus) {
    ++st.histogram[tau];
    const double v = static_cast<double>(tau);
    s1 += v;
    s2 += v * v;
  }
  st.mean_tau = s1 / static_cast<double>(taus.size());
  st.second_moment = s2 / static_cast<double>(taus.size());
  std::size_t n_early = static_cast<std::size_t>(
      std::ceil(early_fraction * static_cast<double>(taus.size())));
  n_early = std::min(std::max<std::size_t>(n_early, 2), taus.size());
  std::vector<double> ts(n_early), ys(n_early);
  for (std::size_t i = 0; i < n_early; ++i) {
    ts[i] = static_cast<double>(i + 1);
    ys[i] = static_cast<double>(taus[i]);
  }
  st.theta_hat = least_squares(ts, ys).slope;
  return st;
}

}  // namespace adadelay
