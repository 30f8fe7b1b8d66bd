#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "adadelay/types.hpp"

namespace adadelay {

enum class PolicyKind {
  adadelay_scalar,    // eta = c * (t + tau)^beta
  adadelay_coord,     // eta_j = c_j * sqrt(t + tau), c_j from weighted delayed gradients
  async_adagrad,      // eta_j = sqrt(sum_i g_j^2)
  adaptive_revision,  // eta_j = sqrt(sum_i g_j^2 + 2 g_j g_bak_j)
};

inline const char* policy_kind_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::adadelay_scalar: return "adadelay";
    case PolicyKind::adadelay_coord: return "adadelay_coord";
    case PolicyKind::async_adagrad: return "async_adagrad";
    case PolicyKind::adaptive_revision: return "adaptive_revision";
  }
  return "?";
}

// Per-feature value slots a sparse parameter server holds for each policy,
// counting the weight itself. AsyncAdaGrad and AdaDelay keep the weight plus
// one accumulator; AdaptiveRevision needs two more entries per feature.
inline int state_entries_per_feature(PolicyKind k) {
  switch (k) {
    case PolicyKind::adadelay_scalar: return 1;  // weight only; offset state is O(1)
    case PolicyKind::adadelay_coord: return 2;
    case PolicyKind::async_adagrad: return 2;
    case PolicyKind::adaptive_revision: return 4;
  }
  return 0;
}

struct StepPolicyConfig {
  PolicyKind kind = PolicyKind::adadelay_scalar;
  double c = 1.0;
  double beta = 0.5;
  // optional bounded-c_t clamp M1 <= c_j <= M2; disabled when c_min == 0 and
  // c_max is infinite
  double c_min = 0.0;
  double c_max = std::numeric_limits<double>::infinity();

  void validate() const {
    if (kind == PolicyKind::adadelay_scalar || kind == PolicyKind::adadelay_coord) {
      if (!(c > 0)) throw std::invalid_argument("step policy: c must be positive");
    }
    if (!(beta > 0.0 && beta < 1.0)) {
      throw std::invalid_argument("step policy: beta must be in (0,1)");
    }
    if (c_min < 0 || c_max < c_min) throw std::invalid_argument("step policy: bad c bounds");
  }
};

// Learning-rate offset eta(t, tau). Scalar policies ignore coordinates;
// per-coordinate policies own per-feature accumulator state and must see
// every applied (t, tau, g_j) exactly once, in server order.
class StepPolicy {
 public:
  virtual ~StepPolicy() = default;
  virtual PolicyKind kind() const = 0;
  virtual bool per_coordinate() const = 0;
  virtual bool needs_g_bak() const { return false; }

  virtual double eta(TimeIndex, std::uint64_t /*tau*/) {
    throw std::logic_error("scalar eta not defined for this policy");
  }
  virtual double eta_coord(std::uint64_t /*j*/, TimeIndex, std::uint64_t /*tau*/,
                           double /*g_j*/, double /*g_bak_j*/ = 0.0) {
    throw std::logic_error("per-coordinate eta not defined for this policy");
  }

  // cumulative applied-gradient sum for feature j (AdaptiveRevision)
  virtual double cumulative_gradient(std::uint64_t /*j*/) const { return 0.0; }
  // pull-time snapshot handling; returns false when the caller must keep the
  // snapshot itself (per-feature slot already owned by another minibatch)
  virtual bool store_pull_snapshot(std::uint64_t /*j*/, std::uint64_t /*minibatch_id*/) {
    return false;
  }
  virtual double take_pull_snapshot(std::uint64_t /*j*/, std::uint64_t /*minibatch_id*/,
                                    bool /*stored*/, double /*cookie*/) {
    return 0.0;
  }

  virtual std::size_t touched_features() const { return 0; }
  // policy-held doubles; weights are counted by the caller, one per touched feature
  virtual std::size_t numeric_entries() const { return 0; }
  virtual std::uint64_t clamp_events() const { return 0; }
};

class AdaDelayScalarPolicy final : public StepPolicy {
 public:
  explicit AdaDelayScalarPolicy(const StepPolicyConfig& cfg) : c_(cfg.c), beta_(cfg.beta) {
    cfg.validate();
  }

  PolicyKind kind() const override { return PolicyKind::adadelay_scalar; }
  bool per_coordinate() const override { return false; }

  double eta(TimeIndex t, std::uint64_t tau) override {
    const double base = static_cast<double>(t + tau);
    return beta_ == 0.5 ? c_ * std::sqrt(base) : c_ * std::pow(base, beta_);
  }

 private:
  double c_;
  double beta_;
};

// Scaled AdaDelay: c_j = sqrt((1/t) * sum_{i<=t} (i/(i+tau_i)) g_j^2(i-tau_i)),
// eta_j = c_j sqrt(t+tau). Coordinates with no applied gradients have c_j = 0,
// so their step falls back to alpha0 / L.
class AdaDelayCoordPolicy final : public StepPolicy {
 public:
  explicit AdaDelayCoordPolicy(const StepPolicyConfig& cfg)
      : c_min_(cfg.c_min), c_max_(cfg.c_max) {
    cfg.validate();
  }

  PolicyKind kind() const override { return PolicyKind::adadelay_coord; }
  bool per_coordinate() const override { return true; }

  double eta_coord(std::uint64_t j, TimeIndex t, std::uint64_t tau, double g_j,
                   double) override {
    const double td = static_cast<double>(t);
    const double weighted = td / static_cast<double>(t + tau) * g_j * g_j;
    double* w = nullptr;
    if (g_j != 0.0) {
      w = &weighted_sumsq_[j];
      *w += weighted;
    } else {
      auto it = weighted_sumsq_.find(j);
      if (it == weighted_sumsq_.end()) return 0.0;
      w = &it->second;
    }
    double c_j = std::sqrt(*w / td);
    const double clamped = std::clamp(c_j, c_min_, c_max_);
    if (clamped != c_j) ++clamp_events_;
    return clamped * std::sqrt(static_cast<double>(t + tau));
  }

  std::size_t touched_features() const override { return weighted_sumsq_.size(); }
  std::size_t numeric_entries() const override { return weighted_sumsq_.size(); }
  std::uint64_t clamp_events() const override { return clamp_events_; }

  const std::unordered_map<std::uint64_t, double>& accumulators() const {
    return weighted_sumsq_;
  }

 private:
  std::unordered_map<std::uint64_t, double> weighted_sumsq_;
  double c_min_;
  double c_max_;
  std::uint64_t clamp_events_ = 0;
};

class AsyncAdaGradPolicy final : public StepPolicy {
 public:
  explicit AsyncAdaGradPolicy(const StepPolicyConfig& cfg) { cfg.validate(); }

  PolicyKind kind() const override { return PolicyKind::async_adagrad; }
  bool per_coordinate() const override { return true; }

  double eta_coord(std::uint64_t j, TimeIndex, std::uint64_t, double g_j, double) override {
    if (g_j == 0.0) {
      auto it = sumsq_.find(j);
      return it == sumsq_.end() ? 0.0 : std::sqrt(it->second);
    }
    double& a = sumsq_[j];
    a += g_j * g_j;
    return std::sqrt(a);
  }

  std::size_t touched_features() const override { return sumsq_.size(); }
  std::size_t numeric_entries() const override { return sumsq_.size(); }

  const std::unordered_map<std::uint64_t, double>& accumulators() const { return sumsq_; }

 private:
  std::unordered_map<std::uint64_t, double> sumsq_;
};

// AdaptiveRevision: eta_j = sqrt(max(0, sum g_j^2 + 2 g_j g_bak_j)) where
// g_bak_j sums the gradients applied to j between the minibatch's pull and
// push. Per feature the server holds {sumsq, cumulative sum, snapshot slot};
// with the weight that is 4 entries, two more than AsyncAdaGrad. When two
// in-flight minibatches share a feature the second snapshot rides along with
// the minibatch instead of occupying server state.
class AdaptiveRevisionPolicy final : public StepPolicy {
 public:
  explicit AdaptiveRevisionPolicy(const StepPolicyConfig& cfg) { cfg.validate(); }

  PolicyKind kind() const override { return PolicyKind::adaptive_revision; }
  bool per_coordinate() const override { return true; }
  bool needs_g_bak() const override { return true; }

  double eta_coord(std::uint64_t j, TimeIndex, std::uint64_t, double g_j,
                   double g_bak_j) override {
    if (g_j == 0.0) {
      auto it = state_.find(j);
      return it == state_.end() ? 0.0 : std::sqrt(it->second.sumsq);
    }
    Entry& e = state_[j];
    e.sumsq += g_j * g_j;
    double arg = e.sumsq + 2.0 * g_j * g_bak_j;
    if (arg < 0.0) {
      arg = 0.0;
      ++clamp_events_;
    }
    const double out = std::sqrt(arg);
    e.cumsum += g_j;
    return out;
  }

  double cumulative_gradient(std::uint64_t j) const override {
    auto it = state_.find(j);
    return it == state_.end() ? 0.0 : it->second.cumsum;
  }

  // Claims the per-feature snapshot slot for this minibatch if it is free.
  // Features never updated yet have no entry; their snapshot is implicitly 0
  // and the caller carries it.
  bool store_pull_snapshot(std::uint64_t j, std::uint64_t minibatch_id) override {
    auto it = state_.find(j);
    if (it == state_.end()) return false;
    Entry& e = it->second;
    if (e.snap_owner != kNoOwner) return false;
    e.snap = e.cumsum;
    e.snap_owner = minibatch_id;
    return true;
  }

  double take_pull_snapshot(std::uint64_t j, std::uint64_t minibatch_id, bool stored,
                            double cookie) override {
    if (!stored) return cookie;
    auto it = state_.find(j);
    if (it == state_.end() || it->second.snap_owner != minibatch_id) {
      throw std::logic_error("adaptive revision: snapshot slot lost");
    }
    const double v = it->second.snap;
    it->second.snap = 0.0;
    it->second.snap_owner = kNoOwner;
    return v;
  }

  std::size_t touched_features() const override { return state_.size(); }
  std::size_t numeric_entries() const override { return 3 * state_.size(); }
  std::uint64_t clamp_events() const override { return clamp_events_; }

  double sumsq(std::uint64_t j) const {
    auto it = state_.find(j);
    return it == state_.end() ? 0.0 : it->second.sumsq;
  }

 private:
  static constexpr std::uint64_t kNoOwner = UINT64_MAX;
  struct Entry {
    double sumsq = 0.0;
    double cumsum = 0.0;
    double snap = 0.0;
    std::uint64_t snap_owner = kNoOwner;
  };
  std::unordered_map<std::uint64_t, Entry> state_;
  std::uint64_t clamp_events_ = 0;
};

inline std::unique_ptr<StepPolicy> make_policy(const StepPolicyConfig& cfg) {
  switch (cfg.kind) {
    case PolicyKind::adadelay_scalar:
      return std::make_unique<AdaDelayScalarPolicy>(cfg);
    case PolicyKind::adadelay_coord:
      return std::make_unique<AdaDelayCoordPolicy>(cfg);
    case PolicyKind::async_adagrad:
      return std::make_unique<AsyncAdaGradPolicy>(cfg);
    case PolicyKind::adaptive_revision:
      return std::make_unique<AdaptiveRevisionPolicy>(cfg);
  }
  throw std::invalid_argument("unknown policy kind");
}

}  // namespace adadelay
