#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "adadelay/delay.hpp"
#include "adadelay/engine.hpp"
#include "adadelay/problems.hpp"
#include "adadelay/stats.hpp"
#include "adadelay/types.hpp"

namespace adadelay {

// Per-step analysis residuals along one trajectory:
//   delta      (1/2a)(||x*-x(t)||^2 - ||x*-x(t+1)||^2)
//   gamma      <grad f(x(t)) - grad f(x(t-tau)), x(t+1) - x*>
//   sigma_term (1/2eta)||grad f(x(t-tau)) - g||^2
//   cross      <grad f(x(t-tau)) - g, x(t) - x*>, zero-mean under the oracle
//   z          eta(t,tau_t) - eta(t-1,tau_{t-1}), 0 at t=1
//   r          ||x(t) - x*||^2
struct ResidualRow {
  TimeIndex t = 0;
  std::uint64_t tau = 0;
  double delta = 0.0;
  double gamma = 0.0;
  double sigma_term = 0.0;
  double cross = 0.0;
  double z = 0.0;
  double r = 0.0;
  double f_gap = 0.0;
  double decomposition_lhs = 0.0;  // f(x(t+1)) - f*
  double decomposition_rhs = 0.0;  // delta + <e_t, x(t+1)-x*> + ((L-1/a)/2)||dx||^2
};

// Requires the exact objective (synthetic quadratic) and alpha0 = 1 so the
// logged alpha is 1/(L + eta) as in the analysis.
inline std::vector<ResidualRow> compute_residuals(const Trajectory& traj,
                                                  const Objective& objective,
                                                  const DenseVec& x_star, double f_star,
                                                  double L, double alpha0 = 1.0) {
  if (alpha0 != 1.0) {
    throw std::invalid_argument("compute_residuals: analysis residuals need alpha0 = 1");
  }
  const std::size_t T = traj.g.size();
  if (traj.x.size() != T + 1 || traj.tau.size() != T || traj.eta.size() != T) {
    throw std::invalid_argument("compute_residuals: inconsistent trajectory");
  }
  std::vector<ResidualRow> rows(T);
  for (std::size_t k = 0; k < T; ++k) {
    const TimeIndex t = k + 1;
    const std::uint64_t tau = traj.tau[k];
    if (tau > k) throw std::invalid_argument("compute_residuals: missing lagged iterate");
    const DenseVec& x_t = traj.x[k];
    const DenseVec& x_next = traj.x[k + 1];
    const DenseVec& x_lag = traj.x[k - tau];
    const double eta = traj.eta[k];
    const double alpha = traj.alpha[k];

    ResidualRow& row = rows[k];
    row.t = t;
    row.tau = tau;
    const double r_t = l2_norm_sq(sub(x_t, x_star));
    const double r_next = l2_norm_sq(sub(x_next, x_star));
    row.r = r_t;
    row.delta = (r_t - r_next) / (2.0 * alpha);

    const DenseVec grad_t = objective.gradient(x_t);
    const DenseVec grad_lag = objective.gradient(x_lag);
    row.gamma = dot(sub(grad_t, grad_lag), sub(x_next, x_star));

    const DenseVec noise = sub(grad_lag, traj.g[k]);
    row.sigma_term = l2_norm_sq(noise) / (2.0 * eta);
    row.cross = dot(noise, sub(x_t, x_star));
    row.z = k == 0 ? 0.0 : eta - traj.eta[k - 1];

    row.f_gap = objective.value(x_next) - f_star;
    row.decomposition_lhs = row.f_gap;
    const DenseVec e_t = sub(grad_t, traj.g[k]);
    const double dx2 = l2_norm_sq(sub(x_t, x_next));
    row.decomposition_rhs =
        row.delta + dot(e_t, sub(x_next, x_star)) + 0.5 * (L - 1.0 / alpha) * dx2;
  }
  return rows;
}

struct LemmaCheck {
  std::string name;
  double empirical = 0.0;  // Monte Carlo mean of the left-hand side
  double bound = 0.0;      // closed-form right-hand side
  double stderr_ = 0.0;
  bool pass = false;       // empirical <= bound + 3 * stderr
};

struct LemmaReport {
  std::vector<LemmaCheck> checks;
  bool all_pass() const {
    for (const auto& c : checks) {
      if (!c.pass) return false;
    }
    return true;
  }
};

namespace bounds {

// sum over t of E[Delta(t)], uniform delays
inline double delta_uniform(const ProblemConstants& k, double c, double tau_bar,
                            std::uint64_t T) {
  return 0.5 * (k.L + c) * k.R * k.R +
         std::sqrt(2.0) * c * k.R * k.R * tau_bar * std::sqrt(static_cast<double>(T));
}

// sum over t of E[Delta(t)], scaled delays with per-t means from the model
inline double delta_scaled(const ProblemConstants& k, double c, const DelayProcess& model,
                           std::uint64_t T) {
  double s = 0.0;
  for (std::uint64_t t = 2; t <= T; ++t) {
    s += (model.mean_at(t) + 1.0) / std::sqrt(2.0 * static_cast<double>(t) - 1.0);
  }
  return 0.5 * k.R * k.R * (k.L + c) + 0.5 * c * k.R * k.R * s;
}

// sum over t of E[Gamma(t)], uniform delays
inline double gamma_uniform(const ProblemConstants& k, double c, double tau_bar,
                            std::uint64_t T) {
  const double G2 = k.G * k.G;
  const double c1 = G2 * tau_bar * (tau_bar + 1.0) * (2.0 * tau_bar + 1.0) *
                    (2.0 * tau_bar + 1.0) / (3.0 * (k.L * k.L + c * c));
  const double c2 = G2 * (4.0 * tau_bar + 3.0) * (tau_bar + 1.0) / (3.0 * c * c);
  return tau_bar * k.G * k.R + 0.5 * k.L * c1 +
         0.5 * k.L * c2 * std::log(static_cast<double>(T));
}

// sum over t of E[Gamma(t)], scaled delays
inline double gamma_scaled(const ProblemConstants& k, double c, const DelayProcess& model,
                           std::uint64_t T) {
  const double G2 = k.G * k.G;
  double tail = 0.0;
  for (std::uint64_t t = 1; t + 1 <= T; ++t) {
    const double d = static_cast<double>(T - t);
    tail += model.second_moment_at(t) / (d * d);
  }
  double series = 0.0;
  for (std::uint64_t t = 1; t <= T; ++t) {
    const double theta = model.theta_at(t);
    series += (model.second_moment_at(t) + 1.0 + model.mean_at(t)) /
              (k.L * k.L + c * c * (1.0 - theta) * static_cast<double>(t));
  }
  return k.G * k.R * (1.0 + tail) + k.L * G2 * series;
}

// sum over t of E[Sigma(t)], any delay distribution
inline double sigma_any(const ProblemConstants& k, double c, std::uint64_t T) {
  return k.sigma * k.sigma / c * std::sqrt(static_cast<double>(T));
}

// E[z_t^+] for eta = c (t+tau)^beta under scaled delays, per t >= 2
inline double z_plus_beta(const ProblemConstants& k, double c, double beta,
                          const DelayProcess& model, std::uint64_t t) {
  if (t < 2) throw std::invalid_argument("z_plus_beta: defined for t >= 2");
  return c * k.R * k.R * beta * (model.mean_at(t) + 1.0) /
         std::pow(static_cast<double>(t - 1), 1.0 - beta);
}

}  // namespace bounds

// Closed-form right-hand side of the uniform-delay regret bound.
inline double theorem_bound_uniform(const ProblemConstants& k, double c, double tau_bar,
                                    std::uint64_t T) {
  k.validate();
  if (!(c > 0)) throw std::invalid_argument("theorem_bound: c must be positive");
  const double R2 = k.R * k.R;
  const double G2 = k.G * k.G;
  const double Td = static_cast<double>(T);
  const double term_sqrt = (std::sqrt(2.0) * c * R2 * tau_bar + k.sigma * k.sigma / c) *
                           std::sqrt(Td);
  const double term_log = k.L * G2 * (4.0 * tau_bar + 3.0) * (tau_bar + 1.0) /
                          (6.0 * c * c) * std::log(Td);
  const double term_const = 0.5 * (k.L + c) * R2 + tau_bar * k.G * k.R +
                            k.L * G2 * tau_bar * (tau_bar + 1.0) *
                                (2.0 * tau_bar + 1.0) * (2.0 * tau_bar + 1.0) /
                                (6.0 * (k.L * k.L + c * c));
  return term_sqrt + term_log + term_const;
}

// Closed-form right-hand side of the scaled-delay regret bound, with the
// model's exact per-t moments.
inline double theorem_bound_scaled(const ProblemConstants& k, double c,
                                   const DelayProcess& model, std::uint64_t T) {
  k.validate();
  if (!(c > 0)) throw std::invalid_argument("theorem_bound: c must be positive");
  if (model.spec().kind != DelayKind::scaled) {
    throw std::invalid_argument("theorem_bound_scaled: needs a scaled delay model");
  }
  const double R2 = k.R * k.R;
  const double G2 = k.G * k.G;
  double delta_series = 0.0;
  for (std::uint64_t t = 2; t <= T; ++t) {
    delta_series += (model.mean_at(t) + 1.0) / std::sqrt(2.0 * static_cast<double>(t) - 1.0);
  }
  double tail = 0.0;
  for (std::uint64_t t = 1; t + 1 <= T; ++t) {
    const double d = static_cast<double>(T - t);
    tail += model.second_moment_at(t) / (d * d);
  }
  double series = 0.0;
  for (std::uint64_t t = 1; t <= T; ++t) {
    const double theta = model.theta_at(t);
    if (theta >= 1.0) throw std::invalid_argument("theorem_bound_scaled: theta >= 1");
    series += (model.second_moment_at(t) + 1.0 + model.mean_at(t)) /
              (k.L * k.L + c * c * (1.0 - theta) * static_cast<double>(t));
  }
  return k.sigma * k.sigma / c * std::sqrt(static_cast<double>(T)) +
         0.5 * c * R2 * delta_series + k.G * k.R * (1.0 + tail) + G2 * series +
         0.5 * R2 * (k.L + c);
}

inline double theorem_bound(const ProblemConstants& k, const DelayProcess& model, double c,
                            std::uint64_t T) {
  switch (model.spec().kind) {
    case DelayKind::uniform:
      return theorem_bound_uniform(k, c, model.spec().tau_bar, T);
    case DelayKind::scaled:
      return theorem_bound_scaled(k, c, model, T);
    default:
      throw std::invalid_argument("theorem_bound: needs a uniform or scaled delay model");
  }
}

struct Corollary1Constants {
  double D1 = 0.0, D2 = 0.0, D3 = 0.0;
};

inline Corollary1Constants corollary1_constants(const ProblemConstants& k, double c,
                                                double tau_bar) {
  const double R2 = k.R * k.R;
  const double G2 = k.G * k.G;
  Corollary1Constants d;
  d.D1 = std::sqrt(2.0) * c * R2 * tau_bar + k.sigma * k.sigma / c;
  d.D2 = k.L * G2 * (4.0 * tau_bar + 3.0) * (tau_bar + 1.0) / (6.0 * c * c);
  d.D3 = 0.5 * (k.L + c) * R2 + tau_bar * k.G * k.R +
         k.L * G2 * tau_bar * (tau_bar + 1.0) * (2.0 * tau_bar + 1.0) *
             (2.0 * tau_bar + 1.0) / (6.0 * (k.L * k.L + c * c));
  return d;
}

struct Corollary2Constants {
  double D4 = 0.0, D5 = 0.0, D6 = 0.0;
};

inline Corollary2Constants corollary2_constants(const ProblemConstants& k, double c,
                                                double tau_bar, double B, double theta) {
  if (theta >= 1.0) throw std::invalid_argument("corollary2: theta >= 1");
  const double R2 = k.R * k.R;
  const double G2 = k.G * k.G;
  Corollary2Constants d;
  d.D4 = c * R2 * (tau_bar + 1.0) / std::sqrt(2.0) + k.sigma * k.sigma / c;
  d.D5 = G2 * (B * B + tau_bar + 1.0) / (c * c * (1.0 - theta));
  d.D6 = 0.5 * (k.L + c) * R2 +
         k.G * k.R * (1.0 + 9.8696044010893586188 / 6.0 * B * B);  // pi^2/6
  return d;
}

// Bounded-c_t variant: c is replaced by M2 where it multiplies and by M1
// where it divides.
inline double theorem_bound_uniform_bounded_ct(const ProblemConstants& k, double M1,
                                               double M2, double tau_bar, std::uint64_t T) {
  if (!(M1 > 0 && M2 >= M1)) throw std::invalid_argument("bounded c_t: need 0 < M1 <= M2");
  const double R2 = k.R * k.R;
  const double G2 = k.G * k.G;
  const double Td = static_cast<double>(T);
  return (std::sqrt(2.0) * M2 * R2 * tau_bar + k.sigma * k.sigma / M1) * std::sqrt(Td) +
         k.L * G2 * (4.0 * tau_bar + 3.0) * (tau_bar + 1.0) / (6.0 * M1 * M1) *
             std::log(Td) +
         0.5 * (k.L + M2) * R2 + tau_bar * k.G * k.R +
         k.L * G2 * tau_bar * (tau_bar + 1.0) * (2.0 * tau_bar + 1.0) *
             (2.0 * tau_bar + 1.0) / (6.0 * (k.L * k.L + M1 * M1));
}

namespace detail {
inline LemmaCheck make_check(std::string name, const std::vector<double>& per_seed,
                             double bound) {
  LemmaCheck c;
  c.name = std::move(name);
  c.empirical = mean(per_seed);
  c.bound = bound;
  c.stderr_ = standard_error(per_seed);
  c.pass = c.empirical <= bound + 3.0 * c.stderr_;
  return c;
}
}  // namespace detail

// Monte Carlo check of the appendix term bounds over many seeded runs.
// Pass rule: empirical mean <= bound + 3 standard errors.
inline LemmaReport check_lemma_bounds(const std::vector<std::vector<ResidualRow>>& runs,
                                      const ProblemConstants& constants,
                                      const DelayProcess& model, double c, double beta,
                                      std::uint64_t T) {
  if (runs.empty()) throw std::invalid_argument("check_lemma_bounds: no runs");
  for (const auto& r : runs) {
    if (r.size() != T) throw std::invalid_argument("check_lemma_bounds: run length != T");
  }
  const std::size_t n = runs.size();
  std::vector<double> delta_sums(n), gamma_sums(n), sigma_sums(n);
  for (std::size_t i = 0; i < n; ++i) {
    double ds = 0, gs = 0, ss = 0;
    for (const auto& row : runs[i]) {
      ds += row.delta;
      gs += row.gamma;
      ss += row.sigma_term;
    }
    delta_sums[i] = ds;
    gamma_sums[i] = gs;
    sigma_sums[i] = ss;
  }

  LemmaReport report;
  const DelayKind kind = model.spec().kind;
  if (kind == DelayKind::uniform) {
    const double tau_bar = model.spec().tau_bar;
    report.checks.push_back(detail::make_check(
        "lemma2_delta_uniform", delta_sums,
        bounds::delta_uniform(constants, c, tau_bar, T)));
    report.checks.push_back(detail::make_check(
        "lemma4_gamma_uniform", gamma_sums,
        bounds::gamma_uniform(constants, c, tau_bar, T)));
  } else if (kind == DelayKind::scaled) {
    report.checks.push_back(detail::make_check(
        "lemma3_delta_scaled", delta_sums, bounds::delta_scaled(constants, c, model, T)));
    report.checks.push_back(detail::make_check(
        "lemma5_gamma_scaled", gamma_sums, bounds::gamma_scaled(constants, c, model, T)));
    if (beta != 0.5) {
      // term-wise z_t^+ bound; report the binding t
      LemmaCheck worst;
      worst.name = "lemma7_zplus_beta";
      worst.pass = true;
      double worst_margin = -std::numeric_limits<double>::infinity();
      std::vector<double> zp(n);
      for (std::uint64_t t = 2; t <= T; ++t) {
        for (std::size_t i = 0; i < n; ++i) zp[i] = std::max(runs[i][t - 1].z, 0.0);
        const double b = bounds::z_plus_beta(constants, c, beta, model, t);
        const double m = mean(zp);
        const double se = standard_error(zp);
        const double margin = m - b - 3.0 * se;
        if (margin > worst_margin) {
          worst_margin = margin;
          worst.empirical = m;
          worst.bound = b;
          worst.stderr_ = se;
          worst.pass = margin <= 0.0;
        }
      }
      report.checks.push_back(worst);
    }
  }
  report.checks.push_back(detail::make_check("lemma6_sigma_any", sigma_sums,
                                             bounds::sigma_any(constants, c, T)));
  return report;
}

struct GapPoint {
  double T = 0.0;
  double gap = 0.0;
};

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t n_T = 0;
};

// Least-squares slope of log(mean gap) against log(T), with a percentile
// bootstrap over the per-T gap samples.
inline RateFit fit_rate(const std::vector<GapPoint>& points, int bootstrap_reps = 1000,
                        std::uint64_t bootstrap_seed = 17) {
  std::map<double, std::vector<double>> by_T;
  for (const auto& p : points) {
    if (!(p.T > 0) || !(p.gap > 0)) {
      throw std::invalid_argument("fit_rate: T and gap must be positive");
    }
    by_T[p.T].push_back(p.gap);
  }
  if (by_T.size() < 3) throw std::invalid_argument("fit_rate: need >= 3 distinct T values");

  std::vector<double> log_T, log_gap;
  for (const auto& [T, gaps] : by_T) {
    log_T.push_back(std::log(T));
    log_gap.push_back(std::log(mean(gaps)));
  }
  const LinearFit fit = least_squares(log_T, log_gap);

  RateFit out;
  out.slope = fit.slope;
  out.intercept = fit.intercept;
  out.n_T = by_T.size();

  RngStream rng(bootstrap_seed);
  std::vector<double> slopes;
  slopes.reserve(bootstrap_reps);
  std::vector<double> resampled(by_T.size());
  for (int rep = 0; rep < bootstrap_reps; ++rep) {
    std::size_t k = 0;
    for (const auto& [T, gaps] : by_T) {
      double s = 0.0;
      for (std::size_t i = 0; i < gaps.size(); ++i) {
        s += gaps[rng.uniform_int(gaps.size())];
      }
      resampled[k++] = std::log(s / static_cast<double>(gaps.size()));
    }
    slopes.push_back(least_squares(log_T, resampled).slope);
  }
  out.ci_lo = percentile(slopes, 0.025);
  out.ci_hi = percentile(slopes, 0.975);
  return out;
}

}  // namespace adadelay
