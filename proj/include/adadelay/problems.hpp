#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "adadelay/dataset.hpp"
#include "adadelay/rng.hpp"
#include "adadelay/types.hpp"
#include "adadelay/vector.hpp"

namespace adadelay {

enum class ObjectiveKind { quadratic_synthetic, logistic, least_squares };

inline const char* objective_kind_name(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::quadratic_synthetic: return "quadratic";
    case ObjectiveKind::logistic: return "logistic";
    case ObjectiveKind::least_squares: return "least_squares";
  }
  return "?";
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow
inline double log1p_exp(double z) {
  if (z > 0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

// Convex objective with a full-gradient oracle and an unbiased minibatch
// oracle. The synthetic quadratic is f(x) = 0.5*||x - x*||^2 with additive
// Gaussian noise of total variance sigma^2 (E||g - grad f||^2 = sigma^2).
class Objective {
 public:
  static Objective quadratic(DenseVec x_star, double sigma) {
    Objective o;
    o.kind_ = ObjectiveKind::quadratic_synthetic;
    o.x_star_ = std::move(x_star);
    o.sigma_ = sigma;
    o.dim_ = o.x_star_.size();
    return o;
  }

  static Objective logistic(std::shared_ptr<const Dataset> data, double l2_reg = 0.0) {
    return dataset_objective(ObjectiveKind::logistic, std::move(data), l2_reg);
  }

  static Objective least_squares(std::shared_ptr<const Dataset> data, double l2_reg = 0.0) {
    return dataset_objective(ObjectiveKind::least_squares, std::move(data), l2_reg);
  }

  ObjectiveKind kind() const { return kind_; }
  std::uint64_t dim() const { return dim_; }
  double sigma() const { return sigma_; }
  const DenseVec& x_star() const { return x_star_; }
  const Dataset& data() const { return *data_; }

  double value(const DenseVec& x) const {
    check_dim(x);
    switch (kind_) {
      case ObjectiveKind::quadratic_synthetic: {
        double s = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
          const double d = x[j] - x_star_[j];
          s += d * d;
        }
        return 0.5 * s;
      }
      case ObjectiveKind::logistic: {
        double s = 0.0;
        for (const auto& row : data_->rows) {
          const double z = row_dot(row, x);
          s += log1p_exp(z) - row.label * z;
        }
        return s / n_rows() + 0.5 * l2_reg_ * l2_norm_sq(x);
      }
      case ObjectiveKind::least_squares: {
        double s = 0.0;
        for (const auto& row : data_->rows) {
          const double r = row_dot(row, x) - row.label;
          s += r * r;
        }
        return 0.5 * s / n_rows() + 0.5 * l2_reg_ * l2_norm_sq(x);
      }
    }
    return 0.0;
  }

  DenseVec gradient(const DenseVec& x) const {
    check_dim(x);
    DenseVec g(x.size(), 0.0);
    switch (kind_) {
      case ObjectiveKind::quadratic_synthetic:
        for (std::size_t j = 0; j < x.size(); ++j) g[j] = x[j] - x_star_[j];
        return g;
      case ObjectiveKind::logistic:
        for (const auto& row : data_->rows) {
          const double coef = sigmoid(row_dot(row, x)) - row.label;
          for (const auto& e : row.features) g[e.index] += coef * e.value;
        }
        break;
      case ObjectiveKind::least_squares:
        for (const auto& row : data_->rows) {
          const double coef = row_dot(row, x) - row.label;
          for (const auto& e : row.features) g[e.index] += coef * e.value;
        }
        break;
    }
    const double inv_n = 1.0 / n_rows();
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = g[j] * inv_n + l2_reg_ * x[j];
    return g;
  }

  // Unbiased stochastic gradient. Synthetic kind adds isotropic noise drawn
  // from rng; dataset kinds average the per-example gradients of batch.
  Vector stochastic_gradient(const DenseVec& x, const std::vector<std::size_t>& batch,
                             RngStream& rng) const {
    check_dim(x);
    if (kind_ == ObjectiveKind::quadratic_synthetic) {
      DenseVec g(x.size());
      const double coord_sd = sigma_ / std::sqrt(static_cast<double>(x.size()));
      for (std::size_t j = 0; j < x.size(); ++j) {
        g[j] = (x[j] - x_star_[j]) + (sigma_ > 0 ? rng.normal(0.0, coord_sd) : 0.0);
      }
      return Vector::dense(std::move(g));
    }
    if (batch.empty()) throw std::invalid_argument("stochastic_gradient: empty batch");
    std::vector<SparseEntry> acc;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (std::size_t id : batch) {
      if (id >= data_->rows.size()) {
        throw std::out_of_range("stochastic_gradient: sample id out of range");
      }
      const auto& row = data_->rows[id];
      const double z = row_dot(row, x);
      const double coef =
          (kind_ == ObjectiveKind::logistic ? sigmoid(z) - row.label : z - row.label) * inv_b;
      for (const auto& e : row.features) acc.push_back({e.index, coef * e.value});
    }
    std::sort(acc.begin(), acc.end(),
              [](const SparseEntry& a, const SparseEntry& b) { return a.index < b.index; });
    std::vector<SparseEntry> merged;
    for (const auto& e : acc) {
      if (!merged.empty() && merged.back().index == e.index) {
        merged.back().value += e.value;
      } else {
        merged.push_back(e);
      }
    }
    if (l2_reg_ > 0.0) {
      DenseVec g(x.size(), 0.0);
      for (const auto& e : merged) g[e.index] = e.value;
      for (std::size_t j = 0; j < x.size(); ++j) g[j] += l2_reg_ * x[j];
      return Vector::dense(std::move(g));
    }
    return Vector::sparse(std::move(merged));
  }

  double n_rows() const {
    return data_ ? static_cast<double>(data_->rows.size()) : 1.0;
  }

 private:
  static Objective dataset_objective(ObjectiveKind kind, std::shared_ptr<const Dataset> data,
                                     double l2_reg) {
    if (!data || data->rows.empty()) {
      throw std::invalid_argument("dataset objective needs a nonempty dataset");
    }
    Objective o;
    o.kind_ = kind;
    o.data_ = std::move(data);
    o.l2_reg_ = l2_reg;
    o.dim_ = o.data_->num_features();
    return o;
  }

  static double row_dot(const DatasetRow& row, const DenseVec& x) {
    double z = 0.0;
    for (const auto& e : row.features) z += e.value * x[e.index];
    return z;
  }

  void check_dim(const DenseVec& x) const {
    if (x.size() != dim_) throw std::invalid_argument("objective: dimension mismatch");
  }

  ObjectiveKind kind_ = ObjectiveKind::quadratic_synthetic;
  DenseVec x_star_;
  double sigma_ = 0.0;
  std::shared_ptr<const Dataset> data_;
  double l2_reg_ = 0.0;
  std::uint64_t dim_ = 0;
};

enum class ProjectionKind { unconstrained, l2_ball, box };

class Projection {
 public:
  static Projection unconstrained() { return Projection(); }

  static Projection l2_ball(DenseVec center, double radius) {
    if (!(radius > 0)) throw std::invalid_argument("l2_ball: radius must be > 0");
    Projection p;
    p.kind_ = ProjectionKind::l2_ball;
    p.center_ = std::move(center);
    p.radius_ = radius;
    return p;
  }

  static Projection box(DenseVec lo, DenseVec hi) {
    if (lo.size() != hi.size()) throw std::invalid_argument("box: bound size mismatch");
    for (std::size_t i = 0; i < lo.size(); ++i) {
      if (lo[i] > hi[i]) throw std::invalid_argument("box: lo > hi");
    }
    Projection p;
    p.kind_ = ProjectionKind::box;
    p.lo_ = std::move(lo);
    p.hi_ = std::move(hi);
    return p;
  }

  ProjectionKind kind() const { return kind_; }
  double radius() const { return radius_; }
  const DenseVec& center() const { return center_; }

  void apply(DenseVec& x) const {
    switch (kind_) {
      case ProjectionKind::unconstrained:
        return;
      case ProjectionKind::l2_ball: {
        double d2 = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double c = i < center_.size() ? center_[i] : 0.0;
          d2 += (x[i] - c) * (x[i] - c);
        }
        if (d2 <= radius_ * radius_) return;
        const double scale = radius_ / std::sqrt(d2);
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double c = i < center_.size() ? center_[i] : 0.0;
          x[i] = c + scale * (x[i] - c);
        }
        return;
      }
      case ProjectionKind::box:
        if (x.size() != lo_.size()) throw std::invalid_argument("box: dimension mismatch");
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo_[i], hi_[i]);
        return;
    }
  }

  DenseVec project(DenseVec x) const {
    apply(x);
    return x;
  }

  bool contains(const DenseVec& x, double tol = 1e-12) const {
    switch (kind_) {
      case ProjectionKind::unconstrained:
        return true;
      case ProjectionKind::l2_ball: {
        double d2 = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double c = i < center_.size() ? center_[i] : 0.0;
          d2 += (x[i] - c) * (x[i] - c);
        }
        return std::sqrt(d2) <= radius_ + tol;
      }
      case ProjectionKind::box:
        for (std::size_t i = 0; i < x.size(); ++i) {
          if (x[i] < lo_[i] - tol || x[i] > hi_[i] + tol) return false;
        }
        return true;
    }
    return true;
  }

 private:
  ProjectionKind kind_ = ProjectionKind::unconstrained;
  DenseVec center_;
  double radius_ = 0.0;
  DenseVec lo_, hi_;
};

inline Vector project(const Projection& set, const Vector& x) {
  DenseVec d = x.to_dense(std::max<std::uint64_t>(x.min_dim(), 1));
  set.apply(d);
  return Vector::dense(std::move(d));
}

// Quadratic instance with a known minimizer inside the ball of the given
// radius, plus the exact constants of Assumptions 1-4. With x* at offset o,
// the worst-case distance and gradient norm over the ball are both radius+o.
struct SyntheticProblem {
  Objective objective;
  DenseVec x_star;
  ProblemConstants constants;
  Projection projection;
  double f_star = 0.0;
};

inline SyntheticProblem make_synthetic(std::uint64_t dim, double sigma, double radius,
                                       std::uint64_t seed, double offset_frac = 0.0) {
  if (dim < 1) throw std::invalid_argument("make_synthetic: dim must be >= 1");
  if (!(radius > 0)) throw std::invalid_argument("make_synthetic: radius must be > 0");
  if (offset_frac < 0 || offset_frac >= 1.0) {
    throw std::invalid_argument("make_synthetic: radius too small to contain x_star");
  }
  DenseVec x_star(dim, 0.0);
  if (offset_frac > 0) {
    RngStream rng(derive_seed(seed, "xstar"));
    double norm2 = 0.0;
    for (auto& v : x_star) {
      v = rng.normal();
      norm2 += v * v;
    }
    const double scale = offset_frac * radius / std::sqrt(norm2);
    for (auto& v : x_star) v *= scale;
  }
  const double offset = offset_frac * radius;
  SyntheticProblem p;
  p.objective = Objective::quadratic(x_star, sigma);
  p.x_star = std::move(x_star);
  p.constants = ProblemConstants{1.0, radius + offset, radius + offset, sigma};
  p.projection = Projection::l2_ball(DenseVec(dim, 0.0), radius);
  p.f_star = 0.0;
  return p;
}

struct FstarEstimate {
  double value = 0.0;
  bool converged = false;
  std::uint64_t iterations = 0;
};

// Deterministic projected full-gradient descent with backtracking. The
// returned value is the objective at a feasible point, hence an upper bound
// on f*; `converged` is false when the budget ran out first.
inline FstarEstimate estimate_fstar(const Objective& obj, const Projection& set,
                                    std::uint64_t budget = 5000, double tol = 1e-10) {
  DenseVec x(obj.dim(), 0.0);
  set.apply(x);
  double fx = obj.value(x);
  double step = 1.0;
  FstarEstimate est;
  for (std::uint64_t it = 0; it < budget; ++it) {
    est.iterations = it + 1;
    const DenseVec g = obj.gradient(x);
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      DenseVec xn(x.size());
      for (std::size_t j = 0; j < x.size(); ++j) xn[j] = x[j] - step * g[j];
      set.apply(xn);
      double quad = 0.0, lin = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double d = xn[j] - x[j];
        quad += d * d;
        lin += g[j] * d;
      }
      const double fn = obj.value(xn);
      if (fn <= fx + lin + quad / (2.0 * step) + 1e-15 * std::abs(fx)) {
        const double move = std::sqrt(quad);
        x = std::move(xn);
        fx = fn;
        accepted = true;
        step *= 1.5;
        if (move <= tol * step) {
          est.converged = true;
          est.value = fx;
          return est;
        }
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      est.converged = true;  // step underflow: stationary to machine precision
      break;
    }
  }
  est.value = fx;
  return est;
}

}  // namespace adadelay
