#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

namespace adadelay {

using DenseVec = std::vector<double>;

struct SparseEntry {
  std::uint64_t index = 0;
  double value = 0.0;
};

inline bool entries_strictly_increasing(const std::vector<SparseEntry>& e) {
  for (std::size_t i = 1; i < e.size(); ++i) {
    if (e[i].index <= e[i - 1].index) return false;
  }
  return true;
}

// Coordinate vector, dense or sparse. Sparse indices are 64-bit and strictly
// increasing; values are always finite.
class Vector {
 public:
  Vector() : v_(DenseVec{}) {}

  static Vector dense(DenseVec values) {
    Vector out;
    out.v_ = std::move(values);
    out.check_finite();
    return out;
  }

  static Vector sparse(std::vector<SparseEntry> entries) {
    if (!entries_strictly_increasing(entries)) {
      throw std::invalid_argument("sparse indices must be strictly increasing");
    }
    Vector out;
    out.v_ = std::move(entries);
    out.check_finite();
    return out;
  }

  bool is_dense() const { return std::holds_alternative<DenseVec>(v_); }

  const DenseVec& dense_values() const { return std::get<DenseVec>(v_); }
  const std::vector<SparseEntry>& sparse_entries() const {
    return std::get<std::vector<SparseEntry>>(v_);
  }

  std::size_t nnz() const {
    if (is_dense()) return dense_values().size();
    return sparse_entries().size();
  }

  // Smallest dense length able to hold every entry.
  std::uint64_t min_dim() const {
    if (is_dense()) return dense_values().size();
    const auto& e = sparse_entries();
    return e.empty() ? 0 : e.back().index + 1;
  }

  template <typename F>
  void for_each_entry(F&& f) const {
    if (is_dense()) {
      const auto& d = dense_values();
      for (std::size_t i = 0; i < d.size(); ++i) f(static_cast<std::uint64_t>(i), d[i]);
    } else {
      for (const auto& e : sparse_entries()) f(e.index, e.value);
    }
  }

  DenseVec to_dense(std::uint64_t dim) const {
    if (is_dense()) {
      const auto& d = dense_values();
      if (d.size() > dim) throw std::invalid_argument("to_dense: dim too small");
      DenseVec out(dim, 0.0);
      std::copy(d.begin(), d.end(), out.begin());
      return out;
    }
    DenseVec out(dim, 0.0);
    for (const auto& e : sparse_entries()) {
      if (e.index >= dim) throw std::invalid_argument("to_dense: dim too small");
      out[e.index] = e.value;
    }
    return out;
  }

  Vector to_sparse() const {
    if (!is_dense()) return *this;
    std::vector<SparseEntry> entries;
    const auto& d = dense_values();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d[i] != 0.0) entries.push_back({static_cast<std::uint64_t>(i), d[i]});
    }
    return Vector::sparse(std::move(entries));
  }

 private:
  void check_finite() const {
    bool ok = true;
    for_each_entry([&](std::uint64_t, double v) { ok = ok && std::isfinite(v); });
    if (!ok) throw std::invalid_argument("vector has non-finite coordinate");
  }

  std::variant<DenseVec, std::vector<SparseEntry>> v_;
};

inline double l2_norm_sq(const Vector& x) {
  double s = 0.0;
  x.for_each_entry([&](std::uint64_t, double v) { s += v * v; });
  return s;
}

inline double l2_norm(const Vector& x) { return std::sqrt(l2_norm_sq(x)); }

inline double l2_norm_sq(const DenseVec& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

inline double l2_norm(const DenseVec& x) { return std::sqrt(l2_norm_sq(x)); }

inline double dot(const DenseVec& a, const DenseVec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline DenseVec sub(const DenseVec& a, const DenseVec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("sub: dimension mismatch");
  DenseVec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

// a*x + y with the union sparsity pattern. Dense operands of mismatched
// length are an error; a dense operand fixes the result representation.
inline Vector sparse_axpy(double a, const Vector& x, const Vector& y) {
  if (x.is_dense() && y.is_dense()) {
    const auto& xd = x.dense_values();
    const auto& yd = y.dense_values();
    if (xd.size() != yd.size()) {
      throw std::invalid_argument("sparse_axpy: dense dimension mismatch");
    }
    DenseVec out(yd.size());
    for (std::size_t i = 0; i < yd.size(); ++i) out[i] = a * xd[i] + yd[i];
    return Vector::dense(std::move(out));
  }
  if (y.is_dense()) {
    DenseVec out = y.dense_values();
    for (const auto& e : x.sparse_entries()) {
      if (e.index >= out.size()) out.resize(e.index + 1, 0.0);
      out[e.index] += a * e.value;
    }
    return Vector::dense(std::move(out));
  }
  if (x.is_dense()) {
    DenseVec out = x.dense_values();
    for (double& v : out) v *= a;
    for (const auto& e : y.sparse_entries()) {
      if (e.index >= out.size()) out.resize(e.index + 1, 0.0);
      out[e.index] += e.value;
    }
    return Vector::dense(std::move(out));
  }
  // both sparse: merge on the union of indices
  const auto& xe = x.sparse_entries();
  const auto& ye = y.sparse_entries();
  std::vector<SparseEntry> out;
  out.reserve(xe.size() + ye.size());
  std::size_t i = 0, j = 0;
  while (i < xe.size() || j < ye.size()) {
    if (j >= ye.size() || (i < xe.size() && xe[i].index < ye[j].index)) {
      out.push_back({xe[i].index, a * xe[i].value});
      ++i;
    } else if (i >= xe.size() || ye[j].index < xe[i].index) {
      out.push_back({ye[j].index, ye[j].value});
      ++j;
    } else {
      out.push_back({xe[i].index, a * xe[i].value + ye[j].value});
      ++i;
      ++j;
    }
  }
  return Vector::sparse(std::move(out));
}

}  // namespace adadelay
