#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "adadelay/rng.hpp"
#include "adadelay/vector.hpp"

namespace adadelay {

struct DatasetRow {
  double label = 0.0;  // normalized to {0,1}
  std::vector<SparseEntry> features;
};

struct Dataset {
  std::string path;
  std::vector<DatasetRow> rows;
  std::uint64_t max_feature_index = 0;  // meaningful only when !rows.empty()

  std::size_t row_count() const { return rows.size(); }
  std::uint64_t num_features() const { return rows.empty() ? 0 : max_feature_index + 1; }
};

using DatasetHandle = Dataset;

namespace detail {
inline std::runtime_error parse_error(const std::string& path, std::uint64_t line,
                                      const std::string& what) {
  return std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}
}  // namespace detail

// libsvm text rows: "<label> <index>:<value> ...". Labels {0,1} or {-1,+1}
// (normalized to {0,1}); indices per row strictly increasing. index_base 1
// shifts indices down so they are 0-based internally.
inline Dataset read_libsvm(const std::string& path, int index_base = 0) {
  if (index_base != 0 && index_base != 1) {
    throw std::invalid_argument("read_libsvm: index_base must be 0 or 1");
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  Dataset ds;
  ds.path = path;
  std::string line;
  std::uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    DatasetRow row;
    try {
      std::size_t pos = 0;
      const double raw = std::stod(tok, &pos);
      if (pos != tok.size()) throw std::invalid_argument("trailing junk");
      if (raw == 0.0 || raw == -1.0) {
        row.label = 0.0;
      } else if (raw == 1.0) {
        row.label = 1.0;
      } else {
        throw detail::parse_error(path, line_no, "label must be 0/1 or -1/+1");
      }
    } catch (const std::runtime_error&) {
      throw;
    } catch (const std::exception&) {
      throw detail::parse_error(path, line_no, "non-numeric label '" + tok + "'");
    }
    long long prev_index = -1;
    while (ls >> tok) {
      const std::size_t colon = tok.find(':');
      if (colon == std::string::npos) {
        throw detail::parse_error(path, line_no, "expected index:value, got '" + tok + "'");
      }
      long long idx = 0;
      double val = 0.0;
      try {
        std::size_t pos = 0;
        idx = std::stoll(tok.substr(0, colon), &pos);
        if (pos != colon) throw std::invalid_argument("bad index");
        pos = 0;
        const std::string vs = tok.substr(colon + 1);
        val = std::stod(vs, &pos);
        if (pos != vs.size()) throw std::invalid_argument("bad value");
      } catch (const std::exception&) {
        throw detail::parse_error(path, line_no, "malformed pair '" + tok + "'");
      }
      idx -= index_base;
      if (idx < 0) throw detail::parse_error(path, line_no, "feature index below base");
      if (idx <= prev_index) {
        throw detail::parse_error(path, line_no, "feature indices must strictly increase");
      }
      if (!std::isfinite(val)) throw detail::parse_error(path, line_no, "non-finite value");
      prev_index = idx;
      row.features.push_back({static_cast<std::uint64_t>(idx), val});
      ds.max_feature_index = std::max(ds.max_feature_index, static_cast<std::uint64_t>(idx));
    }
    ds.rows.push_back(std::move(row));
  }
  return ds;
}

inline void write_libsvm(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset: " + path);
  for (const auto& row : ds.rows) {
    out << static_cast<int>(row.label);
    for (const auto& e : row.features) {
      out << ' ' << e.index << ':' << e.value;
    }
    out << '\n';
  }
}

// Sparse binary-feature classification data with power-law feature
// frequencies and labels planted from a hidden weight vector. The skewed
// frequencies give the per-coordinate policies nonuniform sparsity to adapt to.
inline Dataset make_synthetic_logistic_dataset(std::size_t n_rows, std::uint64_t n_features,
                                               std::size_t nnz_per_row, std::uint64_t seed,
                                               double bias = 0.0) {
  if (n_features == 0 || nnz_per_row == 0 || nnz_per_row > n_features) {
    throw std::invalid_argument("make_synthetic_logistic_dataset: bad shape");
  }
  RngStream rng(derive_seed(seed, "dataset"));
  // cumulative power-law weights over feature ids
  std::vector<double> cum(n_features);
  double acc = 0.0;
  for (std::uint64_t j = 0; j < n_features; ++j) {
    acc += 1.0 / std::pow(static_cast<double>(j + 2), 0.7);
    cum[j] = acc;
  }
  std::vector<double> w_star(n_features);
  const double w_scale = 2.0 / std::sqrt(static_cast<double>(nnz_per_row));
  for (auto& w : w_star) w = rng.normal(0.0, w_scale);

  Dataset ds;
  ds.path = "<synthetic>";
  ds.rows.reserve(n_rows);
  std::vector<std::uint64_t> picked;
  for (std::size_t i = 0; i < n_rows; ++i) {
    picked.clear();
    while (picked.size() < nnz_per_row) {
      const double u = rng.uniform01() * acc;
      const auto it = std::lower_bound(cum.begin(), cum.end(), u);
      const std::uint64_t j = static_cast<std::uint64_t>(it - cum.begin());
      if (std::find(picked.begin(), picked.end(), j) == picked.end()) picked.push_back(j);
    }
    std::sort(picked.begin(), picked.end());
    DatasetRow row;
    double logit = bias;
    for (auto j : picked) {
      row.features.push_back({j, 1.0});
      logit += w_star[j];
      ds.max_feature_index = std::max(ds.max_feature_index, j);
    }
    const double p = 1.0 / (1.0 + std::exp(-logit));
    row.label = (rng.uniform01() < p) ? 1.0 : 0.0;
    ds.rows.push_back(std::move(row));
  }
  return ds;
}

}  // namespace adadelay
