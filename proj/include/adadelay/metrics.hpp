#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace adadelay {

// Rank-based AUC with half credit for score ties: the fraction of
// (positive, negative) pairs ranked correctly.
inline double compute_auc(const std::vector<double>& scores,
                          const std::vector<double>& labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("compute_auc: scores/labels size mismatch");
  }
  std::size_t pos = 0, neg = 0;
  for (double y : labels) {
    if (y == 1.0) {
      ++pos;
    } else if (y == 0.0) {
      ++neg;
    } else {
      throw std::invalid_argument("compute_auc: labels must be 0 or 1");
    }
  }
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument("compute_auc: both classes must be present");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double wins = 0.0;
  std::size_t negs_below = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::size_t pos_in_group = 0, neg_in_group = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1.0) {
        ++pos_in_group;
      } else {
        ++neg_in_group;
      }
      ++j;
    }
    wins += static_cast<double>(pos_in_group) * static_cast<double>(negs_below) +
            0.5 * static_cast<double>(pos_in_group) * static_cast<double>(neg_in_group);
    negs_below += neg_in_group;
    i = j;
  }
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace adadelay
