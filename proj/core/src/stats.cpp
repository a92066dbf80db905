#include "hetero/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hetero/error.hpp"

namespace hetero {

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    compensation_ += (sum_ - t) + x;
  } else {
    compensation_ += (x - t) + sum_;
  }
  sum_ = t;
}

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value() / static_cast<double>(xs.size());
}

double stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  CompensatedSum s;
  for (double x : xs) s.add((x - m) * (x - m));
  return std::sqrt(s.value() / static_cast<double>(xs.size() - 1));
}

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ContractError("pearson: length mismatch");
  if (xs.size() < 2) throw ContractError("pearson: need at least two values");
  const double mx = mean(xs), my = mean(ys);
  CompensatedSum sxy, sxx, syy;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy.add((xs[i] - mx) * (ys[i] - my));
    sxx.add((xs[i] - mx) * (xs[i] - mx));
    syy.add((ys[i] - my) * (ys[i] - my));
  }
  const double denom = std::sqrt(sxx.value() * syy.value());
  if (denom == 0.0) return 0.0;
  return sxy.value() / denom;
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  }
  return std::round(r);
}

}  // namespace hetero
