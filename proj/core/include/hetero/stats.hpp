#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hetero {

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

double mean(std::span<const double> xs);
// Sample standard deviation (n-1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> xs);

// Ranks starting at 1, ties receive the average of their positions.
std::vector<double> average_ranks(std::span<const double> xs);
double pearson(std::span<const double> xs, std::span<const double> ys);
double spearman(std::span<const double> xs, std::span<const double> ys);

// Binomial coefficient as a double (exact for the ranges used here).
double binomial(std::size_t n, std::size_t k);

}  // namespace hetero
