#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hetero/dataset.hpp"
#include "hetero/influence.hpp"
#include "hetero/model.hpp"

namespace hetero {

// How X is scaled after removing a set M of size s.
//
// f_scaled: influences of the model retrained on Z\M with the Hessian of
//           f_{Z\M} (mean over the n-s remaining points).
// u_scaled: the same minimizer seen through the deformed objective
//           u = f_Z - (1/n) sum_{t in M} L(t), whose Hessian is (n-s)/n
//           times that of f_{Z\M}; X is larger by n/(n-s).
enum class Normalization { u_scaled, f_scaled };

const char* to_string(Normalization n);

// All size-s subsets of rows 0..n-1 in lexicographic order.
std::vector<std::vector<std::size_t>> enumerate_subsets(std::size_t n, std::size_t s);

struct TheoryOptions {
  InfluenceOptions influence{RidgeAttribution::per_point};
  int jobs = 1;
};

// Moments of X on Z and on every Z\M, |M| = s, each under its retrained
// model (f-scaled). Retraining warm-starts Newton from the full-data optimum.
struct SubsetEnumeration {
  std::size_t n = 0;
  std::size_t s = 0;
  MomentReport base;
  std::vector<std::vector<PointId>> subsets;
  std::vector<MomentReport> removed;  // aligned with subsets

  // E[X^k] (k >= 1) or V[X] (k = 0) of subset i in the given normalization.
  double quantity(std::size_t i, int k, Normalization norm) const;
};

SubsetEnumeration enumerate_removals(const Dataset& z, std::size_t s, int k_max,
                                     const TrainConfig& cfg, const TheoryOptions& options = {});

struct TheoremCheckReport {
  std::size_t n = 0;
  std::size_t s = 0;
  int k = 0;  // 0 marks the variance check
  std::size_t subsets = 0;
  double base = 0.0;  // E[X^k] or V[X] of the full set
  double lhs_u = 0.0;
  double lhs_f = 0.0;
  double rhs_theory = 0.0;
  // The normalization whose lhs is closer to the theory value.
  Normalization normalization = Normalization::u_scaled;

  double lhs() const { return normalization == Normalization::u_scaled ? lhs_u : lhs_f; }
  double lhs(Normalization norm) const { return norm == Normalization::u_scaled ? lhs_u : lhs_f; }
  double residual() const { return lhs() - rhs_theory; }
  double residual(Normalization norm) const { return lhs(norm) - rhs_theory; }
  std::string to_json() const;
};

// lhs = E[X^k] - mean_M E[X_M^k]; theory (k s/(n-2)) E[X^k].
TheoremCheckReport moment_drop(const SubsetEnumeration& e, int k);
TheoremCheckReport moment_drop(const Dataset& z, std::size_t s, int k, const TrainConfig& cfg,
                               const TheoryOptions& options = {});
// lhs = V[X] - mean_M V[X_M]; theory (2s/(n-2)) V[X].
TheoremCheckReport variance_drop(const SubsetEnumeration& e);
TheoremCheckReport variance_drop(const Dataset& z, std::size_t s, const TrainConfig& cfg,
                                 const TheoryOptions& options = {});

struct CorollaryResult {
  std::vector<PointId> best_subset;
  double drop = 0.0;       // max_M V[X] - V[X_M]
  double mean_drop = 0.0;
  double bound = 0.0;      // (2s/(n-2)) V[X]
  Normalization normalization = Normalization::f_scaled;
  std::vector<double> drops;  // aligned with the enumeration's subsets

  bool holds(double tolerance) const { return drop >= bound - tolerance; }
  std::string to_json() const;
};

// Ties between equal drops go to the lexicographically first subset.
CorollaryResult corollary_search(const SubsetEnumeration& e,
                                 Normalization norm = Normalization::f_scaled);
CorollaryResult corollary_search(const Dataset& z, std::size_t s, const TrainConfig& cfg,
                                 const TheoryOptions& options = {},
                                 Normalization norm = Normalization::f_scaled);

// -sum p_i ln p_i with 0 ln 0 = 0. Fractions must be >= 0 and sum to 1
// within 1e-9.
double entropy(std::span<const double> fractions);

struct EntropyReport {
  std::vector<double> fractions;
  double entropy = 0.0;
};

// Block fractions from counts (zero blocks included).
EntropyReport entropy_from_counts(std::span<const std::size_t> counts);
// Block fractions from the component column over `num_blocks` blocks.
EntropyReport dataset_entropy(const Dataset& data, int num_blocks);

}  // namespace hetero
