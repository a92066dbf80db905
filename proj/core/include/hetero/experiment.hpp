#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hetero/data_io.hpp"
#include "hetero/dataset.hpp"
#include "hetero/influence.hpp"
#include "hetero/model.hpp"
#include "hetero/synthetic.hpp"

namespace hetero {

using Composition = std::vector<std::size_t>;

// `points` evenly spaced |A2| values on [0, total]: (total - a2, a2).
std::vector<Composition> sd2_grid(std::size_t total, int points);
// Every (a1, a2, a3) with a1 + a2 + a3 = total on multiples of `step`.
std::vector<Composition> sd3_grid(std::size_t total, std::size_t step);

struct SweepConfig {
  int replicates = 5;
  std::uint64_t seed = 0;
  SplitSpec split;
  TrainConfig train;
  InfluenceOptions influence;
  Encoding encoding = Encoding::one_hot;
  int jobs = 1;
};

struct SweepRow {
  std::string composition;  // "a1/a2[/a3]" or "r=<rate>"
  std::vector<double> coords;
  int replicate = 0;
  double variance = 0.0;
  double test_acc = 0.0;
  double entropy = 0.0;
  std::string error;  // empty on success

  bool ok() const { return error.empty(); }
};

struct SweepAggregate {
  std::string composition;
  std::vector<double> coords;
  int replicates_ok = 0;
  double variance_mean = 0.0;
  double variance_std = 0.0;
  double test_acc_mean = 0.0;
  double test_acc_std = 0.0;
  double entropy = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // composition-major, then replicate

  // Mean/std over successful replicates, in first-appearance order.
  std::vector<SweepAggregate> aggregate() const;
  void write_csv(std::ostream& out) const;
  void write_aggregate_csv(std::ostream& out) const;
};

// Per composition and replicate: generate the mixture, split, train, then
// record V[X] on the training part and accuracy on the held-out part.
// Failures are recorded in the row and the sweep continues.
SweepResult mixture_sweep(std::span<const Composition> grid, const SweepConfig& cfg);

// Per rate and replicate: mislabel `train` at that rate, train, record V[X]
// and accuracy on the clean `test`. Entropy is over (clean, corrupted).
SweepResult error_rate_sweep(const Dataset& train, const Dataset& test,
                             std::span<const double> rates, const SweepConfig& cfg);

}  // namespace hetero
