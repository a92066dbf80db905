#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hetero/dataset.hpp"
#include "hetero/error.hpp"
#include "hetero/influence.hpp"
#include "hetero/model.hpp"

namespace hetero {

enum class PurifyMethod { loo_retrain, influence_approx };

struct PurifyConfig {
  int iterations = 20;
  int remove_per_iter = 10;
  PurifyMethod method = PurifyMethod::loo_retrain;
  TrainConfig train;
  std::uint64_t seed = 0;
  // Retrain from the incumbent parameters instead of from scratch.
  bool warm_start = false;
  // Experimental: stop once the variance curve changes curvature.
  bool stop_at_inflection = false;
  int jobs = 1;
  InfluenceOptions influence;

  void validate(std::size_t train_size) const;
};

struct TraceRecord {
  int iteration = 0;
  std::vector<PointId> removed_ids;  // removed in this iteration, ascending
  double variance = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

struct PurificationTrace {
  std::vector<TraceRecord> records;
  bool stopped_early = false;

  // Points removed up to and including record i.
  std::size_t removed_through(std::size_t i) const;
  // First record with the highest test accuracy.
  std::size_t best_record() const;

  void write_csv(std::ostream& out) const;
  std::string to_csv() const;
};

// Thrown when an iteration fails; carries every record completed so far.
class PurifyAborted : public Error {
 public:
  PurifyAborted(const std::string& what, PurificationTrace partial)
      : Error(what), partial_(std::move(partial)) {}
  const PurificationTrace& partial() const { return partial_; }

 private:
  PurificationTrace partial_;
};

// V[X] of `data` under its own trained model.
struct TrainedVariance {
  FitResult fit;
  double variance = 0.0;
};
TrainedVariance trained_variance(const Dataset& data, const TrainConfig& cfg,
                                 const InfluenceOptions& options = {},
                                 const std::optional<ModelParams>& warm_start = std::nullopt);

// V[A] - V[A without z], retraining on A without z. `base_variance` skips
// recomputing V[A] when the caller already has it.
double loo_delta(PointId z_id, const Dataset& a, const TrainConfig& cfg,
                 const InfluenceOptions& options = {},
                 std::optional<double> base_variance = std::nullopt,
                 const std::optional<ModelParams>& warm_start = std::nullopt);

// Deltas without retraining: the variance over pairs of the unchanged
// influence matrix with row and column z deleted.
std::vector<double> influence_delta_estimate(const InfluenceMatrix& x);
std::vector<double> influence_delta_estimate(const Dataset& a, const FitResult& fit,
                                             const InfluenceOptions& options = {});

// Iteration 0 records the untouched set. Each later iteration scores the
// remaining points, removes the remove_per_iter largest deltas (ties by
// ascending id), retrains and records. Throws PurifyAborted on failure.
PurificationTrace purify(const Dataset& train, const Dataset& test, const PurifyConfig& cfg);

}  // namespace hetero
