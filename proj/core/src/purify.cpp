#include "hetero/purify.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

#include "hetero/parallel.hpp"
#include "hetero/stats.hpp"

namespace hetero {
namespace {

TrainConfig warm_config(const TrainConfig& cfg) {
  // Newton from the incumbent converges in a few steps; ADAM would only perturb it.
  TrainConfig c = cfg;
  c.epochs = 0;
  return c;
}

bool inflection(const std::vector<TraceRecord>& r) {
  if (r.size() < 4) return false;
  auto second = [&](std::size_t i) {
    return r[i].variance - 2.0 * r[i - 1].variance + r[i - 2].variance;
  };
  const double now = second(r.size() - 1);
  const double before = second(r.size() - 2);
  return now != 0.0 && before != 0.0 && (now > 0.0) != (before > 0.0);
}

}  // namespace

void PurifyConfig::validate(std::size_t train_size) const {
  train.validate();
  if (iterations < 0) throw ConfigError("purify: iterations must be >= 0");
  if (remove_per_iter < 0) throw ConfigError("purify: remove_per_iter must be >= 0");
  if (jobs < 1) throw ConfigError("purify: jobs must be >= 1");
  const auto removed = static_cast<std::size_t>(iterations) * static_cast<std::size_t>(remove_per_iter);
  if (removed >= train_size) {
    throw ConfigError("purify: iterations*remove_per_iter (" + std::to_string(removed) +
                      ") must be below the training set size (" + std::to_string(train_size) + ")");
  }
}

std::size_t PurificationTrace::removed_through(std::size_t i) const {
  std::size_t total = 0;
  for (std::size_t k = 0; k <= i && k < records.size(); ++k) total += records[k].removed_ids.size();
  return total;
}

std::size_t PurificationTrace::best_record() const {
  if (records.empty()) throw ContractError("trace: no records");
  std::size_t best = 0;
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].test_acc > records[best].test_acc) best = i;
  return best;
}

void PurificationTrace::write_csv(std::ostream& out) const {
  out << "iter,removed_ids,variance,train_acc,test_acc\n";
  char buf[96];
  for (const auto& r : records) {
    out << r.iteration << ',';
    for (std::size_t k = 0; k < r.removed_ids.size(); ++k) out << (k ? ";" : "") << r.removed_ids[k];
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g\n", r.variance, r.train_acc, r.test_acc);
    out << buf;
  }
}

std::string PurificationTrace::to_csv() const {
  std::ostringstream s;
  write_csv(s);
  return s.str();
}

TrainedVariance trained_variance(const Dataset& data, const TrainConfig& cfg,
                                 const InfluenceOptions& options,
                                 const std::optional<ModelParams>& warm_start) {
  TrainedVariance out;
  out.fit = warm_start ? train(data, warm_config(cfg), warm_start) : train(data, cfg);
  out.variance = InfluenceModel(data, out.fit.params, options).variance_summary().variance;
  return out;
}

double loo_delta(PointId z_id, const Dataset& a, const TrainConfig& cfg,
                 const InfluenceOptions& options, std::optional<double> base_variance,
                 const std::optional<ModelParams>& warm_start) {
  if (a.size() < 4) throw ContractError("loo_delta: need at least four points");
  if (!a.row_of(z_id)) throw ContractError("loo_delta: id " + std::to_string(z_id) + " not in set");
  try {
    const double base =
        base_variance ? *base_variance : trained_variance(a, cfg, options, warm_start).variance;
    const PointId ids[] = {z_id};
    return base - trained_variance(a.without_ids(ids), cfg, options, warm_start).variance;
  } catch (const Error& e) {
    throw Error("loo_delta(id " + std::to_string(z_id) + "): " + e.what());
  }
}

std::vector<double> influence_delta_estimate(const InfluenceMatrix& x) {
  const auto n = static_cast<Eigen::Index>(x.size());
  if (n < 3) throw ContractError("influence_delta_estimate: need at least three points");
  CompensatedSum s1, s2;
  Eigen::VectorXd r1 = Eigen::VectorXd::Zero(n), r2 = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double v = x.values(i, j);
      r1(i) += v;
      r2(i) += v * v;
      if (j > i) {
        s1.add(v);
        s2.add(v * v);
      }
    }
  }
  const double pairs = binomial(static_cast<std::size_t>(n), 2);
  const double pairs_less = binomial(static_cast<std::size_t>(n - 1), 2);
  const double m1 = s1.value() / pairs;
  const double v_all = s2.value() / pairs - m1 * m1;
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a1 = (s1.value() - r1(i)) / pairs_less;
    const double a2 = (s2.value() - r2(i)) / pairs_less;
    out[static_cast<std::size_t>(i)] = v_all - (a2 - a1 * a1);
  }
  return out;
}

std::vector<double> influence_delta_estimate(const Dataset& a, const FitResult& fit,
                                             const InfluenceOptions& options) {
  return influence_delta_estimate(InfluenceModel(a, fit.params, options).matrix());
}

PurificationTrace purify(const Dataset& train_set, const Dataset& test, const PurifyConfig& cfg) {
  cfg.validate(train_set.size());
  if (train_set.dim() != test.dim()) throw ContractError("purify: train/test dimension mismatch");
  TrainConfig tcfg = cfg.train;
  tcfg.seed = cfg.seed;

  PurificationTrace trace;
  Dataset current = train_set;
  TrainedVariance state;
  auto record = [&](int iteration, std::vector<PointId> removed) {
    trace.records.push_back({iteration, std::move(removed), state.variance,
                             predict_accuracy(current, state.fit.params),
                             predict_accuracy(test, state.fit.params)});
  };

  int iteration = 0;
  try {
    state = trained_variance(current, tcfg, cfg.influence);
    record(0, {});
    for (iteration = 1; iteration <= cfg.iterations; ++iteration) {
      std::vector<PointId> removed;
      if (cfg.remove_per_iter > 0) {
        const std::size_t n = current.size();
        std::vector<double> delta(n);
        if (cfg.method == PurifyMethod::influence_approx) {
          delta = influence_delta_estimate(current, state.fit, cfg.influence);
        } else {
          std::optional<ModelParams> warm;
          if (cfg.warm_start) warm = state.fit.params;
          parallel_for(n, cfg.jobs, [&](std::size_t i) {
            delta[i] = loo_delta(current.ids()[i], current, tcfg, cfg.influence, state.variance, warm);
          });
        }
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        const auto& ids = current.ids();
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          if (delta[a] != delta[b]) return delta[a] > delta[b];
          return ids[a] < ids[b];
        });
        for (int k = 0; k < cfg.remove_per_iter; ++k) removed.push_back(ids[order[static_cast<std::size_t>(k)]]);
        std::sort(removed.begin(), removed.end());
        current = current.without_ids(removed);
        std::optional<ModelParams> warm;
        if (cfg.warm_start) warm = state.fit.params;
        state = trained_variance(current, tcfg, cfg.influence, warm);
      }
      record(iteration, std::move(removed));
      if (cfg.stop_at_inflection && inflection(trace.records)) {
        trace.stopped_early = true;
        break;
      }
    }
  } catch (const Error& e) {
    throw PurifyAborted("purify: iteration " + std::to_string(iteration) + " failed: " + e.what(),
                        std::move(trace));
  }
  return trace;
}

}  // namespace hetero
