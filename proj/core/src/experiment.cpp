#include "hetero/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "hetero/error.hpp"
#include "hetero/parallel.hpp"
#include "hetero/rng.hpp"
#include "hetero/stats.hpp"
#include "hetero/theory.hpp"

namespace hetero {
namespace {

std::string join_counts(const Composition& c) {
  std::string s;
  for (std::size_t i = 0; i < c.size(); ++i) s += (i ? "/" : "") + std::to_string(c[i]);
  return s;
}

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string coords_header(std::size_t count, bool rate) {
  if (rate) return "rate";
  std::string s;
  for (std::size_t i = 0; i < count; ++i) s += (i ? ",a" : "a") + std::to_string(i + 1);
  return s;
}

// Error text goes into a CSV cell.
std::string cell_safe(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

double variance_of(const Dataset& data, const FitResult& fit, const InfluenceOptions& opts) {
  return InfluenceModel(data, fit.params, opts).variance_summary().variance;
}

}  // namespace

std::vector<Composition> sd2_grid(std::size_t total, int points) {
  if (points < 2) throw ContractError("sd2_grid: need at least two points");
  std::vector<Composition> grid;
  for (int i = 0; i < points; ++i) {
    const auto a2 = static_cast<std::size_t>(
        std::llround(static_cast<double>(total) * i / static_cast<double>(points - 1)));
    grid.push_back({total - a2, a2});
  }
  return grid;
}

std::vector<Composition> sd3_grid(std::size_t total, std::size_t step) {
  if (step == 0 || total % step != 0) throw ContractError("sd3_grid: step must divide total");
  std::vector<Composition> grid;
  for (std::size_t a1 = total + step; a1-- > 0;) {
    if (a1 % step) continue;
    for (std::size_t a2 = 0; a1 + a2 <= total; a2 += step) grid.push_back({a1, a2, total - a1 - a2});
  }
  return grid;
}

std::vector<SweepAggregate> SweepResult::aggregate() const {
  std::vector<SweepAggregate> out;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<double>> vars, accs;
  for (const auto& r : rows) {
    auto [it, fresh] = index.emplace(r.composition, out.size());
    if (fresh) {
      out.push_back({r.composition, r.coords, 0, 0, 0, 0, 0, r.entropy});
      vars.emplace_back();
      accs.emplace_back();
    }
    if (!r.ok()) continue;
    vars[it->second].push_back(r.variance);
    accs[it->second].push_back(r.test_acc);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].replicates_ok = static_cast<int>(vars[i].size());
    if (vars[i].empty()) {
      out[i].variance_mean = out[i].test_acc_mean = std::nan("");
      continue;
    }
    out[i].variance_mean = mean(vars[i]);
    out[i].variance_std = stddev(vars[i]);
    out[i].test_acc_mean = mean(accs[i]);
    out[i].test_acc_std = stddev(accs[i]);
  }
  return out;
}

void SweepResult::write_csv(std::ostream& out) const {
  const bool rate = !rows.empty() && rows.front().composition.rfind("r=", 0) == 0;
  out << "composition," << coords_header(rows.empty() ? 0 : rows.front().coords.size(), rate)
      << ",replicate,variance,test_acc,entropy,error\n";
  for (const auto& r : rows) {
    out << r.composition;
    for (double c : r.coords) out << ',' << g17(c);
    out << ',' << r.replicate << ',' << g17(r.variance) << ',' << g17(r.test_acc) << ','
        << g17(r.entropy) << ',' << r.error << '\n';
  }
}

void SweepResult::write_aggregate_csv(std::ostream& out) const {
  const auto agg = aggregate();
  const bool rate = !agg.empty() && agg.front().composition.rfind("r=", 0) == 0;
  out << "composition," << coords_header(agg.empty() ? 0 : agg.front().coords.size(), rate)
      << ",replicates_ok,variance_mean,variance_std,test_acc_mean,test_acc_std,entropy\n";
  for (const auto& a : agg) {
    out << a.composition;
    for (double c : a.coords) out << ',' << g17(c);
    out << ',' << a.replicates_ok << ',' << g17(a.variance_mean) << ',' << g17(a.variance_std)
        << ',' << g17(a.test_acc_mean) << ',' << g17(a.test_acc_std) << ',' << g17(a.entropy)
        << '\n';
  }
}

SweepResult mixture_sweep(std::span<const Composition> grid, const SweepConfig& cfg) {
  if (cfg.replicates < 1) throw ConfigError("sweep: replicates must be >= 1");
  cfg.train.validate();
  const auto reps = static_cast<std::size_t>(cfg.replicates);
  SweepResult result;
  result.rows.resize(grid.size() * reps);
  parallel_for(result.rows.size(), cfg.jobs, [&](std::size_t job) {
    const std::size_t cell = job / reps;
    const std::size_t rep = job % reps;
    const Composition& counts = grid[cell];
    SweepRow& row = result.rows[job];
    row.composition = join_counts(counts);
    for (auto c : counts) row.coords.push_back(static_cast<double>(c));
    row.replicate = static_cast<int>(rep);
    row.entropy = entropy_from_counts(counts).entropy;
    try {
      const std::uint64_t seed = mix_seed(mix_seed(cfg.seed, cell), rep);
      const Dataset data = generate(builtin_mixture(counts, seed, cfg.encoding));
      SplitSpec sp = cfg.split;
      sp.seed = mix_seed(seed, 1);
      const auto [train_set, test_set] = split(data, sp);
      TrainConfig tc = cfg.train;
      tc.seed = mix_seed(seed, 2);
      const FitResult fit = train(train_set, tc);
      row.variance = variance_of(train_set, fit, cfg.influence);
      row.test_acc = predict_accuracy(test_set, fit.params);
    } catch (const Error& e) {
      row.error = cell_safe(e.what());
    }
  });
  return result;
}

SweepResult error_rate_sweep(const Dataset& train_set, const Dataset& test,
                             std::span<const double> rates, const SweepConfig& cfg) {
  if (cfg.replicates < 1) throw ConfigError("sweep: replicates must be >= 1");
  cfg.train.validate();
  const auto reps = static_cast<std::size_t>(cfg.replicates);
  SweepResult result;
  result.rows.resize(rates.size() * reps);
  parallel_for(result.rows.size(), cfg.jobs, [&](std::size_t job) {
    const std::size_t cell = job / reps;
    const std::size_t rep = job % reps;
    const double r = rates[cell];
    SweepRow& row = result.rows[job];
    row.composition = "r=" + g17(r);
    row.coords = {r};
    row.replicate = static_cast<int>(rep);
    try {
      const std::uint64_t seed = mix_seed(mix_seed(cfg.seed, cell), rep);
      const MislabelResult noisy = mislabel(train_set, r, seed);
      const std::size_t bad = noisy.corrupted_ids.size();
      const std::size_t counts[] = {train_set.size() - bad, bad};
      row.entropy = entropy_from_counts(counts).entropy;
      TrainConfig tc = cfg.train;
      tc.seed = mix_seed(seed, 2);
      const FitResult fit = train(noisy.data, tc);
      row.variance = variance_of(noisy.data, fit, cfg.influence);
      row.test_acc = predict_accuracy(test, fit.params);
    } catch (const Error& e) {
      row.error = cell_safe(e.what());
    }
  });
  return result;
}

}  // namespace hetero
