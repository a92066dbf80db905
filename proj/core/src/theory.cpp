#include "hetero/theory.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "hetero/error.hpp"
#include "hetero/parallel.hpp"
#include "hetero/stats.hpp"

namespace hetero {
namespace {

void check_enumeration(const SubsetEnumeration& e) {
  if (e.subsets.empty() || e.subsets.size() != e.removed.size()) {
    throw ContractError("theory: empty or inconsistent enumeration");
  }
  if (e.n < 3) throw ContractError("theory: need n >= 3");
}

TheoremCheckReport drop_report(const SubsetEnumeration& e, int k) {
  check_enumeration(e);
  TheoremCheckReport r;
  r.n = e.n;
  r.s = e.s;
  r.k = k;
  r.subsets = e.subsets.size();
  r.base = k == 0 ? e.base.variance : e.base.moment(k);
  CompensatedSum su, sf;
  for (std::size_t i = 0; i < e.subsets.size(); ++i) {
    su.add(e.quantity(i, k, Normalization::u_scaled));
    sf.add(e.quantity(i, k, Normalization::f_scaled));
  }
  const double count = static_cast<double>(e.subsets.size());
  r.lhs_u = r.base - su.value() / count;
  r.lhs_f = r.base - sf.value() / count;
  const double coeff = (k == 0 ? 2.0 : static_cast<double>(k)) * static_cast<double>(e.s) /
                       static_cast<double>(e.n - 2);
  r.rhs_theory = coeff * r.base;
  r.normalization = std::abs(r.lhs_u - r.rhs_theory) <= std::abs(r.lhs_f - r.rhs_theory)
                        ? Normalization::u_scaled
                        : Normalization::f_scaled;
  return r;
}

}  // namespace

const char* to_string(Normalization n) {
  return n == Normalization::u_scaled ? "u_scaled" : "f_scaled";
}

std::vector<std::vector<std::size_t>> enumerate_subsets(std::size_t n, std::size_t s) {
  if (s > n) throw ContractError("enumerate_subsets: s > n");
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> idx(s);
  for (std::size_t i = 0; i < s; ++i) idx[i] = i;
  while (true) {
    out.push_back(idx);
    // Advance the rightmost index that still has room.
    std::size_t i = s;
    while (i > 0 && idx[i - 1] == n - s + (i - 1)) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < s; ++j) idx[j] = idx[j - 1] + 1;
  }
  return out;
}

double SubsetEnumeration::quantity(std::size_t i, int k, Normalization norm) const {
  const MomentReport& m = removed.at(i);
  const double scale = norm == Normalization::u_scaled
                           ? static_cast<double>(n) / static_cast<double>(n - s)
                           : 1.0;
  if (k == 0) return scale * scale * m.variance;
  return std::pow(scale, k) * m.moment(k);
}

SubsetEnumeration enumerate_removals(const Dataset& z, std::size_t s, int k_max,
                                     const TrainConfig& cfg, const TheoryOptions& options) {
  const std::size_t n = z.size();
  if (n < s + 3) throw ContractError("theory: need n - s >= 3");
  if (k_max < 2) throw ContractError("theory: k_max must be >= 2");
  SubsetEnumeration e;
  e.n = n;
  e.s = s;
  const FitResult base_fit = train(z, cfg);
  e.base = moments(InfluenceModel(z, base_fit.params, options.influence).matrix(), k_max);

  const auto rows = enumerate_subsets(n, s);
  if (static_cast<double>(rows.size()) != binomial(n, s)) {
    throw Error("theory: enumeration produced " + std::to_string(rows.size()) + " subsets");
  }
  TrainConfig warm = cfg;
  warm.epochs = 0;
  e.subsets.resize(rows.size());
  e.removed.resize(rows.size());
  parallel_for(rows.size(), options.jobs, [&](std::size_t i) {
    std::vector<PointId> ids;
    for (auto r : rows[i]) ids.push_back(z.ids()[r]);
    try {
      const Dataset rest = z.without_rows(rows[i]);
      const FitResult fit = train(rest, warm, base_fit.params);
      e.removed[i] = moments(InfluenceModel(rest, fit.params, options.influence).matrix(), k_max);
    } catch (const Error& err) {
      std::string m = "theory: removal of {";
      for (std::size_t k = 0; k < ids.size(); ++k) m += (k ? "," : "") + std::to_string(ids[k]);
      throw Error(m + "} failed: " + err.what());
    }
    e.subsets[i] = std::move(ids);
  });
  return e;
}

TheoremCheckReport moment_drop(const SubsetEnumeration& e, int k) {
  if (k < 1 || k > e.base.k_max) throw ContractError("moment_drop: k outside 1..k_max");
  return drop_report(e, k);
}

TheoremCheckReport moment_drop(const Dataset& z, std::size_t s, int k, const TrainConfig& cfg,
                               const TheoryOptions& options) {
  return moment_drop(enumerate_removals(z, s, std::max(2, k), cfg, options), k);
}

TheoremCheckReport variance_drop(const SubsetEnumeration& e) { return drop_report(e, 0); }

TheoremCheckReport variance_drop(const Dataset& z, std::size_t s, const TrainConfig& cfg,
                                 const TheoryOptions& options) {
  return variance_drop(enumerate_removals(z, s, 2, cfg, options));
}

std::string TheoremCheckReport::to_json() const {
  nlohmann::json j;
  j["n"] = n;
  j["s"] = s;
  j["k"] = k;
  j["quantity"] = k == 0 ? "variance" : "moment";
  j["subsets"] = subsets;
  j["base"] = base;
  j["lhs_u_scaled"] = lhs_u;
  j["lhs_f_scaled"] = lhs_f;
  j["rhs_theory"] = rhs_theory;
  j["normalization"] = to_string(normalization);
  j["lhs"] = lhs();
  j["residual"] = residual();
  j["residual_n2"] = residual() * static_cast<double>(n * n);
  return j.dump(2);
}

CorollaryResult corollary_search(const SubsetEnumeration& e, Normalization norm) {
  check_enumeration(e);
  CorollaryResult r;
  r.normalization = norm;
  r.bound = 2.0 * static_cast<double>(e.s) / static_cast<double>(e.n - 2) * e.base.variance;
  CompensatedSum sum;
  std::size_t best = 0;
  for (std::size_t i = 0; i < e.subsets.size(); ++i) {
    const double d = e.base.variance - e.quantity(i, 0, norm);
    r.drops.push_back(d);
    sum.add(d);
    if (d > r.drops[best]) best = i;
  }
  r.best_subset = e.subsets[best];
  r.drop = r.drops[best];
  r.mean_drop = sum.value() / static_cast<double>(r.drops.size());
  return r;
}

CorollaryResult corollary_search(const Dataset& z, std::size_t s, const TrainConfig& cfg,
                                 const TheoryOptions& options, Normalization norm) {
  return corollary_search(enumerate_removals(z, s, 2, cfg, options), norm);
}

std::string CorollaryResult::to_json() const {
  nlohmann::json j;
  j["best_subset"] = best_subset;
  j["drop"] = drop;
  j["mean_drop"] = mean_drop;
  j["bound"] = bound;
  j["normalization"] = to_string(normalization);
  j["drops"] = drops;
  return j.dump(2);
}

double entropy(std::span<const double> fractions) {
  if (fractions.empty()) throw ContractError("entropy: no fractions");
  double total = 0.0;
  for (double p : fractions) {
    if (!(p >= 0.0)) throw ContractError("entropy: negative or NaN fraction");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("entropy: fractions do not sum to 1");
  double h = 0.0;
  for (double p : fractions)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

EntropyReport entropy_from_counts(std::span<const std::size_t> counts) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) throw ContractError("entropy: all block counts are zero");
  EntropyReport r;
  for (auto c : counts) r.fractions.push_back(static_cast<double>(c) / static_cast<double>(total));
  r.entropy = entropy(r.fractions);
  return r;
}

EntropyReport dataset_entropy(const Dataset& data, int num_blocks) {
  if (!data.has_components()) throw ContractError("entropy: dataset has no component column");
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_blocks), 0);
  for (int c : data.components()) {
    if (c < 0 || c >= num_blocks) throw ContractError("entropy: component outside block range");
    ++counts[static_cast<std::size_t>(c)];
  }
  return entropy_from_counts(counts);
}

}  // namespace hetero
