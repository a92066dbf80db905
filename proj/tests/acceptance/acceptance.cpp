// One line per acceptance criterion. Tolerances are fixed here and nowhere else.
//
// Environment:
//   HETERO_EMNIST_DIR       directory with EMNIST IDX files; criteria 9 and 10 are skipped without it
//   HETERO_ACCEPTANCE_COLD  set to 1 to run criterion 8 with cold-start retraining (slow)
//   HETERO_ACCEPTANCE_ONLY  comma-separated criterion numbers to run

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hetero/data_io.hpp"
#include "hetero/experiment.hpp"
#include "hetero/influence.hpp"
#include "hetero/purify.hpp"
#include "hetero/rng.hpp"
#include "hetero/stats.hpp"
#include "hetero/synthetic.hpp"
#include "hetero/theory.hpp"

using namespace hetero;
namespace fs = std::filesystem;

namespace tol {
// 1, 2: influence and its identities.
constexpr int kInstances = 20;
constexpr std::size_t kInstanceSize = 50;
constexpr int kPairsPerInstance = 6;
constexpr double kFdStep = 1e-4;
constexpr double kFdRelative = 1e-3;
constexpr double kMeanIdentity = 1e-8;
constexpr double kC1Seconds = 120.0;
// 3.
constexpr std::size_t kCrossAverageSize = 30;
constexpr double kCrossAverage = 1e-8;
// 4, 5. Relative band for lhs/V around 2/(n-2), and the calibration constant
// frozen from the n=60 run (largest |residual| * n^2 observed there, rounded up).
const std::map<std::size_t, double> kRatioBand{{20, 0.50}, {30, 0.4125}, {40, 0.325}, {60, 0.15}};
constexpr double kCHat = 5.1;
// Fitted log-log slope of |residual| against n must be at most this.
constexpr double kDecaySlope = -1.5;
constexpr double kC4Seconds = 600.0;
// 6.
constexpr std::size_t kSweepTotal = 600;
constexpr int kSweepPoints = 11;
constexpr int kReplicates = 5;
constexpr double kPureAccuracy = 0.90;
constexpr double kC6Seconds = 900.0;
// 8.
constexpr double kPurifyAccuracy = 0.86;
constexpr double kPurifyAccuracyTol = 0.05;
constexpr std::size_t kRemovedLow = 150, kRemovedHigh = 230;
constexpr double kC8WarmSeconds = 1200.0, kC8ColdSeconds = 7200.0;
constexpr double kSmokeGain = 0.05;
constexpr double kSmokeSeconds = 600.0;
// 9, 10.
constexpr double kEmnistAccuracy = 0.957;
constexpr double kEmnistAccuracyTol = 0.03;
constexpr int kAllowedInversions = 1;
// 11.
constexpr double kEntropySpearman = 0.8;
// Shared model settings: the regularized optimum the identities are checked at.
constexpr double kRidge = 1e-4;
constexpr double kGradTol = 1e-12;
}  // namespace tol

namespace {

constexpr std::uint64_t kSeed = 20240917;

int failures = 0;

void report(const std::string& id, const std::string& status, const std::string& detail) {
  if (status == "FAIL") ++failures;
  std::printf("[%s] %s: %s\n", status.c_str(), id.c_str(), detail.c_str());
  std::fflush(stdout);
}

void verdict(const std::string& id, bool pass, const std::string& detail) {
  report(id, pass ? "PASS" : "FAIL", detail);
}

void info(const std::string& id, const std::string& detail) { report(id, "INFO", detail); }

template <typename... Args>
std::string fmt(const char* pattern, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

// Runtime budgets are judged on process CPU time. Every step here runs on one
// thread, and CPU time is immune to a contended host; wall time is printed too.
class Timer {
 public:
  double seconds() const { return cpu_now() - cpu_start_; }
  double wall() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start_).count();
  }

 private:
  static double cpu_now() {
    timespec ts{};
    clock_gettime(CLOCK_PROCESS_CPUTIME_ID, &ts);
    return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
  }
  double cpu_start_ = cpu_now();
  std::chrono::steady_clock::time_point wall_start_ = std::chrono::steady_clock::now();
};

TrainConfig tight() {
  TrainConfig c;
  c.ridge = tol::kRidge;
  c.grad_tol = tol::kGradTol;
  c.max_newton_iters = 200;
  return c;
}

TrainConfig experiment_train() {
  TrainConfig c;
  c.ridge = tol::kRidge;
  return c;
}

const InfluenceOptions kPerPoint{RidgeAttribution::per_point};

Dataset sd2(std::size_t a1, std::size_t a2, std::uint64_t seed) {
  const std::size_t counts[] = {a1, a2};
  return generate(builtin_mixture(counts, seed));
}

bool wanted(int criterion) {
  const char* only = std::getenv("HETERO_ACCEPTANCE_ONLY");
  if (only == nullptr || *only == '\0') return true;
  std::stringstream ss(only);
  std::string item;
  while (std::getline(ss, item, ','))
    if (std::atoi(item.c_str()) == criterion) return true;
  return false;
}

// ------------------------------------------------------------------ 1, 2

void influence_suite() {
  const Timer timer;
  double worst_fd = 0.0, worst_mean = 0.0;
  bool symmetric = true;
  int pairs = 0;
  for (int inst = 0; inst < tol::kInstances; ++inst) {
    Rng rng(mix_seed(kSeed, 100 + static_cast<std::uint64_t>(inst)));
    const std::size_t a1 = 10 + rng.uniform_index(31);
    const Dataset z = sd2(a1, tol::kInstanceSize - a1, rng.next());
    const auto cfg = tight();
    const FitResult fit = train(z, cfg);
    const InfluenceModel model(z, fit.params, kPerPoint);
    const auto x = model.matrix();
    symmetric = symmetric && x.values == x.values.transpose();
    const double n = static_cast<double>(z.size());
    const double identity = -x.values.trace() / (n * (n - 1.0));
    worst_mean = std::max(worst_mean, std::abs(moments(x, 2).moment(1) - identity));
    for (int p = 0; p < tol::kPairsPerInstance; ++p) {
      const std::size_t i = rng.uniform_index(z.size());
      const std::size_t j = p == 0 ? i : rng.uniform_index(z.size());
      const double fd = influence_fd_oracle(z.point(i), z.point(j), z, fit, cfg, tol::kFdStep, kPerPoint);
      const double an = model.influence(i, j);
      worst_fd = std::max(worst_fd, std::abs(fd - an) / std::abs(an));
      ++pairs;
    }
  }
  const double secs = timer.seconds(), wall = timer.wall();
  if (wanted(1))
    verdict("C1 influence vs retraining finite difference",
            worst_fd <= tol::kFdRelative && secs <= tol::kC1Seconds,
            fmt("%d instances, %d pairs, max relative error %.3g (tol %.0e), %.1f s cpu (limit %.0f s), %.1f s wall",
                tol::kInstances, pairs, worst_fd, tol::kFdRelative, secs, tol::kC1Seconds, wall));
  if (wanted(2))
    verdict("C2 symmetry and mean identity", symmetric && worst_mean <= tol::kMeanIdentity,
            fmt("exact symmetry %s, max |E[X] - identity| %.3g (tol %.0e)", symmetric ? "yes" : "no",
                worst_mean, tol::kMeanIdentity));
}

// ------------------------------------------------------------------ 3

void cross_average() {
  const Dataset z = sd2(tol::kCrossAverageSize / 2, tol::kCrossAverageSize / 2, mix_seed(kSeed, 3));
  const FitResult fit = train(z, tight());
  const InfluenceModel model(z, fit.params, kPerPoint);
  const CrossDerivatives cd(model);
  const auto x = model.matrix();
  const std::size_t n = z.size();
  double dev_plus = 0.0, dev_minus = 0.0, dev_exact = 0.0, scale = 0.0;
  for (std::size_t zi = 0; zi < n; ++zi)
    for (std::size_t zp = 0; zp < n; ++zp) {
      double closed = 0.0, exact = 0.0;
      for (std::size_t y = 0; y < n; ++y) {
        closed += cd.closed_form(zp, zi, y);
        exact += cd.exact(zp, zi, y);
      }
      closed /= static_cast<double>(n);
      exact /= static_cast<double>(n);
      const double xv = x.values(static_cast<Eigen::Index>(zi), static_cast<Eigen::Index>(zp));
      dev_plus = std::max(dev_plus, std::abs(closed - xv));
      dev_minus = std::max(dev_minus, std::abs(closed + xv));
      dev_exact = std::max(dev_exact, std::abs(exact + xv));
      scale = std::max(scale, std::abs(xv));
    }
  verdict("C3 cross-derivative average equals the influence", dev_plus <= tol::kCrossAverage,
          fmt("n=%zu, max |avg - X| %.3g (tol %.0e), max |X| %.3g", n, dev_plus, tol::kCrossAverage, scale));
  info("C3 diagnostic", fmt("max |avg + X| %.3g for the closed form, %.3g with the third-order term",
                            dev_minus, dev_exact));
}

// ------------------------------------------------------------------ 4, 5

void theorem_grid() {
  const Timer timer;
  std::vector<double> ns, residuals;
  bool bands = true, bounded = true, corollary = true;
  std::ostringstream rows, corollary_rows;
  for (const auto& [n, band] : tol::kRatioBand) {
    const Dataset z = sd2(n / 2, n - n / 2, mix_seed(kSeed, 400 + n));
    const auto e = enumerate_removals(z, 1, 2, tight());
    const auto rep = variance_drop(e);
    const double v = e.base.variance;
    const double theory = 2.0 / (static_cast<double>(n) - 2.0);
    const double ratio = rep.lhs() / v;
    const bool in_band = std::abs(ratio - theory) <= band * theory;
    const double scaled = std::abs(rep.residual()) * static_cast<double>(n * n);
    bands = bands && in_band;
    bounded = bounded && scaled <= tol::kCHat;
    ns.push_back(static_cast<double>(n));
    residuals.push_back(std::abs(rep.residual()));
    rows << fmt(" n=%zu lhs/V=%.4f theory=%.4f band=+-%.0f%% (%s) |res|n^2=%.3g [%s];", n, ratio, theory,
                100 * band, to_string(rep.normalization), scaled, in_band ? "ok" : "out");
    const auto c = corollary_search(e);
    const double need = c.bound - tol::kCHat / static_cast<double>(n * n);
    corollary = corollary && c.drop >= need;
    corollary_rows << fmt(" n=%zu drop=%.3g bound=%.3g need>=%.3g;", n, c.drop, c.bound, need);
  }
  // Least-squares slope of log|residual| on log n.
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    mx += std::log(ns[i]) / static_cast<double>(ns.size());
    my += std::log(residuals[i]) / static_cast<double>(ns.size());
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    sxy += (std::log(ns[i]) - mx) * (std::log(residuals[i]) - my);
    sxx += (std::log(ns[i]) - mx) * (std::log(ns[i]) - mx);
  }
  const double slope = sxy / sxx;
  const double secs = timer.seconds();
  if (wanted(4))
    verdict("C4 variance drop at desk scale",
            bands && bounded && slope <= tol::kDecaySlope && secs <= tol::kC4Seconds,
            fmt("%s residual slope %.2f (need <= %.1f), c_hat %.3g, %.1f s cpu", rows.str().c_str(), slope,
                tol::kDecaySlope, tol::kCHat, secs));
  if (wanted(5)) verdict("C5 corollary by singleton search", corollary, corollary_rows.str());
}

// ------------------------------------------------------------------ 6, 7, 11

SweepConfig sweep_config() {
  SweepConfig c;
  c.replicates = tol::kReplicates;
  c.seed = mix_seed(kSeed, 6);
  c.train = experiment_train();
  return c;
}

std::vector<SweepAggregate> sd2_sweep(double& secs) {
  const Timer timer;
  const auto grid = sd2_grid(tol::kSweepTotal, tol::kSweepPoints);
  const auto agg = mixture_sweep(grid, sweep_config()).aggregate();
  secs = timer.seconds();
  return agg;
}

void sd2_surface(const std::vector<SweepAggregate>& agg, double secs) {
  std::size_t vmax = 0, amin = 0;
  std::ostringstream cells;
  for (std::size_t i = 0; i < agg.size(); ++i) {
    if (agg[i].variance_mean > agg[vmax].variance_mean) vmax = i;
    if (agg[i].test_acc_mean < agg[amin].test_acc_mean) amin = i;
    cells << fmt(" %s:V=%.3g,acc=%.3f", agg[i].composition.c_str(), agg[i].variance_mean, agg[i].test_acc_mean);
  }
  const std::size_t mid = agg.size() / 2;
  auto near = [&](std::size_t i) { return (i > mid ? i - mid : mid - i) <= 1; };
  const double lo = std::min(agg.front().test_acc_mean, agg.back().test_acc_mean);
  verdict("C6 SD-2 composition sweep",
          near(vmax) && near(amin) && lo >= tol::kPureAccuracy && secs <= tol::kC6Seconds,
          fmt("max V at %s, min accuracy at %s, pure accuracy %.3f / %.3f (need >= %.2f), %.1f s cpu;",
              agg[vmax].composition.c_str(), agg[amin].composition.c_str(), agg.front().test_acc_mean,
              agg.back().test_acc_mean, tol::kPureAccuracy, secs) +
              cells.str());
}

void sd3_surface() {
  const auto grid = sd3_grid(tol::kSweepTotal, 100);
  auto cfg = sweep_config();
  cfg.seed = mix_seed(kSeed, 7);
  const auto agg = mixture_sweep(grid, cfg).aggregate();
  std::size_t best = 0;
  for (std::size_t i = 0; i < agg.size(); ++i)
    if (agg[i].variance_mean > agg[best].variance_mean) best = i;
  double dist = 0.0;
  for (double c : agg[best].coords) dist = std::max(dist, std::abs(c - 200.0));
  verdict("C7 SD-3 variance surface", dist <= 100.0,
          fmt("max mean V %.4g at %s (equal mix or one step away required)", agg[best].variance_mean,
              agg[best].composition.c_str()));
}

void entropy_checks(const std::vector<SweepAggregate>& agg) {
  const std::vector<double> one{1.0}, thirds{1.0 / 3, 1.0 / 3, 1.0 / 3}, split{0.7, 0.3};
  const bool units = entropy(one) == 0.0 && std::abs(entropy(thirds) - std::log(3.0)) <= 1e-15 &&
                     std::abs(entropy(split) - 0.6108643020548935) <= 1e-15;
  std::vector<double> v, h;
  for (const auto& a : agg) {
    v.push_back(a.variance_mean);
    h.push_back(a.entropy);
  }
  const double rho = spearman(v, h);
  verdict("C11 entropy metric", units && rho >= tol::kEntropySpearman,
          fmt("unit values %s, Spearman(mean V, entropy) over the SD-2 sweep %.3f (need >= %.1f)",
              units ? "exact" : "wrong", rho, tol::kEntropySpearman));
}

// ------------------------------------------------------------------ 8

void purification_full() {
  const bool cold = [] {
    const char* e = std::getenv("HETERO_ACCEPTANCE_COLD");
    return e != nullptr && std::string(e) == "1";
  }();
  const std::size_t counts[] = {700, 300}, test_counts[] = {1000};
  const Dataset tr = generate(builtin_mixture(counts, mix_seed(kSeed, 8)));
  const Dataset te = generate(builtin_mixture(test_counts, mix_seed(kSeed, 9)));
  PurifyConfig cfg;
  cfg.train = experiment_train();
  cfg.warm_start = !cold;
  const Timer timer;
  const auto t = purify(tr, te, cfg);
  const double secs = timer.seconds(), wall = timer.wall();
  const std::size_t best = t.best_record();
  const double acc = t.records[best].test_acc;
  const std::size_t removed = t.removed_through(best);
  const bool variance_down = t.records[5].variance < t.records[0].variance;
  const double limit = cold ? tol::kC8ColdSeconds : tol::kC8WarmSeconds;
  std::size_t from_a2 = 0;
  for (const auto& r : t.records)
    for (auto id : r.removed_ids) from_a2 += id >= 700;
  verdict("C8 SD-2 purification",
          std::abs(acc - tol::kPurifyAccuracy) <= tol::kPurifyAccuracyTol && removed >= tol::kRemovedLow &&
              removed <= tol::kRemovedHigh && variance_down && secs <= limit,
          fmt("%s start, max test accuracy %.3f (need %.2f +- %.2f) at %zu removed (need %zu..%zu), "
              "V[5]/V[0] = %.3f, %zu of %zu removed from A2, %.0f s cpu (limit %.0f s), %.0f s wall",
              cold ? "cold" : "warm", acc, tol::kPurifyAccuracy, tol::kPurifyAccuracyTol, removed,
              tol::kRemovedLow, tol::kRemovedHigh, t.records[5].variance / t.records[0].variance, from_a2,
              t.removed_through(t.records.size() - 1), secs, limit, wall));
}

void purification_smoke() {
  const std::size_t counts[] = {210, 90}, test_counts[] = {1000};
  const Dataset tr = generate(builtin_mixture(counts, mix_seed(kSeed, 81)));
  const Dataset te = generate(builtin_mixture(test_counts, mix_seed(kSeed, 82)));
  PurifyConfig cfg;
  cfg.iterations = 10;
  cfg.train = experiment_train();
  const Timer timer;
  const auto t = purify(tr, te, cfg);
  const double secs = timer.seconds(), wall = timer.wall();
  const double gain = t.records[t.best_record()].test_acc - t.records[0].test_acc;
  verdict("C8 smoke (n=300, 10 iterations, cold start)", gain >= tol::kSmokeGain && secs <= tol::kSmokeSeconds,
          fmt("accuracy %.3f -> best %.3f, gain %.3f (need >= %.2f), %.1f s cpu (limit %.0f s), %.1f s wall",
              t.records[0].test_acc, t.records[t.best_record()].test_acc, gain, tol::kSmokeGain, secs,
              tol::kSmokeSeconds, wall));
}

// ------------------------------------------------------------------ 9, 10

std::optional<fs::path> find_file(const fs::path& dir, const std::string& part) {
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.find(part) != std::string::npos) return entry.path();
  }
  return std::nullopt;
}

void emnist() {
  const char* dir_env = std::getenv("HETERO_EMNIST_DIR");
  if (dir_env == nullptr || *dir_env == '\0') {
    if (wanted(9)) report("C9 EMNIST purification", "SKIP", "HETERO_EMNIST_DIR not set");
    if (wanted(10)) report("C10 EMNIST error-rate sweep", "SKIP", "HETERO_EMNIST_DIR not set");
    return;
  }
  const fs::path dir(dir_env);
  const auto tri = find_file(dir, "train-images"), trl = find_file(dir, "train-labels");
  const auto tei = find_file(dir, "test-images"), tel = find_file(dir, "test-labels");
  if (!tri || !trl || !tei || !tel) {
    if (wanted(9)) verdict("C9 EMNIST purification", false, "train/test image and label files not found in " + dir.string());
    if (wanted(10)) verdict("C10 EMNIST error-rate sweep", false, "files not found");
    return;
  }
  IdxSelection train_sel{{4, 8}, 300, mix_seed(kSeed, 90)};
  IdxSelection test_sel{{4, 8}, 500, mix_seed(kSeed, 91)};
  const Dataset clean = load_idx(*tri, *trl, train_sel);
  const Dataset test = load_idx(*tei, *tel, test_sel);

  if (wanted(9)) {
    const auto noisy = mislabel(clean, 0.30, mix_seed(kSeed, 92));
    PurifyConfig cfg;
    cfg.train = experiment_train();
    cfg.warm_start = true;
    const auto t = purify(noisy.data, test, cfg);
    const double acc = t.records[t.best_record()].test_acc;
    verdict("C9 EMNIST purification", std::abs(acc - tol::kEmnistAccuracy) <= tol::kEmnistAccuracyTol,
            fmt("max test accuracy %.3f (need %.3f +- %.2f) at %zu removed", acc, tol::kEmnistAccuracy,
                tol::kEmnistAccuracyTol, t.removed_through(t.best_record())));
  }
  if (wanted(10)) {
    SweepConfig cfg;
    cfg.replicates = tol::kReplicates;
    cfg.seed = mix_seed(kSeed, 10);
    cfg.train = experiment_train();
    const std::vector<double> rates{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
    const auto agg = error_rate_sweep(clean, test, rates, cfg).aggregate();
    int v_inv = 0, a_inv = 0;
    for (std::size_t i = 1; i < agg.size(); ++i) {
      v_inv += agg[i].variance_mean < agg[i - 1].variance_mean;
      a_inv += agg[i].test_acc_mean > agg[i - 1].test_acc_mean;
    }
    verdict("C10 EMNIST error-rate sweep", v_inv <= tol::kAllowedInversions && a_inv <= tol::kAllowedInversions,
            fmt("variance inversions %d, accuracy inversions %d (allowed %d each)", v_inv, a_inv,
                tol::kAllowedInversions));
  }
}

}  // namespace

int main() {
  std::printf("acceptance: ridge %.0e, gradient tolerance %.0e, seed %llu\n", tol::kRidge, tol::kGradTol,
              static_cast<unsigned long long>(kSeed));
  const std::vector<std::pair<std::set<int>, std::function<void()>>> steps{
      {{1, 2}, influence_suite},
      {{3}, cross_average},
      {{4, 5}, theorem_grid},
      {{6, 11},
       [] {
         double secs = 0.0;
         const auto agg = sd2_sweep(secs);
         if (wanted(6)) sd2_surface(agg, secs);
         if (wanted(11)) entropy_checks(agg);
       }},
      {{7}, sd3_surface},
      {{8},
       [] {
         purification_smoke();
         purification_full();
       }},
      {{9, 10}, emnist},
  };
  for (const auto& [ids, step] : steps) {
    if (std::none_of(ids.begin(), ids.end(), wanted)) continue;
    try {
      step();
    } catch (const std::exception& e) {
      for (int id : ids) verdict("C" + std::to_string(id), false, std::string("aborted: ") + e.what());
    }
  }
  std::printf("acceptance: %d failing\n", failures);
  return failures == 0 ? 0 : 1;
}
