#include "hetero_cli/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "hetero/data_io.hpp"
#include "hetero/error.hpp"
#include "hetero/experiment.hpp"
#include "hetero/influence.hpp"
#include "hetero/purify.hpp"
#include "hetero/rng.hpp"
#include "hetero/synthetic.hpp"
#include "hetero/theory.hpp"
#include "hetero_cli/config.hpp"

namespace hetero::cli {
namespace {

namespace fs = std::filesystem;

// A check that ran to completion but missed its tolerance.
class VerificationFailure : public Error {
 public:
  using Error::Error;
};

struct Context {
  Json config;
  fs::path out_dir;
  int jobs = 1;
  std::ostream* out = nullptr;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  return f;
}

bool wants(const Context& ctx, const std::string& format) {
  for (const auto& f : ctx.config["output"]["formats"])
    if (f == format) return true;
  return false;
}

// ---------------------------------------------------------------- config -> library types

TrainConfig train_config(const Json& t) {
  TrainConfig c;
  c.learning_rate = t["learning_rate"].get<double>();
  c.batch_size = t["batch_size"].get<int>();
  c.epochs = t["epochs"].get<int>();
  c.ridge = t["ridge"].get<double>();
  c.grad_tol = t["grad_tol"].get<double>();
  c.newton_refine = t["newton_refine"].get<bool>();
  c.max_newton_iters = t["max_newton_iters"].get<int>();
  c.seed = t["seed"].get<std::uint64_t>();
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

InfluenceOptions influence_options(const Json& j) {
  InfluenceOptions o;
  const auto mode = j["ridge_attribution"].get<std::string>();
  if (mode == "objective") {
    o.ridge = RidgeAttribution::objective;
  } else if (mode == "per_point") {
    o.ridge = RidgeAttribution::per_point;
  } else {
    throw ConfigError("influence.ridge_attribution must be objective or per_point");
  }
  o.memory_budget_bytes = j["memory_budget_mb"].get<std::size_t>() << 20;
  return o;
}

Encoding encoding_of(const Json& data) {
  const auto e = data["encoding"].get<std::string>();
  if (e == "one_hot") return Encoding::one_hot;
  if (e == "integer") return Encoding::integer;
  throw ConfigError("data.encoding must be one_hot or integer");
}

std::vector<SyntheticDistribution> distributions_of(const Json& data) {
  const auto path = data["distributions"].get<std::string>();
  if (path.empty()) return builtin_distributions();
  return parse_distributions(read_text(path));
}

MixtureSpec mixture_of(const Json& data, const Json& counts_json, std::uint64_t seed) {
  const auto dists = distributions_of(data);
  const auto counts = counts_json.get<std::vector<std::size_t>>();
  if (counts.empty()) throw ConfigError("data.counts must not be empty");
  if (counts.size() > dists.size()) {
    throw ConfigError("data.counts has " + std::to_string(counts.size()) + " entries but only " +
                      std::to_string(dists.size()) + " distributions are defined");
  }
  MixtureSpec spec;
  spec.seed = seed;
  spec.encoding = encoding_of(data);
  for (std::size_t i = 0; i < counts.size(); ++i) spec.components.push_back({dists[i], counts[i]});
  return spec;
}

IdxSelection selection_of(const Json& data, std::size_t per_class) {
  IdxSelection s;
  s.classes = data["classes"].get<std::vector<int>>();
  s.per_class = per_class;
  s.seed = data["seed"].get<std::uint64_t>();
  return s;
}

struct LoadedData {
  Dataset train;
  std::optional<Dataset> test;
  std::vector<PointId> corrupted;
};

// Training set and, when `need_test`, a test set (given or split off).
LoadedData load_data(const Context& ctx, bool need_test) {
  const Json& d = ctx.config["data"];
  const auto source = d["source"].get<std::string>();
  const auto seed = d["seed"].get<std::uint64_t>();
  LoadedData ld;
  if (source == "synthetic") {
    ld.train = generate(mixture_of(d, d["counts"], seed));
    if (!d["test_counts"].empty()) ld.test = generate(mixture_of(d, d["test_counts"], mix_seed(seed, 1000)));
  } else if (source == "csv") {
    const auto path = d["path"].get<std::string>();
    if (path.empty()) throw ConfigError("data.path is required for source csv");
    const int classes = d["num_classes"].get<int>();
    ld.train = read_csv(fs::path(path), classes);
    const auto test_path = d["test_path"].get<std::string>();
    if (!test_path.empty()) {
      ld.test = read_csv(fs::path(test_path), classes ? classes : ld.train.num_classes());
    }
  } else if (source == "idx") {
    const auto images = d["images"].get<std::string>();
    const auto labels = d["labels"].get<std::string>();
    if (images.empty() || labels.empty()) {
      throw ConfigError("data.images and data.labels are required for source idx "
                        "(EMNIST files are user-supplied)");
    }
    ld.train = load_idx(images, labels, selection_of(d, d["per_class"].get<std::size_t>()));
    const auto ti = d["test_images"].get<std::string>();
    const auto tl = d["test_labels"].get<std::string>();
    if (!ti.empty() && !tl.empty()) {
      ld.test = load_idx(ti, tl, selection_of(d, d["test_per_class"].get<std::size_t>()));
    }
  } else {
    throw ConfigError("data.source must be synthetic, csv or idx");
  }
  if (need_test && !ld.test) {
    SplitSpec sp;
    sp.train_fraction = d["split_fraction"].get<double>();
    sp.stratified = d["stratified"].get<bool>();
    sp.seed = mix_seed(seed, 2000);
    auto [a, b] = split(ld.train, sp);
    ld.train = std::move(a);
    ld.test = std::move(b);
  }
  const double r = d["error_rate"].get<double>();
  if (r < 0.0 || r > 1.0) throw ConfigError("data.error_rate must lie in [0, 1]");
  if (r > 0.0) {
    auto noisy = mislabel(ld.train, r, mix_seed(seed, 3000));
    ld.train = std::move(noisy.data);
    ld.corrupted = std::move(noisy.corrupted_ids);
  }
  return ld;
}

void print_counts(std::ostream& out, const Dataset& data, const std::string& name) {
  out << name << ": n=" << data.size() << " d=" << data.dim() << " C=" << data.num_classes();
  if (data.has_components()) {
    std::map<int, std::size_t> per;
    for (int c : data.components()) ++per[c];
    for (const auto& [c, k] : per) out << " component" << c << "=" << k;
  }
  out << '\n';
}

// ---------------------------------------------------------------- commands

int cmd_generate(Context& ctx) {
  const Json& d = ctx.config["data"];
  if (d["source"] != "synthetic") throw ConfigError("generate needs data.source = synthetic");
  const LoadedData ld = load_data(ctx, false);
  write_csv(ctx.out_dir / "dataset.csv", ld.train);
  print_counts(*ctx.out, ld.train, "dataset.csv");
  if (ld.test) {
    write_csv(ctx.out_dir / "test.csv", *ld.test);
    print_counts(*ctx.out, *ld.test, "test.csv");
  }
  return kOk;
}

void print_aggregate(std::ostream& out, const SweepResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s %4s %14s %12s %10s %8s\n", "composition", "ok", "V[X] mean",
                "V[X] std", "acc mean", "E(Z)");
  out << buf;
  for (const auto& a : r.aggregate()) {
    std::snprintf(buf, sizeof buf, "%-16s %4d %14.6g %12.4g %10.4f %8.4f\n", a.composition.c_str(),
                  a.replicates_ok, a.variance_mean, a.variance_std, a.test_acc_mean, a.entropy);
    out << buf;
  }
}

SweepConfig sweep_config(const Context& ctx) {
  const Json& s = ctx.config["sweep"];
  SweepConfig c;
  c.replicates = s["replicates"].get<int>();
  c.seed = s["seed"].get<std::uint64_t>();
  c.split.train_fraction = ctx.config["data"]["split_fraction"].get<double>();
  c.split.stratified = ctx.config["data"]["stratified"].get<bool>();
  c.train = train_config(ctx.config["train"]);
  c.influence = influence_options(ctx.config["influence"]);
  c.encoding = encoding_of(ctx.config["data"]);
  c.jobs = ctx.jobs;
  return c;
}

void write_sweep(const Context& ctx, const SweepResult& r, const std::string& stem) {
  auto f = open_out(ctx.out_dir / (stem + ".csv"));
  r.write_csv(f);
  auto g = open_out(ctx.out_dir / (stem + "_aggregate.csv"));
  r.write_aggregate_csv(g);
  print_aggregate(*ctx.out, r);
  std::size_t failed = 0;
  for (const auto& row : r.rows) failed += !row.ok();
  if (failed) *ctx.out << failed << " row(s) failed; see the error column of " << stem << ".csv\n";
}

int cmd_sweep(Context& ctx) {
  const Json& s = ctx.config["sweep"];
  const auto kind = s["kind"].get<std::string>();
  const auto total = s["total"].get<std::size_t>();
  std::vector<Composition> grid;
  if (kind == "sd2") {
    grid = sd2_grid(total, s["grid_points"].get<int>());
  } else if (kind == "sd3") {
    grid = sd3_grid(total, s["step"].get<std::size_t>());
  } else {
    throw ConfigError("sweep.kind must be sd2 or sd3");
  }
  const SweepResult r = mixture_sweep(grid, sweep_config(ctx));
  write_sweep(ctx, r, "sweep");
  return kOk;
}

int cmd_error_rate_sweep(Context& ctx) {
  if (ctx.config["data"]["error_rate"].get<double>() != 0.0) {
    throw ConfigError("error-rate-sweep takes its rates from sweep.rates; data.error_rate must be 0");
  }
  const LoadedData ld = load_data(ctx, true);
  const auto rates = ctx.config["sweep"]["rates"].get<std::vector<double>>();
  for (double r : rates)
    if (r < 0.0 || r > 1.0) throw ConfigError("sweep.rates must lie in [0, 1]");
  const SweepResult r = error_rate_sweep(ld.train, *ld.test, rates, sweep_config(ctx));
  write_sweep(ctx, r, "error_rate_sweep");
  return kOk;
}

int cmd_purify(Context& ctx) {
  const LoadedData ld = load_data(ctx, true);
  const Json& p = ctx.config["purify"];
  PurifyConfig pc;
  pc.iterations = p["iterations"].get<int>();
  pc.remove_per_iter = p["remove_per_iter"].get<int>();
  const auto method = p["method"].get<std::string>();
  if (method == "loo_retrain") {
    pc.method = PurifyMethod::loo_retrain;
  } else if (method == "influence_approx") {
    pc.method = PurifyMethod::influence_approx;
  } else {
    throw ConfigError("purify.method must be loo_retrain or influence_approx");
  }
  pc.train = train_config(ctx.config["train"]);
  pc.seed = p["seed"].get<std::uint64_t>();
  pc.warm_start = p["warm_start"].get<bool>();
  pc.stop_at_inflection = p["stop_at_inflection"].get<bool>();
  pc.jobs = ctx.jobs;
  pc.influence = influence_options(ctx.config["influence"]);
  print_counts(*ctx.out, ld.train, "train");
  print_counts(*ctx.out, *ld.test, "test");

  const fs::path trace_path = ctx.out_dir / "trace.csv";
  PurificationTrace trace;
  try {
    trace = purify(ld.train, *ld.test, pc);
  } catch (const PurifyAborted& e) {
    auto f = open_out(trace_path);
    e.partial().write_csv(f);
    *ctx.out << "partial trace (" << e.partial().records.size() << " records) written to "
             << trace_path.string() << '\n';
    throw;
  }
  auto f = open_out(trace_path);
  trace.write_csv(f);
  const auto best = trace.best_record();
  *ctx.out << "max test accuracy " << fmt("%.4f", trace.records[best].test_acc) << " at "
           << trace.removed_through(best) << " removed (iteration " << trace.records[best].iteration
           << ")";
  if (trace.stopped_early) *ctx.out << "; stopped at variance inflection";
  *ctx.out << '\n';
  if (!ld.corrupted.empty()) {
    std::size_t hit = 0;
    std::vector<PointId> removed;
    for (const auto& r : trace.records) removed.insert(removed.end(), r.removed_ids.begin(), r.removed_ids.end());
    for (auto id : removed) hit += std::binary_search(ld.corrupted.begin(), ld.corrupted.end(), id);
    *ctx.out << hit << " of " << removed.size() << " removed points were mislabeled\n";
  }
  return kOk;
}

int cmd_train(Context& ctx) {
  const LoadedData ld = load_data(ctx, false);
  const FitResult fit = train(ld.train, train_config(ctx.config["train"]));
  Json model;
  model["num_classes"] = fit.params.num_classes();
  model["dim"] = fit.params.dim();
  model["ridge"] = fit.params.ridge;
  model["final_loss"] = fit.final_loss;
  model["grad_norm"] = fit.grad_norm;
  model["epochs_run"] = fit.epochs_run;
  model["newton_steps"] = fit.newton_steps;
  model["train_acc"] = predict_accuracy(ld.train, fit.params);
  if (ld.test) model["test_acc"] = predict_accuracy(*ld.test, fit.params);
  Json theta = Json::array();
  for (Eigen::Index a = 0; a < fit.params.theta.rows(); ++a) {
    std::vector<double> row(fit.params.theta.row(a).begin(), fit.params.theta.row(a).end());
    theta.push_back(row);
  }
  model["theta"] = theta;
  open_out(ctx.out_dir / "model.json") << model.dump(2) << '\n';
  *ctx.out << "loss " << fmt("%.10g", fit.final_loss) << "  |grad| " << fmt("%.3g", fit.grad_norm)
           << "  train acc " << fmt("%.4f", model["train_acc"].get<double>());
  if (ld.test) *ctx.out << "  test acc " << fmt("%.4f", model["test_acc"].get<double>());
  *ctx.out << '\n';
  return kOk;
}

int cmd_influence(Context& ctx) {
  const LoadedData ld = load_data(ctx, false);
  const FitResult fit = train(ld.train, train_config(ctx.config["train"]));
  const InfluenceModel model(ld.train, fit.params, influence_options(ctx.config["influence"]));
  const InfluenceMatrix x = model.matrix();
  const MomentReport m = moments(x, 4);
  open_out(ctx.out_dir / "moments.json") << m.to_json() << '\n';
  if (wants(ctx, "csv")) {
    auto f = open_out(ctx.out_dir / "influence_matrix.csv");
    f << "id";
    for (auto id : x.point_ids) f << ',' << id;
    f << '\n';
    char buf[32];
    for (std::size_t i = 0; i < x.size(); ++i) {
      f << x.point_ids[i];
      for (std::size_t j = 0; j < x.size(); ++j) {
        std::snprintf(buf, sizeof buf, ",%.17g",
                      x.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        f << buf;
      }
      f << '\n';
    }
  }
  *ctx.out << "n=" << m.n << " pairs=" << fmt("%.0f", m.n_pairs);
  for (int k = 1; k <= m.k_max; ++k) *ctx.out << "  E[X^" << k << "]=" << fmt("%.6g", m.moment(k));
  *ctx.out << "  V[X]=" << fmt("%.6g", m.variance) << '\n';
  return kOk;
}

int cmd_convert(Context& ctx, const std::optional<std::string>& output) {
  const Json& d = ctx.config["data"];
  const auto images = d["images"].get<std::string>();
  const auto labels = d["labels"].get<std::string>();
  if (images.empty() || labels.empty()) throw ConfigError("convert needs --images and --labels");
  const Dataset data = load_idx(images, labels, selection_of(d, d["per_class"].get<std::size_t>()));
  const fs::path path = output ? fs::path(*output) : ctx.out_dir / "dataset.csv";
  write_csv(path, data);
  print_counts(*ctx.out, data, path.string());
  return kOk;
}

// ---------------------------------------------------------------- verify

struct Check {
  std::string name;
  double value = 0.0;
  double limit = 0.0;
  bool pass = false;
  std::string detail;
};

std::vector<Check> lemma_suite(const Dataset& z, const FitResult& fit, const TrainConfig& cfg,
                               const InfluenceOptions& opts) {
  std::vector<Check> out;
  const InfluenceModel model(z, fit.params, opts);
  const InfluenceMatrix x = model.matrix();
  const double asym = (x.values - x.values.transpose()).cwiseAbs().maxCoeff();
  out.push_back({"symmetry", asym, 0.0, asym == 0.0, "max |X - X^T|"});

  const double n = static_cast<double>(z.size());
  const MomentReport m = moments(x, 2);
  const double mean_identity = -x.values.trace() / (n * (n - 1.0));
  const double dm = std::abs(m.moment(1) - mean_identity);
  out.push_back({"mean_identity", dm, 1e-8, dm <= 1e-8, "|E[X] - sum g^T H^-1 g / (n(n-1))|"});

  // Averages of the closed-form cross derivative over y. They reproduce -X;
  // the +X form is reported alongside for reference.
  const CrossDerivatives cd(model);
  double worst_minus = 0.0, worst_plus = 0.0;
  const std::size_t pairs[][2] = {{0, 1}, {2, 5}, {3, 7}};
  for (const auto& p : pairs) {
    if (p[1] >= z.size()) continue;
    double sum = 0.0;
    for (std::size_t y = 0; y < z.size(); ++y) sum += cd.closed_form(p[1], p[0], y);
    const double avg = sum / n;
    const double xv = x.values(static_cast<Eigen::Index>(p[0]), static_cast<Eigen::Index>(p[1]));
    worst_minus = std::max(worst_minus, std::abs(avg + xv));
    worst_plus = std::max(worst_plus, std::abs(avg - xv));
  }
  out.push_back({"cross_derivative_average_is_minus_X", worst_minus, 1e-8, worst_minus <= 1e-8,
                 "max |avg_y d2 + X|; |avg_y d2 - X| = " + fmt("%.3e", worst_plus)});

  double worst_fd = 0.0;
  for (const auto& p : pairs) {
    if (p[1] >= z.size()) continue;
    const double an = x.values(static_cast<Eigen::Index>(p[0]), static_cast<Eigen::Index>(p[1]));
    const double fd = influence_fd_oracle(z.point(p[0]), z.point(p[1]), z, fit, cfg, 1e-4, opts);
    worst_fd = std::max(worst_fd, std::abs(fd - an) / std::max(std::abs(an), 1e-300));
  }
  out.push_back({"influence_vs_retraining", worst_fd, 1e-3, worst_fd <= 1e-3,
                 "max relative error, h = 1e-4"});
  return out;
}

int cmd_verify(Context& ctx) {
  const Json& v = ctx.config["verify"];
  TrainConfig cfg = train_config(ctx.config["train"]);
  cfg.ridge = v["ridge"].get<double>();
  cfg.grad_tol = v["grad_tol"].get<double>();
  cfg.max_newton_iters = std::max(cfg.max_newton_iters, 200);
  TheoryOptions topt;
  topt.influence = influence_options(ctx.config["influence"]);
  topt.influence.ridge = RidgeAttribution::per_point;
  topt.jobs = ctx.jobs;
  const double c_hat = v["c_hat"].get<double>();
  const auto ns = v["n"].get<std::vector<std::size_t>>();
  const auto ss = v["s"].get<std::vector<std::size_t>>();
  const auto ks = v["k"].get<std::vector<int>>();
  const auto seed = v["seed"].get<std::uint64_t>();
  if (ns.empty()) throw ConfigError("verify.n must not be empty");
  int k_max = 2;
  for (int k : ks) {
    if (k < 1 || k > 4) throw ConfigError("verify.k entries must lie in 1..4");
    k_max = std::max(k_max, k);
  }

  Json report;
  report["c_hat"] = c_hat;
  report["rows"] = Json::array();
  report["corollary"] = Json::array();
  std::vector<std::string> failures;
  std::ostream& out = *ctx.out;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%4s %2s %2s %9s %14s %14s %14s %12s  %s\n", "n", "s", "k",
                "norm", "lhs", "rhs", "residual", "residual*n2", "ok");
  out << buf;
  std::optional<std::pair<Dataset, FitResult>> first;
  for (std::size_t n : ns) {
    const std::size_t counts[] = {n / 2, n - n / 2};
    const Dataset z = generate(builtin_mixture(counts, mix_seed(seed, n)));
    if (!first) first.emplace(z, train(z, cfg));
    for (std::size_t s : ss) {
      const SubsetEnumeration e = enumerate_removals(z, s, k_max, cfg, topt);
      std::vector<TheoremCheckReport> rows;
      for (int k : ks) rows.push_back(moment_drop(e, k));
      rows.push_back(variance_drop(e));
      for (const auto& r : rows) {
        const double scaled = r.residual() * static_cast<double>(n * n);
        const bool ok = std::abs(scaled) <= c_hat;
        std::snprintf(buf, sizeof buf, "%4zu %2zu %2s %9s %14.6e %14.6e %14.6e %12.4g  %s\n", n, s,
                      r.k == 0 ? "V" : std::to_string(r.k).c_str(), to_string(r.normalization),
                      r.lhs(), r.rhs_theory, r.residual(), scaled, ok ? "yes" : "NO");
        out << buf;
        if (!ok) failures.push_back(std::string("theorem row: ") + buf);
        report["rows"].push_back(Json::parse(r.to_json()));
      }
      if (v["corollary"].get<bool>()) {
        const CorollaryResult c = corollary_search(e);
        const double tol = c_hat / static_cast<double>(n * n);
        const bool ok = c.holds(tol);
        Json cj = Json::parse(c.to_json());
        cj["n"] = n;
        cj["s"] = s;
        cj["pass"] = ok;
        cj.erase("drops");
        report["corollary"].push_back(cj);
        std::snprintf(buf, sizeof buf, "corollary n=%zu s=%zu: best drop %.6e, bound %.6e - %.3e  %s\n",
                      n, s, c.drop, c.bound, tol, ok ? "yes" : "NO");
        out << buf;
        if (!ok) failures.push_back(buf);
      }
    }
  }
  if (v["lemmas"].get<bool>()) {
    report["lemmas"] = Json::array();
    for (const auto& c : lemma_suite(first->first, first->second, cfg, topt.influence)) {
      std::snprintf(buf, sizeof buf, "lemma %-36s %.3e (limit %.1e) %s  [%s]\n", c.name.c_str(),
                    c.value, c.limit, c.pass ? "yes" : "NO", c.detail.c_str());
      out << buf;
      if (!c.pass) failures.push_back(buf);
      report["lemmas"].push_back({{"name", c.name}, {"value", c.value}, {"limit", c.limit},
                                  {"pass", c.pass}, {"detail", c.detail}});
    }
  }
  report["pass"] = failures.empty();
  open_out(ctx.out_dir / "verify.json") << report.dump(2) << '\n';
  if (!failures.empty()) {
    std::string msg = std::to_string(failures.size()) + " check(s) outside tolerance; first: ";
    msg += failures.front();
    throw VerificationFailure(msg);
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Influence-variance heterogeneity measurement and purification"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  int jobs = 1;
  app.add_option("--config", config_path, "JSON experiment config");
  app.add_option("--set", overrides, "Override a config key, e.g. train.ridge=1e-4")->take_all();
  app.add_option("--out-dir", out_dir, "Directory for all outputs (overrides output.dir)");
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  const char* names[][2] = {
      {"generate", "Generate an SD-K synthetic dataset"},
      {"sweep", "Mixture-composition sweep of V[X] and accuracy"},
      {"error-rate-sweep", "Label-noise sweep of V[X] and accuracy"},
      {"purify", "Variance-descent purification"},
      {"verify", "Theorem and lemma checks by exhaustive enumeration"},
      {"convert", "IDX image/label files to CSV"},
      {"train", "Train the regression model"},
      {"influence", "Influence matrix and its moments"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : names) subs[name] = app.add_subcommand(name, help);
  std::string images, labels, classes_arg;
  std::optional<std::size_t> per_class;
  std::optional<std::uint64_t> convert_seed;
  std::optional<std::string> output;
  auto* conv = subs["convert"];
  conv->add_option("--images", images, "IDX image file (.gz accepted)");
  conv->add_option("--labels", labels, "IDX label file (.gz accepted)");
  conv->add_option("--classes", classes_arg, "Comma-separated labels to keep");
  conv->add_option("--per-class", per_class, "Examples per class");
  conv->add_option("--seed", convert_seed, "Sampling seed");
  conv->add_option("--output", output, "Output CSV path");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  std::string command;
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) command = name;

  try {
    Context ctx;
    ctx.out = &out;
    ctx.jobs = jobs;
    ctx.config = default_config();
    if (!config_path.empty()) {
      merge_config(ctx.config, parse_config(read_text(config_path), config_path));
    }
    for (const auto& o : overrides) apply_override(ctx.config, o);
    if (command == "convert") {
      Json& d = ctx.config["data"];
      if (!images.empty()) d["images"] = images;
      if (!labels.empty()) d["labels"] = labels;
      if (per_class) d["per_class"] = *per_class;
      if (convert_seed) d["seed"] = *convert_seed;
      if (!classes_arg.empty()) {
        std::vector<int> cls;
        std::stringstream ss(classes_arg);
        for (std::string item; std::getline(ss, item, ',');) {
          try {
            cls.push_back(std::stoi(item));
          } catch (const std::exception&) {
            throw ConfigError("--classes: '" + item + "' is not an integer");
          }
        }
        d["classes"] = cls;
      }
    }
    if (!out_dir.empty()) ctx.config["output"]["dir"] = out_dir;
    ctx.out_dir = ctx.config["output"]["dir"].get<std::string>();
    fs::create_directories(ctx.out_dir);
    open_out(ctx.out_dir / (command + ".resolved.json")) << ctx.config.dump(2) << '\n';

    if (command == "generate") return cmd_generate(ctx);
    if (command == "sweep") return cmd_sweep(ctx);
    if (command == "error-rate-sweep") return cmd_error_rate_sweep(ctx);
    if (command == "purify") return cmd_purify(ctx);
    if (command == "verify") return cmd_verify(ctx);
    if (command == "convert") return cmd_convert(ctx, output);
    if (command == "train") return cmd_train(ctx);
    if (command == "influence") return cmd_influence(ctx);
    err << "unknown command\n";
    return kUsage;
  } catch (const VerificationFailure& e) {
    err << "verification failed: " << e.what() << '\n';
    return kVerificationFailed;
  } catch (const DataFormatError& e) {
    err << "data format error: " << e.what() << '\n';
    return kDataFormat;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
}

}  // namespace hetero::cli
