#include "hetero/model.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "hetero/error.hpp"
#include "hetero/rng.hpp"

namespace hetero {
namespace {

Eigen::MatrixXd augmented(const Eigen::MatrixXd& features) {
  Eigen::MatrixXd xt(features.rows(), features.cols() + 1);
  xt.leftCols(features.cols()) = features;
  xt.col(features.cols()).setOnes();
  return xt;
}

void check_shape(const Dataset& data, const ModelParams& params) {
  if (data.dim() != params.dim() || data.num_classes() > params.num_classes()) {
    throw ContractError("model: dataset shape (d=" + std::to_string(data.dim()) +
                        ", C=" + std::to_string(data.num_classes()) +
                        ") does not match parameters (d=" + std::to_string(params.dim()) +
                        ", C=" + std::to_string(params.num_classes()) + ")");
  }
}

void check_point(const DataPoint& z, const ModelParams& params) {
  if (z.features.size() != params.dim()) {
    throw ContractError("model: feature length " + std::to_string(z.features.size()) +
                        " != model dimension " + std::to_string(params.dim()));
  }
  if (z.label < 0 || z.label >= params.num_classes()) {
    throw ContractError("model: label " + std::to_string(z.label) + " outside class range");
  }
}

void check_budget(Eigen::Index m, std::size_t budget) {
  const double bytes = static_cast<double>(m) * static_cast<double>(m) * sizeof(double);
  if (bytes > static_cast<double>(budget)) {
    throw ResourceError("hessian: " + std::to_string(m) + "x" + std::to_string(m) +
                        " matrix needs " + std::to_string(bytes / (1 << 20)) +
                        " MiB, over the budget of " + std::to_string(budget >> 20) + " MiB");
  }
}

// Row-wise softmax in place; returns the per-row log-sum-exp of the logits.
Eigen::VectorXd softmax_rows(Eigen::MatrixXd& z) {
  Eigen::VectorXd lse(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double mx = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - mx).exp();
    const double s = z.row(i).sum();
    z.row(i) /= s;
    lse(i) = mx + std::log(s);
  }
  return lse;
}

// Holds logits/probabilities for one parameter setting over a design matrix.
struct Forward {
  Eigen::MatrixXd probs;  // n x C
  Eigen::VectorXd point_loss;
};

Forward forward(const Eigen::MatrixXd& xt, const std::vector<int>& labels,
                const ModelParams& params) {
  Forward f;
  f.probs = xt * params.theta.transpose();
  Eigen::VectorXd picked(xt.rows());
  for (Eigen::Index i = 0; i < xt.rows(); ++i) picked(i) = f.probs(i, labels[i]);
  const Eigen::VectorXd lse = softmax_rows(f.probs);
  f.point_loss = lse - picked;
  return f;
}

// (C x D) gradient of sum_i w_i L_i given probabilities.
ParamMatrix weighted_ce_gradient(const Eigen::MatrixXd& xt, const std::vector<int>& labels,
                                 const Eigen::MatrixXd& probs, const Eigen::VectorXd& w) {
  Eigen::MatrixXd r = probs;
  for (Eigen::Index i = 0; i < r.rows(); ++i) r(i, labels[i]) -= 1.0;
  r.array().colwise() *= w.array();
  return r.transpose() * xt;
}

Eigen::MatrixXd weighted_ce_hessian(const Eigen::MatrixXd& xt, const Eigen::MatrixXd& probs,
                                    const Eigen::VectorXd& w, double ridge_weight,
                                    std::size_t budget) {
  const auto c = probs.cols();
  const auto d1 = xt.cols();
  const auto m = c * d1;
  check_budget(m, budget);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd coeff(xt.rows());
  for (Eigen::Index a = 0; a < c; ++a) {
    for (Eigen::Index b = a; b < c; ++b) {
      coeff = w.array() * probs.col(a).array() *
              ((a == b ? 1.0 : 0.0) - probs.col(b).array());
      Eigen::MatrixXd block = xt.transpose() * (coeff.asDiagonal() * xt);
      if (a == b) {
        block = 0.5 * (block + block.transpose()).eval();
        h.block(a * d1, a * d1, d1, d1) = block;
      } else {
        h.block(a * d1, b * d1, d1, d1) = block;
        h.block(b * d1, a * d1, d1, d1) = block.transpose();
      }
    }
  }
  h.diagonal().array() += ridge_weight;
  return h;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ContractError("train config: learning_rate must be > 0");
  if (batch_size < 1) throw ContractError("train config: batch_size must be >= 1");
  if (epochs < 0) throw ContractError("train config: epochs must be >= 0");
  if (!(ridge >= 0.0)) throw ContractError("train config: ridge must be >= 0");
  if (!(grad_tol > 0.0)) throw ContractError("train config: grad_tol must be > 0");
  if (max_newton_iters < 1) throw ContractError("train config: max_newton_iters must be >= 1");
}

ModelParams ModelParams::zeros(int num_classes, int dim, double ridge) {
  return ModelParams{ParamMatrix::Zero(num_classes, dim + 1), ridge};
}

ModelParams ModelParams::from_flat(const Eigen::VectorXd& flat, int num_classes, int dim,
                                   double ridge) {
  if (flat.size() != static_cast<Eigen::Index>(num_classes) * (dim + 1)) {
    throw ContractError("model: flat parameter length mismatch");
  }
  ModelParams p = zeros(num_classes, dim, ridge);
  p.flat() = flat;
  return p;
}

Eigen::VectorXd class_probabilities(const Eigen::VectorXd& features, const ModelParams& params) {
  Eigen::VectorXd z = params.theta.leftCols(params.dim()) * features + params.theta.col(params.dim());
  const double mx = z.maxCoeff();
  z = (z.array() - mx).exp();
  return z / z.sum();
}

double per_point_loss(const DataPoint& z, const ModelParams& params) {
  check_point(z, params);
  const Eigen::VectorXd logits =
      params.theta.leftCols(params.dim()) * z.features + params.theta.col(params.dim());
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return lse - logits(z.label);
}

double total_loss(const Dataset& data, const ModelParams& params) {
  if (data.empty()) throw ContractError("total_loss: empty dataset");
  return WeightedObjective::uniform(data, params.ridge).value(params);
}

Eigen::VectorXd loss_gradient(const DataPoint& z, const ModelParams& params) {
  check_point(z, params);
  Eigen::VectorXd r = class_probabilities(z.features, params);
  r(z.label) -= 1.0;
  const auto d1 = params.dim() + 1;
  Eigen::VectorXd g(params.size());
  for (int a = 0; a < params.num_classes(); ++a) {
    g.segment(a * d1, params.dim()) = r(a) * z.features;
    g(a * d1 + params.dim()) = r(a);
  }
  return g;
}

Eigen::VectorXd total_gradient(const Dataset& data, const ModelParams& params) {
  if (data.empty()) throw ContractError("total_gradient: empty dataset");
  return WeightedObjective::uniform(data, params.ridge).gradient(params);
}

Eigen::MatrixXd point_hessian(const DataPoint& z, const ModelParams& params) {
  check_point(z, params);
  Eigen::MatrixXd xt(1, params.dim() + 1);
  xt.leftCols(params.dim()) = z.features.transpose();
  xt(0, params.dim()) = 1.0;
  const Eigen::MatrixXd probs = class_probabilities(z.features, params).transpose();
  return weighted_ce_hessian(xt, probs, Eigen::VectorXd::Ones(1), 0.0, kDefaultHessianBudgetBytes);
}

Eigen::VectorXd point_hessian_product(const DataPoint& z, const ModelParams& params,
                                      const Eigen::VectorXd& v) {
  check_point(z, params);
  if (v.size() != params.size()) throw ContractError("hessian product: vector length mismatch");
  const auto d = params.dim();
  const auto c = params.num_classes();
  Eigen::Map<const ParamMatrix> vm(v.data(), c, d + 1);
  const Eigen::VectorXd u = vm.leftCols(d) * z.features + vm.col(d);
  const Eigen::VectorXd p = class_probabilities(z.features, params);
  const Eigen::VectorXd au = p.cwiseProduct(u) - p * p.dot(u);
  Eigen::VectorXd out(params.size());
  for (int a = 0; a < c; ++a) {
    out.segment(a * (d + 1), d) = au(a) * z.features;
    out(a * (d + 1) + d) = au(a);
  }
  return out;
}

Eigen::MatrixXd loss_hessian(const Dataset& data, const ModelParams& params,
                             std::size_t memory_budget_bytes) {
  if (data.empty()) throw ContractError("loss_hessian: empty dataset");
  return WeightedObjective::uniform(data, params.ridge).hessian(params, memory_budget_bytes);
}

WeightedObjective WeightedObjective::uniform(const Dataset& data, double ridge) {
  WeightedObjective obj;
  obj.data = &data;
  obj.weights.assign(data.size(), 1.0 / static_cast<double>(data.size()));
  obj.ridge_weight = ridge;
  return obj;
}

double WeightedObjective::value(const ModelParams& params) const {
  check_shape(*data, params);
  const Eigen::MatrixXd xt = augmented(data->features());
  const Forward f = forward(xt, data->labels(), params);
  const Eigen::Map<const Eigen::VectorXd> w(weights.data(), static_cast<Eigen::Index>(weights.size()));
  return w.dot(f.point_loss) + 0.5 * ridge_weight * params.theta.squaredNorm();
}

Eigen::VectorXd WeightedObjective::gradient(const ModelParams& params) const {
  check_shape(*data, params);
  const Eigen::MatrixXd xt = augmented(data->features());
  const Forward f = forward(xt, data->labels(), params);
  const Eigen::Map<const Eigen::VectorXd> w(weights.data(), static_cast<Eigen::Index>(weights.size()));
  ParamMatrix g = weighted_ce_gradient(xt, data->labels(), f.probs, w);
  g += ridge_weight * params.theta;
  return Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
}

Eigen::MatrixXd WeightedObjective::hessian(const ModelParams& params,
                                           std::size_t memory_budget_bytes) const {
  check_shape(*data, params);
  const Eigen::MatrixXd xt = augmented(data->features());
  Eigen::MatrixXd probs = xt * params.theta.transpose();
  softmax_rows(probs);
  const Eigen::Map<const Eigen::VectorXd> w(weights.data(), static_cast<Eigen::Index>(weights.size()));
  return weighted_ce_hessian(xt, probs, w, ridge_weight, memory_budget_bytes);
}

FitResult newton_minimize(const WeightedObjective& objective, ModelParams init,
                          const TrainConfig& cfg) {
  cfg.validate();
  const Dataset& data = *objective.data;
  check_shape(data, init);
  if (objective.weights.size() != data.size()) {
    throw ContractError("newton: weight count != dataset size");
  }
  const Eigen::MatrixXd xt = augmented(data.features());
  const Eigen::Map<const Eigen::VectorXd> w(objective.weights.data(),
                                            static_cast<Eigen::Index>(objective.weights.size()));
  ModelParams params = std::move(init);

  auto evaluate = [&](const ModelParams& p, Forward& f) {
    f = forward(xt, data.labels(), p);
    return w.dot(f.point_loss) + 0.5 * objective.ridge_weight * p.theta.squaredNorm();
  };

  Forward fw;
  double value = evaluate(params, fw);
  double grad_norm = 0.0;
  int steps = 0;
  for (;; ++steps) {
    ParamMatrix gm = weighted_ce_gradient(xt, data.labels(), fw.probs, w);
    gm += objective.ridge_weight * params.theta;
    const Eigen::Map<const Eigen::VectorXd> g(gm.data(), gm.size());
    grad_norm = g.norm();
    if (grad_norm <= cfg.grad_tol) break;
    if (steps >= cfg.max_newton_iters) {
      throw ConvergenceError("newton: no convergence after " + std::to_string(steps) +
                                 " steps, |grad| = " + std::to_string(grad_norm),
                             grad_norm);
    }
    Eigen::MatrixXd h = weighted_ce_hessian(xt, fw.probs, w, objective.ridge_weight,
                                            kDefaultHessianBudgetBytes);
    Eigen::LLT<Eigen::MatrixXd> llt(h);
    // Levenberg shift for singular or indefinite-in-roundoff Hessians (ridge 0).
    for (double shift = 1e-12; llt.info() != Eigen::Success; shift *= 10.0) {
      if (shift > 1e6) throw ConvergenceError("newton: Hessian factorization failed", grad_norm);
      h.diagonal().array() += shift;
      llt.compute(h);
    }
    const Eigen::VectorXd step = llt.solve(g);
    const double decrement = g.dot(step);
    ModelParams trial = params;
    Forward tf;
    double t = 1.0;
    double trial_value = 0.0;
    for (;;) {
      trial.flat() = params.flat() - t * step;
      trial_value = evaluate(trial, tf);
      // Inside the quadratic region the value change is below roundoff; take the full step.
      if (decrement < 1e-12 || trial_value <= value - 1e-4 * t * decrement) break;
      t *= 0.5;
      if (t < 1e-12) {
        throw ConvergenceError("newton: line search failed, |grad| = " + std::to_string(grad_norm),
                               grad_norm);
      }
    }
    params = std::move(trial);
    fw = std::move(tf);
    value = trial_value;
  }
  return FitResult{std::move(params), value, grad_norm, 0, steps};
}

FitResult train(const Dataset& data, const TrainConfig& cfg,
                const std::optional<ModelParams>& warm_start) {
  cfg.validate();
  if (data.size() < static_cast<std::size_t>(data.num_classes())) {
    throw ContractError("train: need at least C points (n=" + std::to_string(data.size()) +
                        ", C=" + std::to_string(data.num_classes()) + ")");
  }
  ModelParams params = warm_start ? *warm_start
                                  : ModelParams::zeros(data.num_classes(), data.dim(), cfg.ridge);
  check_shape(data, params);
  params.ridge = cfg.ridge;

  const Eigen::MatrixXd xt = augmented(data.features());
  const auto n = data.size();
  if (cfg.epochs > 0) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ParamMatrix m1 = ParamMatrix::Zero(params.theta.rows(), params.theta.cols());
    ParamMatrix m2 = m1;
    Rng rng(cfg.seed);
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::vector<int> batch_labels;
    long t = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      rng.shuffle(std::span(order));
      for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
        const auto stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
        const std::vector<Eigen::Index> rows(order.begin() + static_cast<long>(start),
                                             order.begin() + static_cast<long>(stop));
        const Eigen::MatrixXd xb = xt(rows, Eigen::all);
        batch_labels.clear();
        for (auto r : rows) batch_labels.push_back(data.labels()[static_cast<std::size_t>(r)]);
        const Forward f = forward(xb, batch_labels, params);
        const Eigen::VectorXd w =
            Eigen::VectorXd::Constant(xb.rows(), 1.0 / static_cast<double>(xb.rows()));
        ParamMatrix g = weighted_ce_gradient(xb, batch_labels, f.probs, w);
        g += cfg.ridge * params.theta;
        ++t;
        m1 = beta1 * m1 + (1.0 - beta1) * g;
        m2 = beta2 * m2 + (1.0 - beta2) * g.cwiseAbs2();
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        params.theta.array() -=
            cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps);
      }
    }
  }

  const auto objective = WeightedObjective::uniform(data, cfg.ridge);
  if (cfg.newton_refine) {
    FitResult fit = newton_minimize(objective, std::move(params), cfg);
    fit.epochs_run = cfg.epochs;
    return fit;
  }
  FitResult fit;
  fit.final_loss = objective.value(params);
  fit.grad_norm = objective.gradient(params).norm();
  fit.params = std::move(params);
  fit.epochs_run = cfg.epochs;
  return fit;
}

std::vector<int> predict(const Dataset& data, const ModelParams& params) {
  check_shape(data, params);
  const Eigen::MatrixXd logits = augmented(data.features()) * params.theta.transpose();
  std::vector<int> out(data.size());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (Eigen::Index a = 1; a < logits.cols(); ++a)
      if (logits(i, a) > logits(i, best)) best = static_cast<int>(a);
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

double predict_accuracy(const Dataset& data, const ModelParams& params) {
  if (data.empty()) throw ContractError("predict_accuracy: empty dataset");
  const auto pred = predict(data, params);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.labels()[i];
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace hetero
