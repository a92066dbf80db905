#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hetero/dataset.hpp"

namespace hetero {

// Row a holds the weights of class a followed by its bias.
using ParamMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::size_t kDefaultHessianBudgetBytes = std::size_t{1} << 30;

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 64;
  int epochs = 10;
  double ridge = 1e-3;
  double grad_tol = 1e-8;
  bool newton_refine = true;
  int max_newton_iters = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

// Multinomial logistic regression parameters, C x (d+1).
//
// The flat view used for gradients and Hessians is the row-major layout, so
// entry (a, j) lives at index a*(d+1) + j and m = C*(d+1).
struct ModelParams {
  ParamMatrix theta;
  double ridge = 0.0;

  static ModelParams zeros(int num_classes, int dim, double ridge);
  static ModelParams from_flat(const Eigen::VectorXd& flat, int num_classes, int dim, double ridge);

  int num_classes() const { return static_cast<int>(theta.rows()); }
  int dim() const { return static_cast<int>(theta.cols()) - 1; }
  Eigen::Index size() const { return theta.size(); }
  Eigen::Map<const Eigen::VectorXd> flat() const { return {theta.data(), theta.size()}; }
  Eigen::Map<Eigen::VectorXd> flat() { return {theta.data(), theta.size()}; }
};

struct FitResult {
  ModelParams params;
  double final_loss = 0.0;
  double grad_norm = 0.0;
  int epochs_run = 0;
  int newton_steps = 0;
};

// Softmax class probabilities of one feature vector.
Eigen::VectorXd class_probabilities(const Eigen::VectorXd& features, const ModelParams& params);

// Cross-entropy of one point. The ridge is not part of the per-point loss.
double per_point_loss(const DataPoint& z, const ModelParams& params);
// Mean cross-entropy plus (ridge/2)*|theta|^2.
double total_loss(const Dataset& data, const ModelParams& params);

Eigen::VectorXd loss_gradient(const DataPoint& z, const ModelParams& params);
Eigen::VectorXd total_gradient(const Dataset& data, const ModelParams& params);

// Hessian of the per-point cross-entropy, (diag(p) - p p^T) kron x~ x~^T.
Eigen::MatrixXd point_hessian(const DataPoint& z, const ModelParams& params);
// point_hessian(z) * v without forming the m x m matrix.
Eigen::VectorXd point_hessian_product(const DataPoint& z, const ModelParams& params,
                                      const Eigen::VectorXd& v);
// Hessian of total_loss: mean per-point Hessian plus ridge * I.
Eigen::MatrixXd loss_hessian(const Dataset& data, const ModelParams& params,
                             std::size_t memory_budget_bytes = kDefaultHessianBudgetBytes);

// sum_i w_i L(z_i, theta) + (ridge_weight/2)|theta|^2. Used by training and by
// the deformed objectives u = f_Z + sum eps_t L(t, .) of the influence tools.
struct WeightedObjective {
  const Dataset* data = nullptr;
  std::vector<double> weights;
  double ridge_weight = 0.0;

  static WeightedObjective uniform(const Dataset& data, double ridge);

  double value(const ModelParams& params) const;
  Eigen::VectorXd gradient(const ModelParams& params) const;
  Eigen::MatrixXd hessian(const ModelParams& params,
                          std::size_t memory_budget_bytes = kDefaultHessianBudgetBytes) const;
};

// Damped Newton from `init` until |grad| <= cfg.grad_tol.
// Throws ConvergenceError carrying the last gradient norm.
FitResult newton_minimize(const WeightedObjective& objective, ModelParams init,
                          const TrainConfig& cfg);

// Seeded mini-batch ADAM for cfg.epochs, then Newton refinement when enabled.
// A warm start replaces the zero initialization.
FitResult train(const Dataset& data, const TrainConfig& cfg,
                const std::optional<ModelParams>& warm_start = std::nullopt);

// argmax of the logits; ties go to the lowest class index.
std::vector<int> predict(const Dataset& data, const ModelParams& params);
double predict_accuracy(const Dataset& data, const ModelParams& params);

}  // namespace hetero
