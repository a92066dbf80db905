#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetero/dataset.hpp"
#include "hetero/model.hpp"

namespace hetero {

// Which loss the ridge term is charged to when forming influences.
//
// objective: f_Z = mean L + (lambda/2)|theta|^2 and influences use the pure
//            cross-entropy gradients. sum_z grad L(z) = -n*lambda*theta at the
//            optimum, so stationarity identities hold only up to O(lambda).
// per_point: L~(z) = L(z) + (lambda/2)|theta|^2, which leaves f_Z unchanged
//            but makes sum_z grad L~(z) vanish exactly at the optimum.
enum class RidgeAttribution { objective, per_point };

struct InfluenceOptions {
  RidgeAttribution ridge = RidgeAttribution::objective;
  std::size_t memory_budget_bytes = kDefaultHessianBudgetBytes;
};

// Cholesky factor of a symmetric positive definite Hessian.
//
// Factorization is retried with diagonal jitter 1e-10, 1e-9, ..., 1e-4; the
// amount used is recorded. H^-1 is never formed.
class HessianFactor {
 public:
  static constexpr double kFirstJitter = 1e-10;
  static constexpr double kMaxJitter = 1e-4;

  Eigen::Index size() const { return llt_.rows(); }
  double jitter_used() const { return jitter_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& v) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;
  // L^-1 B for H + jitter*I = L L^T.
  Eigen::MatrixXd whiten(const Eigen::MatrixXd& b) const;
  // L L^T, i.e. the factored matrix including any jitter.
  Eigen::MatrixXd reconstruct() const;

 private:
  friend HessianFactor factor_hessian(const Eigen::MatrixXd& h);
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double jitter_ = 0.0;
};

HessianFactor factor_hessian(const Eigen::MatrixXd& h);

// -g_zp^T H^-1 g_z.
double influence_pair(const Eigen::VectorXd& g_z, const Eigen::VectorXd& g_zp,
                      const HessianFactor& factor);

// Symmetric n x n matrix of pairwise influences. The diagonal holds
// X({z,z}) = -g_z^T H^-1 g_z; it is kept for identities but is never part of
// the moments.
struct InfluenceMatrix {
  Eigen::MatrixXd values;
  std::vector<PointId> point_ids;

  std::size_t size() const { return point_ids.size(); }
};

struct MomentReport {
  std::size_t n = 0;
  int k_max = 0;
  std::vector<double> raw_moments;  // E[X^k], k = 1..k_max
  double variance = 0.0;
  double n_pairs = 0.0;

  double moment(int k) const { return raw_moments.at(static_cast<std::size_t>(k - 1)); }
  std::string to_json() const;
  static MomentReport from_json(const std::string& text);
};

// Raw moments over unordered distinct pairs, accumulated row-major with
// compensated sums.
MomentReport moments(const InfluenceMatrix& x, int k_max = 4);

// Gradients, Hessian factor and whitened gradients of one trained model.
class InfluenceModel {
 public:
  InfluenceModel(Dataset data, ModelParams params, InfluenceOptions options = {});

  const Dataset& data() const { return data_; }
  const ModelParams& params() const { return params_; }
  const InfluenceOptions& options() const { return options_; }
  const Eigen::MatrixXd& hessian() const { return hessian_; }
  const HessianFactor& factor() const { return factor_; }
  // n x m; row i is the gradient of the attributed per-point loss of point i.
  const Eigen::MatrixXd& gradients() const { return gradients_; }

  // Per-point loss with the ridge share of the configured attribution.
  double attributed_loss(const DataPoint& z) const;
  Eigen::VectorXd attributed_gradient(const DataPoint& z) const;
  Eigen::VectorXd attributed_hessian_product(const DataPoint& z, const Eigen::VectorXd& v) const;

  double influence(std::size_t z_row, std::size_t zp_row) const;
  double influence(const DataPoint& z, const DataPoint& zp) const;

  InfluenceMatrix matrix() const;
  // E[X], E[X^2], V[X] straight from the whitened gradients in O(n m^2),
  // without the n x n matrix.
  MomentReport variance_summary() const;

 private:
  Dataset data_;
  ModelParams params_;
  InfluenceOptions options_;
  double ridge_share_ = 0.0;
  Eigen::MatrixXd gradients_;
  Eigen::MatrixXd hessian_;
  HessianFactor factor_;
  Eigen::MatrixXd whitened_;  // m x n, L^-1 G^T
};

InfluenceMatrix influence_matrix(const Dataset& data, const FitResult& fit,
                                 const InfluenceOptions& options = {});

// Second derivatives d^2/(d eps_y d eps_z) L(z', theta_hat) at eps = 0.
class CrossDerivatives {
 public:
  explicit CrossDerivatives(const InfluenceModel& model);

  // Three bilinear terms:
  //   <dL(z), Hz' H^-1 dL(y)> + <dL(z'), Hy H^-1 dL(z)> + <dL(z'), Hz H^-1 dL(y)>
  // with <v, w> = v^T H^-1 w. Treats the Hessian of f_Z as constant in theta.
  double closed_form(const DataPoint& zp, const DataPoint& z, const DataPoint& y) const;
  double closed_form(std::size_t zp_row, std::size_t z_row, std::size_t y_row) const;

  // The term the closed form omits: dL(z')^T H^-1 T[d theta/d eps_y] H^-1 dL(z),
  // where T is the third derivative of f_Z.
  double third_order_term(const DataPoint& zp, const DataPoint& z, const DataPoint& y) const;
  double third_order_term(std::size_t zp_row, std::size_t z_row, std::size_t y_row) const;

  double exact(const DataPoint& zp, const DataPoint& z, const DataPoint& y) const;
  double exact(std::size_t zp_row, std::size_t z_row, std::size_t y_row) const;

 private:
  double closed_form_impl(const Eigen::VectorXd& hinv_gzp, const Eigen::VectorXd& hinv_gz,
                          const Eigen::VectorXd& hinv_gy, const DataPoint& zp,
                          const DataPoint& z, const DataPoint& y) const;
  double third_order_impl(const Eigen::VectorXd& hinv_gzp, const Eigen::VectorXd& hinv_gz,
                          const Eigen::VectorXd& hinv_gy) const;

  const InfluenceModel* model_;
  Eigen::MatrixXd solved_;     // m x n, H^-1 G^T
  Eigen::MatrixXd design_;     // n x (d+1)
  Eigen::MatrixXd probs_;      // n x C
};

// Closed-form cross derivative for arbitrary points, building the model from `fit`.
double cross_derivative(const DataPoint& zp, const DataPoint& z, const DataPoint& y,
                        const Dataset& data, const FitResult& fit,
                        const InfluenceOptions& options = {});

// Central difference of L(z', theta_hat(eps)) in eps_z, re-minimizing
// u = f_Z + eps_z L(z, .) at eps_z = +-h by Newton from `base`.
double influence_fd_oracle(const DataPoint& z, const DataPoint& zp, const Dataset& data,
                           const FitResult& base, const TrainConfig& cfg, double h,
                           const InfluenceOptions& options = {});
// As above, training the base model first.
double influence_fd_oracle(const DataPoint& z, const DataPoint& zp, const Dataset& data,
                           const TrainConfig& cfg, double h,
                           const InfluenceOptions& options = {});

// Minimizer of f_Z + sum_t eps_t L~(t, .) over the rows of `data`, warm
// started from `init`. Ridge attribution decides whether eps also scales the ridge.
FitResult minimize_deformed(const Dataset& data, std::span<const double> eps,
                            const ModelParams& init, const TrainConfig& cfg,
                            RidgeAttribution ridge);

}  // namespace hetero
