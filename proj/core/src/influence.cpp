#include "hetero/influence.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <json.hpp>

#include "hetero/error.hpp"
#include "hetero/stats.hpp"

namespace hetero {
namespace {

Eigen::MatrixXd augmented(const Eigen::MatrixXd& features) {
  Eigen::MatrixXd xt(features.rows(), features.cols() + 1);
  xt.leftCols(features.cols()) = features;
  xt.col(features.cols()).setOnes();
  return xt;
}

double ridge_share(RidgeAttribution mode) {
  return mode == RidgeAttribution::per_point ? 1.0 : 0.0;
}

}  // namespace

// ---------------------------------------------------------------- factor

HessianFactor factor_hessian(const Eigen::MatrixXd& h) {
  if (h.rows() != h.cols()) throw ContractError("factor_hessian: matrix is not square");
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ContractError("factor_hessian: matrix is not symmetric");
  }
  HessianFactor f;
  f.llt_.compute(h);
  if (f.llt_.info() == Eigen::Success) return f;
  for (double jitter = HessianFactor::kFirstJitter; jitter <= HessianFactor::kMaxJitter * 1.0001;
       jitter *= 10.0) {
    Eigen::MatrixXd shifted = h;
    shifted.diagonal().array() += jitter;
    f.llt_.compute(shifted);
    if (f.llt_.info() == Eigen::Success) {
      f.jitter_ = jitter;
      return f;
    }
  }
  const double min_eig =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h, Eigen::EigenvaluesOnly).eigenvalues()(0);
  throw FactorizationError("factor_hessian: matrix indefinite beyond jitter 1e-4, smallest "
                           "eigenvalue ~ " + std::to_string(min_eig),
                           min_eig);
}

Eigen::VectorXd HessianFactor::solve(const Eigen::VectorXd& v) const {
  if (v.size() != size()) throw ContractError("HessianFactor::solve: length mismatch");
  return llt_.solve(v);
}

Eigen::MatrixXd HessianFactor::solve(const Eigen::MatrixXd& b) const {
  if (b.rows() != size()) throw ContractError("HessianFactor::solve: row mismatch");
  return llt_.solve(b);
}

Eigen::MatrixXd HessianFactor::whiten(const Eigen::MatrixXd& b) const {
  if (b.rows() != size()) throw ContractError("HessianFactor::whiten: row mismatch");
  return llt_.matrixL().solve(b);
}

Eigen::MatrixXd HessianFactor::reconstruct() const { return llt_.reconstructedMatrix(); }

double influence_pair(const Eigen::VectorXd& g_z, const Eigen::VectorXd& g_zp,
                      const HessianFactor& factor) {
  if (g_z.size() != factor.size() || g_zp.size() != factor.size()) {
    throw ContractError("influence_pair: gradient length != Hessian size");
  }
  return -g_zp.dot(factor.solve(g_z));
}

// ---------------------------------------------------------------- moments

std::string MomentReport::to_json() const {
  nlohmann::json j;
  j["n"] = n;
  j["k_max"] = k_max;
  j["n_pairs"] = n_pairs;
  j["raw_moments"] = raw_moments;
  j["variance"] = variance;
  return j.dump(2);
}

MomentReport MomentReport::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MomentReport r;
    r.n = j.at("n").get<std::size_t>();
    r.k_max = j.at("k_max").get<int>();
    r.raw_moments = j.at("raw_moments").get<std::vector<double>>();
    r.variance = j.at("variance").get<double>();
    r.n_pairs = binomial(r.n, 2);
    if (r.raw_moments.size() != static_cast<std::size_t>(r.k_max)) {
      throw DataFormatError("moment report: raw_moments length != k_max");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError(std::string("moment report: ") + e.what());
  }
}

MomentReport moments(const InfluenceMatrix& x, int k_max) {
  const auto n = static_cast<std::size_t>(x.values.rows());
  if (n < 2) throw ContractError("moments: need at least two points");
  if (k_max < 2) throw ContractError("moments: k_max must be >= 2");
  if (x.values.cols() != x.values.rows()) throw ContractError("moments: matrix not square");
  std::vector<CompensatedSum> sums(static_cast<std::size_t>(k_max));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = x.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      double p = 1.0;
      for (auto& s : sums) {
        p *= v;
        s.add(p);
      }
    }
  }
  MomentReport r;
  r.n = n;
  r.k_max = k_max;
  r.n_pairs = binomial(n, 2);
  for (const auto& s : sums) r.raw_moments.push_back(s.value() / r.n_pairs);
  r.variance = r.raw_moments[1] - r.raw_moments[0] * r.raw_moments[0];
  return r;
}

// ---------------------------------------------------------------- model

InfluenceModel::InfluenceModel(Dataset data, ModelParams params, InfluenceOptions options)
    : data_(std::move(data)),
      params_(std::move(params)),
      options_(options),
      ridge_share_(ridge_share(options.ridge)) {
  if (data_.empty()) throw ContractError("influence: empty dataset");
  const auto n = static_cast<Eigen::Index>(data_.size());
  const auto m = params_.size();
  gradients_.resize(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    gradients_.row(i) = attributed_gradient(data_.point(static_cast<std::size_t>(i))).transpose();
  }
  hessian_ = loss_hessian(data_, params_, options_.memory_budget_bytes);
  factor_ = factor_hessian(hessian_);
  whitened_ = factor_.whiten(gradients_.transpose());
}

double InfluenceModel::attributed_loss(const DataPoint& z) const {
  return per_point_loss(z, params_) + ridge_share_ * 0.5 * params_.ridge * params_.theta.squaredNorm();
}

Eigen::VectorXd InfluenceModel::attributed_gradient(const DataPoint& z) const {
  Eigen::VectorXd g = loss_gradient(z, params_);
  if (ridge_share_ != 0.0) g += ridge_share_ * params_.ridge * params_.flat();
  return g;
}

Eigen::VectorXd InfluenceModel::attributed_hessian_product(const DataPoint& z,
                                                           const Eigen::VectorXd& v) const {
  Eigen::VectorXd out = point_hessian_product(z, params_, v);
  if (ridge_share_ != 0.0) out += ridge_share_ * params_.ridge * v;
  return out;
}

double InfluenceModel::influence(std::size_t z_row, std::size_t zp_row) const {
  const auto i = static_cast<Eigen::Index>(z_row);
  const auto j = static_cast<Eigen::Index>(zp_row);
  if (z_row >= data_.size() || zp_row >= data_.size()) {
    throw ContractError("influence: row out of range");
  }
  return influence_pair(gradients_.row(i).transpose(), gradients_.row(j).transpose(), factor_);
}

double InfluenceModel::influence(const DataPoint& z, const DataPoint& zp) const {
  return influence_pair(attributed_gradient(z), attributed_gradient(zp), factor_);
}

InfluenceMatrix InfluenceModel::matrix() const {
  const auto n = static_cast<Eigen::Index>(data_.size());
  InfluenceMatrix out;
  out.point_ids = data_.ids();
  out.values = Eigen::MatrixXd::Zero(n, n);
  // Lower triangle of -W^T W, then mirrored so that X(i,j) and X(j,i) are the same double.
  out.values.selfadjointView<Eigen::Lower>().rankUpdate(whitened_.transpose(), -1.0);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j + 1; i < n; ++i) out.values(j, i) = out.values(i, j);
  if (!out.values.allFinite()) throw Error("influence: non-finite influence value");
  return out;
}

MomentReport InfluenceModel::variance_summary() const {
  const auto n = data_.size();
  if (n < 2) throw ContractError("variance_summary: need at least two points");
  // X = -W^T W. Off-diagonal sums follow from the total minus the diagonal.
  const Eigen::VectorXd diag = -whitened_.colwise().squaredNorm().transpose();
  const double total = -whitened_.rowwise().sum().squaredNorm();
  const Eigen::MatrixXd gram = whitened_ * whitened_.transpose();
  const double frob2 = gram.squaredNorm();
  MomentReport r;
  r.n = n;
  r.k_max = 2;
  r.n_pairs = binomial(n, 2);
  const double s1 = 0.5 * (total - diag.sum());
  const double s2 = 0.5 * (frob2 - diag.squaredNorm());
  r.raw_moments = {s1 / r.n_pairs, s2 / r.n_pairs};
  r.variance = r.raw_moments[1] - r.raw_moments[0] * r.raw_moments[0];
  return r;
}

InfluenceMatrix influence_matrix(const Dataset& data, const FitResult& fit,
                                 const InfluenceOptions& options) {
  return InfluenceModel(data, fit.params, options).matrix();
}

// ---------------------------------------------------------------- second order

CrossDerivatives::CrossDerivatives(const InfluenceModel& model)
    : model_(&model),
      solved_(model.factor().solve(Eigen::MatrixXd(model.gradients().transpose()))),
      design_(augmented(model.data().features())) {
  probs_ = design_ * model.params().theta.transpose();
  for (Eigen::Index i = 0; i < probs_.rows(); ++i) {
    const double mx = probs_.row(i).maxCoeff();
    probs_.row(i) = (probs_.row(i).array() - mx).exp();
    probs_.row(i) /= probs_.row(i).sum();
  }
}

double CrossDerivatives::closed_form_impl(const Eigen::VectorXd& a_zp, const Eigen::VectorXd& a_z,
                                          const Eigen::VectorXd& a_y, const DataPoint& zp,
                                          const DataPoint& z, const DataPoint& y) const {
  const double t1 = a_z.dot(model_->attributed_hessian_product(zp, a_y));
  const double t2 = a_zp.dot(model_->attributed_hessian_product(y, a_z));
  const double t3 = a_zp.dot(model_->attributed_hessian_product(z, a_y));
  return t1 + t2 + t3;
}

double CrossDerivatives::third_order_impl(const Eigen::VectorXd& a_zp, const Eigen::VectorXd& a_z,
                                          const Eigen::VectorXd& a_y) const {
  const auto& params = model_->params();
  const auto c = params.num_classes();
  const auto d1 = params.dim() + 1;
  Eigen::Map<const ParamMatrix> a(a_zp.data(), c, d1);
  Eigen::Map<const ParamMatrix> b(a_z.data(), c, d1);
  Eigen::Map<const ParamMatrix> v(a_y.data(), c, d1);
  const Eigen::MatrixXd ua = design_ * a.transpose();
  const Eigen::MatrixXd ub = design_ * b.transpose();
  // Direction d theta / d eps_y = -H^-1 g_y.
  const Eigen::MatrixXd uv = -(design_ * v.transpose());
  CompensatedSum sum;
  for (Eigen::Index i = 0; i < design_.rows(); ++i) {
    const Eigen::VectorXd p = probs_.row(i).transpose();
    const Eigen::VectorXd u = uv.row(i).transpose();
    const Eigen::VectorXd dp = p.cwiseProduct(u) - p * p.dot(u);
    const Eigen::VectorXd ra = ua.row(i).transpose();
    const Eigen::VectorXd rb = ub.row(i).transpose();
    // ra^T (diag(dp) - dp p^T - p dp^T) rb
    sum.add((dp.array() * ra.array() * rb.array()).sum() - dp.dot(ra) * p.dot(rb) -
            p.dot(ra) * dp.dot(rb));
  }
  return sum.value() / static_cast<double>(design_.rows());
}

double CrossDerivatives::closed_form(const DataPoint& zp, const DataPoint& z,
                                     const DataPoint& y) const {
  const auto& f = model_->factor();
  return closed_form_impl(f.solve(model_->attributed_gradient(zp)),
                          f.solve(model_->attributed_gradient(z)),
                          f.solve(model_->attributed_gradient(y)), zp, z, y);
}

double CrossDerivatives::closed_form(std::size_t zp_row, std::size_t z_row,
                                     std::size_t y_row) const {
  const auto& data = model_->data();
  return closed_form_impl(solved_.col(static_cast<Eigen::Index>(zp_row)),
                          solved_.col(static_cast<Eigen::Index>(z_row)),
                          solved_.col(static_cast<Eigen::Index>(y_row)), data.point(zp_row),
                          data.point(z_row), data.point(y_row));
}

double CrossDerivatives::third_order_term(const DataPoint& zp, const DataPoint& z,
                                          const DataPoint& y) const {
  const auto& f = model_->factor();
  return third_order_impl(f.solve(model_->attributed_gradient(zp)),
                          f.solve(model_->attributed_gradient(z)),
                          f.solve(model_->attributed_gradient(y)));
}

double CrossDerivatives::third_order_term(std::size_t zp_row, std::size_t z_row,
                                          std::size_t y_row) const {
  return third_order_impl(solved_.col(static_cast<Eigen::Index>(zp_row)),
                          solved_.col(static_cast<Eigen::Index>(z_row)),
                          solved_.col(static_cast<Eigen::Index>(y_row)));
}

double CrossDerivatives::exact(const DataPoint& zp, const DataPoint& z, const DataPoint& y) const {
  return closed_form(zp, z, y) + third_order_term(zp, z, y);
}

double CrossDerivatives::exact(std::size_t zp_row, std::size_t z_row, std::size_t y_row) const {
  return closed_form(zp_row, z_row, y_row) + third_order_term(zp_row, z_row, y_row);
}

double cross_derivative(const DataPoint& zp, const DataPoint& z, const DataPoint& y,
                        const Dataset& data, const FitResult& fit,
                        const InfluenceOptions& options) {
  const InfluenceModel model(data, fit.params, options);
  return CrossDerivatives(model).closed_form(zp, z, y);
}

// ---------------------------------------------------------------- finite differences

FitResult minimize_deformed(const Dataset& data, std::span<const double> eps,
                            const ModelParams& init, const TrainConfig& cfg,
                            RidgeAttribution ridge) {
  if (eps.size() != data.size()) throw ContractError("minimize_deformed: eps length mismatch");
  WeightedObjective obj = WeightedObjective::uniform(data, cfg.ridge);
  double eps_total = 0.0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    obj.weights[i] += eps[i];
    eps_total += eps[i];
  }
  obj.ridge_weight = cfg.ridge * (1.0 + ridge_share(ridge) * eps_total);
  ModelParams start = init;
  start.ridge = cfg.ridge;
  return newton_minimize(obj, std::move(start), cfg);
}

double influence_fd_oracle(const DataPoint& z, const DataPoint& zp, const Dataset& data,
                           const FitResult& base, const TrainConfig& cfg, double h,
                           const InfluenceOptions& options) {
  if (!(h >= 1e-6 && h <= 1e-2)) throw ContractError("influence_fd_oracle: h outside [1e-6, 1e-2]");
  // Z plus one extra row for z; only that row is deformed.
  Eigen::MatrixXd f(1, data.dim());
  f.row(0) = z.features.transpose();
  PointId extra_id = 0;
  for (auto id : data.ids()) extra_id = std::max(extra_id, id + 1);
  const Dataset extended = data.has_components()
                               ? data.concat(Dataset(f, {z.label}, data.num_classes(), {extra_id}, {-1}))
                               : data.concat(Dataset(f, {z.label}, data.num_classes(), {extra_id}));
  const double share = ridge_share(options.ridge);
  auto loss_at = [&](double e) {
    WeightedObjective obj = WeightedObjective::uniform(data, cfg.ridge);
    obj.data = &extended;
    obj.weights.push_back(e);
    obj.ridge_weight = cfg.ridge * (1.0 + share * e);
    ModelParams start = base.params;
    const FitResult fit = newton_minimize(obj, std::move(start), cfg);
    return per_point_loss(zp, fit.params) +
           share * 0.5 * cfg.ridge * fit.params.theta.squaredNorm();
  };
  const double plus = loss_at(h);
  const double minus = loss_at(-h);
  return (plus - minus) / (2.0 * h);
}

double influence_fd_oracle(const DataPoint& z, const DataPoint& zp, const Dataset& data,
                           const TrainConfig& cfg, double h, const InfluenceOptions& options) {
  const FitResult base = train(data, cfg);
  return influence_fd_oracle(z, zp, data, base, cfg, h, options);
}

}  // namespace hetero
