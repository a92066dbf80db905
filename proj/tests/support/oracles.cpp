#include "oracles.hpp"

#include <cmath>

namespace oracle {

double loss(const Eigen::VectorXd& x, int y, const Eigen::MatrixXd& theta) {
  const int c = static_cast<int>(theta.rows());
  const int d = static_cast<int>(x.size());
  std::vector<double> logits(static_cast<std::size_t>(c));
  double mx = -INFINITY;
  for (int a = 0; a < c; ++a) {
    double s = theta(a, d);
    for (int j = 0; j < d; ++j) s += theta(a, j) * x(j);
    logits[static_cast<std::size_t>(a)] = s;
    mx = std::max(mx, s);
  }
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - mx);
  return mx + std::log(sum) - logits[static_cast<std::size_t>(y)];
}

double total_loss(const hetero::Dataset& z, const Eigen::MatrixXd& theta, double ridge) {
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const auto p = z.point(i);
    s += loss(p.features, p.label, theta);
  }
  return s / static_cast<double>(z.size()) + 0.5 * ridge * theta.squaredNorm();
}

namespace {

std::vector<double> softmax(const Eigen::VectorXd& x, const Eigen::MatrixXd& theta) {
  const int c = static_cast<int>(theta.rows());
  const int d = static_cast<int>(x.size());
  std::vector<double> p(static_cast<std::size_t>(c));
  double mx = -INFINITY;
  for (int a = 0; a < c; ++a) {
    double s = theta(a, d);
    for (int j = 0; j < d; ++j) s += theta(a, j) * x(j);
    p[static_cast<std::size_t>(a)] = s;
    mx = std::max(mx, s);
  }
  double sum = 0.0;
  for (auto& v : p) sum += (v = std::exp(v - mx));
  for (auto& v : p) v /= sum;
  return p;
}

double xt(const Eigen::VectorXd& x, int j) { return j < x.size() ? x(j) : 1.0; }

}  // namespace

Eigen::VectorXd gradient(const Eigen::VectorXd& x, int y, const Eigen::MatrixXd& theta) {
  const int c = static_cast<int>(theta.rows());
  const int d1 = static_cast<int>(theta.cols());
  const auto p = softmax(x, theta);
  Eigen::VectorXd g(c * d1);
  for (int a = 0; a < c; ++a)
    for (int j = 0; j < d1; ++j)
      g(a * d1 + j) = (p[static_cast<std::size_t>(a)] - (a == y ? 1.0 : 0.0)) * xt(x, j);
  return g;
}

Eigen::MatrixXd hessian(const hetero::Dataset& z, const Eigen::MatrixXd& theta, double ridge) {
  const int c = static_cast<int>(theta.rows());
  const int d1 = static_cast<int>(theta.cols());
  const int m = c * d1;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const auto pt = z.point(i);
    const auto p = softmax(pt.features, theta);
    for (int a = 0; a < c; ++a)
      for (int b = 0; b < c; ++b) {
        const double w = (a == b ? p[a] : 0.0) - p[a] * p[b];
        for (int j = 0; j < d1; ++j)
          for (int k = 0; k < d1; ++k) h(a * d1 + j, b * d1 + k) += w * xt(pt.features, j) * xt(pt.features, k);
      }
  }
  h /= static_cast<double>(z.size());
  h.diagonal().array() += ridge;
  return h;
}

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& at, double h) {
  Eigen::VectorXd g(at.size());
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    Eigen::VectorXd a = at, b = at;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& at, double h) {
  const Eigen::VectorXd f0 = f(at);
  Eigen::MatrixXd j(f0.size(), at.size());
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    Eigen::VectorXd a = at, b = at;
    a(i) += h;
    b(i) -= h;
    j.col(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return j;
}

Eigen::MatrixXd unflatten(const Eigen::VectorXd& flat, int c, int d1) {
  Eigen::MatrixXd t(c, d1);
  for (int a = 0; a < c; ++a)
    for (int j = 0; j < d1; ++j) t(a, j) = flat(a * d1 + j);
  return t;
}

Eigen::MatrixXd influence_matrix(const hetero::Dataset& z, const Eigen::MatrixXd& theta,
                                 double ridge, bool ridge_per_point) {
  const Eigen::MatrixXd hinv = hessian(z, theta, ridge).fullPivLu().inverse();
  const auto n = static_cast<Eigen::Index>(z.size());
  Eigen::VectorXd flat(theta.size());
  for (Eigen::Index a = 0; a < theta.rows(); ++a)
    for (Eigen::Index j = 0; j < theta.cols(); ++j) flat(a * theta.cols() + j) = theta(a, j);
  std::vector<Eigen::VectorXd> g;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto p = z.point(static_cast<std::size_t>(i));
    Eigen::VectorXd gi = gradient(p.features, p.label, theta);
    if (ridge_per_point) gi += ridge * flat;
    g.push_back(gi);
  }
  Eigen::MatrixXd x(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) x(i, j) = -g[static_cast<std::size_t>(j)].dot(hinv * g[static_cast<std::size_t>(i)]);
  return x;
}

std::vector<double> pair_moments(const Eigen::MatrixXd& x, int k_max) {
  std::vector<long double> s(static_cast<std::size_t>(k_max), 0.0L);
  long double pairs = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = i + 1; j < x.cols(); ++j) {
      pairs += 1;
      long double p = 1;
      for (int k = 0; k < k_max; ++k) s[static_cast<std::size_t>(k)] += (p *= x(i, j));
    }
  std::vector<double> out;
  for (auto v : s) out.push_back(static_cast<double>(v / pairs));
  return out;
}

double pair_variance(const Eigen::MatrixXd& x) {
  const auto m = pair_moments(x, 2);
  return m[1] - m[0] * m[0];
}

double accuracy(const hetero::Dataset& z, const Eigen::MatrixXd& theta) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const auto p = z.point(i);
    int best = 0;
    double best_v = -INFINITY;
    for (int a = 0; a < theta.rows(); ++a) {
      double s = theta(a, theta.cols() - 1);
      for (int j = 0; j < p.features.size(); ++j) s += theta(a, j) * p.features(j);
      if (s > best_v) {
        best_v = s;
        best = a;
      }
    }
    hits += best == p.label;
  }
  return static_cast<double>(hits) / static_cast<double>(z.size());
}

std::vector<double> label_probabilities(const hetero::SyntheticDistribution& dist) {
  std::vector<double> counts(4, 0.0);
  hetero::Word w{};
  const hetero::Letter letters[] = {hetero::Letter::R, hetero::Letter::D, hetero::Letter::B,
                                    hetero::Letter::N};
  for (long code = 0; code < (1L << 20); ++code) {
    for (int i = 0; i < 10; ++i) w[i] = letters[(code >> (2 * i)) & 3];
    double c = 0.0;
    for (int i = 0; i < 10; ++i) c += dist.feature_weights[i] * dist.label_weights[static_cast<int>(w[i])];
    int label = c <= dist.thresholds[0] ? 0 : c <= dist.thresholds[1] ? 1 : c <= dist.thresholds[2] ? 2 : 3;
    counts[static_cast<std::size_t>(label)] += 1.0;
  }
  for (auto& v : counts) v /= static_cast<double>(1L << 20);
  return counts;
}

}  // namespace oracle
