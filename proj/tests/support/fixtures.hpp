#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "hetero/dataset.hpp"
#include "hetero/model.hpp"
#include "hetero/rng.hpp"
#include "hetero/synthetic.hpp"

namespace fixture {

// Gaussian-ish random features from the portable generator.
inline hetero::Dataset random_dataset(std::size_t n, int d, int c, std::uint64_t seed) {
  hetero::Rng rng(seed);
  Eigen::MatrixXd f(static_cast<Eigen::Index>(n), d);
  std::vector<int> labels;
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) f(static_cast<Eigen::Index>(i), j) = 2.0 * rng.uniform01() - 1.0;
    labels.push_back(static_cast<int>(i % static_cast<std::size_t>(c)));
  }
  return hetero::Dataset(f, labels, c);
}

inline hetero::ModelParams random_params(int c, int d, double scale, std::uint64_t seed,
                                         double ridge = 1e-3) {
  hetero::Rng rng(seed);
  auto p = hetero::ModelParams::zeros(c, d, ridge);
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta.data()[i] = scale * (2.0 * rng.uniform01() - 1.0);
  return p;
}

inline hetero::Dataset sd2(std::size_t a1, std::size_t a2, std::uint64_t seed) {
  const std::size_t counts[] = {a1, a2};
  return hetero::generate(hetero::builtin_mixture(counts, seed));
}

// Tight refinement for identity checks.
inline hetero::TrainConfig tight(double ridge = 1e-4) {
  hetero::TrainConfig c;
  c.ridge = ridge;
  c.grad_tol = 1e-12;
  c.max_newton_iters = 200;
  return c;
}

}  // namespace fixture
