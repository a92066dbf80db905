#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hetero/dataset.hpp"

namespace hetero {

// Alphabet of the SD-K generators. The numeric value is the class index.
enum class Letter : std::uint8_t { R = 0, D = 1, B = 2, N = 3 };

inline constexpr int kWordLength = 10;
inline constexpr int kAlphabetSize = 4;

using Word = std::array<Letter, kWordLength>;

char letter_char(Letter letter);
Letter letter_from_char(char c);  // throws ContractError on anything but R, D, B, N
Word parse_word(std::string_view text);
std::string format_word(const Word& word);

struct SyntheticDistribution {
  std::array<double, kWordLength> feature_weights{};
  std::array<double, kAlphabetSize> label_weights{};  // indexed by Letter
  std::array<double, 3> thresholds{};                 // a1 < a2 < a3

  void validate() const;
  // C(x) = sum_i q_i * w(x_i), accumulated left to right.
  double score(const Word& word) const;
};

// R if C <= a1, D if a1 < C <= a2, B if a2 < C <= a3, N otherwise.
Letter label_of(const Word& word, const SyntheticDistribution& dist);
Letter label_of(std::string_view word, const SyntheticDistribution& dist);

// The three distributions of the SD-K family.
std::vector<SyntheticDistribution> builtin_distributions();

enum class Encoding { one_hot, integer };

// one_hot: 40 binary features, position-major (feature 4*i + letter).
// integer: 10 features holding the letter index.
int encoded_dim(Encoding encoding);
Eigen::VectorXd encode(const Word& word, Encoding encoding = Encoding::one_hot);
Word decode(const Eigen::VectorXd& features, Encoding encoding = Encoding::one_hot);

struct MixtureComponent {
  SyntheticDistribution distribution;
  std::size_t count = 0;
};

struct MixtureSpec {
  std::vector<MixtureComponent> components;
  std::uint64_t seed = 0;
  Encoding encoding = Encoding::one_hot;

  std::size_t total() const;
};

// Points of component i come from the seed stream mix_seed(seed, i) and are
// emitted in component order; ids run 0..N-1 and the component column holds i.
Dataset generate(const MixtureSpec& spec);

// Builds a spec from builtin distributions 1..K with the given counts.
MixtureSpec builtin_mixture(std::span<const std::size_t> counts, std::uint64_t seed,
                            Encoding encoding = Encoding::one_hot);

// Text form of a distribution list:
//   label_weights_1: R: 1.0, D: -1.0, N: 0.3, B: -0.3
//   feature_weights_1: [1, -1, 1, -1, 1, -1, 1, -1, 1, -1]
//   threshold_1: a_3=2.0, a_2=0.0, a_1=-2.0
// Blank lines and '#' comments are ignored. Errors carry the line number.
std::vector<SyntheticDistribution> parse_distributions(std::string_view text);
std::string format_distributions(std::span<const SyntheticDistribution> dists);

}  // namespace hetero
