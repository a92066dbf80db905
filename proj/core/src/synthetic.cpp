#include "hetero/synthetic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>

#include "hetero/error.hpp"
#include "hetero/rng.hpp"

namespace hetero {
namespace {

constexpr std::array<Letter, kAlphabetSize> kLetters{Letter::R, Letter::D, Letter::B, Letter::N};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& msg) {
  throw DataFormatError("distribution spec line " + std::to_string(line) + ": " + msg);
}

double parse_number(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    parse_fail(line, "expected a number, got '" + s + "'");
  }
  return v;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Partial {
  std::optional<std::array<double, kAlphabetSize>> label_weights;
  std::optional<std::array<double, kWordLength>> feature_weights;
  std::optional<std::array<double, 3>> thresholds;
};

}  // namespace

char letter_char(Letter letter) {
  static constexpr char kChars[] = {'R', 'D', 'B', 'N'};
  return kChars[static_cast<int>(letter)];
}

Letter letter_from_char(char c) {
  switch (c) {
    case 'R': return Letter::R;
    case 'D': return Letter::D;
    case 'B': return Letter::B;
    case 'N': return Letter::N;
    default: throw ContractError(std::string("synthetic: invalid letter '") + c + "'");
  }
}

Word parse_word(std::string_view text) {
  if (text.size() != kWordLength) {
    throw ContractError("synthetic: word must have 10 letters, got " + std::to_string(text.size()));
  }
  Word w{};
  for (int i = 0; i < kWordLength; ++i) w[i] = letter_from_char(text[i]);
  return w;
}

std::string format_word(const Word& word) {
  std::string s;
  for (auto l : word) s.push_back(letter_char(l));
  return s;
}

void SyntheticDistribution::validate() const {
  for (double v : feature_weights)
    if (!std::isfinite(v)) throw ContractError("synthetic: non-finite feature weight");
  for (double v : label_weights)
    if (!std::isfinite(v)) throw ContractError("synthetic: non-finite label weight");
  if (!(thresholds[0] < thresholds[1] && thresholds[1] < thresholds[2])) {
    throw ContractError("synthetic: thresholds must be strictly ascending");
  }
}

double SyntheticDistribution::score(const Word& word) const {
  double c = 0.0;
  for (int i = 0; i < kWordLength; ++i) {
    c += feature_weights[i] * label_weights[static_cast<int>(word[i])];
  }
  return c;
}

Letter label_of(const Word& word, const SyntheticDistribution& dist) {
  const double c = dist.score(word);
  if (c <= dist.thresholds[0]) return Letter::R;
  if (c <= dist.thresholds[1]) return Letter::D;
  if (c <= dist.thresholds[2]) return Letter::B;
  return Letter::N;
}

Letter label_of(std::string_view word, const SyntheticDistribution& dist) {
  return label_of(parse_word(word), dist);
}

std::vector<SyntheticDistribution> builtin_distributions() {
  auto make = [](std::array<double, kWordLength> q, double r, double d, double n, double b,
                 std::array<double, 3> a) {
    SyntheticDistribution s;
    s.feature_weights = q;
    s.label_weights[static_cast<int>(Letter::R)] = r;
    s.label_weights[static_cast<int>(Letter::D)] = d;
    s.label_weights[static_cast<int>(Letter::N)] = n;
    s.label_weights[static_cast<int>(Letter::B)] = b;
    s.thresholds = a;
    return s;
  };
  return {
      make({1, -1, 1, -1, 1, -1, 1, -1, 1, -1}, 1.0, -1.0, 0.3, -0.3, {-2.0, 0.0, 2.0}),
      make({0.5, 0.5, -1, 1, 0, -0.5, 1, -1, 0.5, -0.5}, -0.4, 1.0, -0.8, 0.6, {-1.5, 0.0, 1.5}),
      make({1, 0.5, 1, 1, 0.5, -0.5, -1, -1.5, -0.5, 1}, 1.2, 0.4, -0.2, -0.8, {-2.5, 0.0, 2.0}),
  };
}

int encoded_dim(Encoding encoding) {
  return encoding == Encoding::one_hot ? kWordLength * kAlphabetSize : kWordLength;
}

Eigen::VectorXd encode(const Word& word, Encoding encoding) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(encoded_dim(encoding));
  for (int i = 0; i < kWordLength; ++i) {
    const int l = static_cast<int>(word[i]);
    if (encoding == Encoding::one_hot) {
      x(i * kAlphabetSize + l) = 1.0;
    } else {
      x(i) = l;
    }
  }
  return x;
}

Word decode(const Eigen::VectorXd& features, Encoding encoding) {
  if (features.size() != encoded_dim(encoding)) {
    throw ContractError("synthetic: decode got " + std::to_string(features.size()) + " features");
  }
  Word w{};
  for (int i = 0; i < kWordLength; ++i) {
    int letter = -1;
    if (encoding == Encoding::one_hot) {
      for (int l = 0; l < kAlphabetSize; ++l) {
        const double v = features(i * kAlphabetSize + l);
        if (v == 1.0 && letter < 0) {
          letter = l;
        } else if (v != 0.0) {
          letter = -2;
        }
      }
    } else {
      const double v = features(i);
      if (v == std::floor(v) && v >= 0 && v < kAlphabetSize) letter = static_cast<int>(v);
    }
    if (letter < 0) throw ContractError("synthetic: position " + std::to_string(i) + " is not a valid encoding");
    w[i] = kLetters[letter];
  }
  return w;
}

std::size_t MixtureSpec::total() const {
  std::size_t n = 0;
  for (const auto& c : components) n += c.count;
  return n;
}

Dataset generate(const MixtureSpec& spec) {
  const std::size_t n = spec.total();
  if (n == 0) throw ContractError("synthetic: mixture has no points");
  for (const auto& c : spec.components) c.distribution.validate();
  Eigen::MatrixXd features(static_cast<Eigen::Index>(n), encoded_dim(spec.encoding));
  std::vector<int> labels;
  std::vector<int> components;
  labels.reserve(n);
  components.reserve(n);
  Eigen::Index row = 0;
  for (std::size_t ci = 0; ci < spec.components.size(); ++ci) {
    const auto& comp = spec.components[ci];
    Rng rng(mix_seed(spec.seed, ci));
    for (std::size_t k = 0; k < comp.count; ++k) {
      Word w{};
      for (auto& l : w) l = kLetters[rng.uniform_index(kAlphabetSize)];
      features.row(row++) = encode(w, spec.encoding).transpose();
      labels.push_back(static_cast<int>(label_of(w, comp.distribution)));
      components.push_back(static_cast<int>(ci));
    }
  }
  return Dataset(std::move(features), std::move(labels), kAlphabetSize, {}, std::move(components));
}

MixtureSpec builtin_mixture(std::span<const std::size_t> counts, std::uint64_t seed,
                            Encoding encoding) {
  const auto dists = builtin_distributions();
  if (counts.size() > dists.size()) {
    throw ContractError("synthetic: at most " + std::to_string(dists.size()) + " components");
  }
  MixtureSpec spec;
  spec.seed = seed;
  spec.encoding = encoding;
  for (std::size_t i = 0; i < counts.size(); ++i) spec.components.push_back({dists[i], counts[i]});
  return spec;
}

std::vector<SyntheticDistribution> parse_distributions(std::string_view text) {
  std::map<int, Partial> parts;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) parse_fail(line_no, "expected 'key: value'");
    const std::string key = trim(std::string_view(line).substr(0, colon));
    const std::string value = trim(std::string_view(line).substr(colon + 1));
    const auto us = key.rfind('_');
    if (us == std::string::npos) parse_fail(line_no, "unknown key '" + key + "'");
    const std::string base = key.substr(0, us);
    int index = 0;
    {
      const std::string idx = key.substr(us + 1);
      const auto [p, ec] = std::from_chars(idx.data(), idx.data() + idx.size(), index);
      if (ec != std::errc() || p != idx.data() + idx.size() || index < 1) {
        parse_fail(line_no, "key '" + key + "' needs a positive index suffix");
      }
    }
    Partial& part = parts[index];
    if (base == "label_weights") {
      if (part.label_weights) parse_fail(line_no, "duplicate key '" + key + "'");
      std::array<double, kAlphabetSize> w{};
      std::array<bool, kAlphabetSize> seen{};
      for (const auto& item : split(value, ',')) {
        const auto c = item.find(':');
        if (c == std::string::npos) parse_fail(line_no, "expected 'L: weight', got '" + item + "'");
        const std::string letter = trim(std::string_view(item).substr(0, c));
        if (letter.size() != 1 || std::string_view("RDBN").find(letter[0]) == std::string_view::npos) {
          parse_fail(line_no, "invalid letter '" + letter + "'");
        }
        const int l = static_cast<int>(letter_from_char(letter[0]));
        if (seen[l]) parse_fail(line_no, "letter " + letter + " given twice");
        seen[l] = true;
        w[l] = parse_number(trim(std::string_view(item).substr(c + 1)), line_no);
      }
      if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
        parse_fail(line_no, "label weights need all of R, D, B, N");
      }
      part.label_weights = w;
    } else if (base == "feature_weights") {
      if (part.feature_weights) parse_fail(line_no, "duplicate key '" + key + "'");
      if (value.size() < 2 || value.front() != '[' || value.back() != ']') {
        parse_fail(line_no, "feature weights must be a bracketed list");
      }
      const auto items = split(std::string_view(value).substr(1, value.size() - 2), ',');
      if (items.size() != kWordLength) {
        parse_fail(line_no, "feature weights need exactly 10 entries, got " + std::to_string(items.size()));
      }
      std::array<double, kWordLength> q{};
      for (int i = 0; i < kWordLength; ++i) q[i] = parse_number(items[i], line_no);
      part.feature_weights = q;
    } else if (base == "threshold") {
      if (part.thresholds) parse_fail(line_no, "duplicate key '" + key + "'");
      std::array<double, 3> a{};
      std::array<bool, 3> seen{};
      for (const auto& item : split(value, ',')) {
        const auto eq = item.find('=');
        const std::string name = trim(std::string_view(item).substr(0, eq));
        if (eq == std::string::npos || name.size() != 3 || name.compare(0, 2, "a_") != 0 ||
            name[2] < '1' || name[2] > '3') {
          parse_fail(line_no, "expected a_1=.., a_2=.., a_3=.., got '" + item + "'");
        }
        const int k = name[2] - '1';
        if (seen[k]) parse_fail(line_no, name + " given twice");
        seen[k] = true;
        a[k] = parse_number(trim(std::string_view(item).substr(eq + 1)), line_no);
      }
      if (!(seen[0] && seen[1] && seen[2])) parse_fail(line_no, "thresholds need a_1, a_2, a_3");
      part.thresholds = a;
    } else {
      parse_fail(line_no, "unknown key '" + key + "'");
    }
  }
  std::vector<SyntheticDistribution> out;
  int expected = 1;
  for (const auto& [index, part] : parts) {
    if (index != expected++) {
      throw DataFormatError("distribution spec: indices must run 1..K without gaps");
    }
    if (!part.label_weights || !part.feature_weights || !part.thresholds) {
      throw DataFormatError("distribution spec: distribution " + std::to_string(index) +
                            " needs label_weights, feature_weights and threshold");
    }
    SyntheticDistribution d;
    d.label_weights = *part.label_weights;
    d.feature_weights = *part.feature_weights;
    d.thresholds = *part.thresholds;
    try {
      d.validate();
    } catch (const ContractError& e) {
      throw DataFormatError("distribution spec: distribution " + std::to_string(index) + ": " +
                            e.what());
    }
    out.push_back(d);
  }
  if (out.empty()) throw DataFormatError("distribution spec: no distributions");
  return out;
}

std::string format_distributions(std::span<const SyntheticDistribution> dists) {
  std::string out;
  for (std::size_t i = 0; i < dists.size(); ++i) {
    const auto& d = dists[i];
    const std::string idx = std::to_string(i + 1);
    out += "label_weights_" + idx + ":";
    for (int k = 0; k < kAlphabetSize; ++k) {
      out += std::string(k ? ", " : " ") + letter_char(kLetters[k]) + ": " +
             format_number(d.label_weights[k]);
    }
    out += "\nfeature_weights_" + idx + ": [";
    for (int k = 0; k < kWordLength; ++k) out += (k ? ", " : "") + format_number(d.feature_weights[k]);
    out += "]\nthreshold_" + idx + ": a_3=" + format_number(d.thresholds[2]) +
           ", a_2=" + format_number(d.thresholds[1]) + ", a_1=" + format_number(d.thresholds[0]) +
           "\n";
  }
  return out;
}

}  // namespace hetero
