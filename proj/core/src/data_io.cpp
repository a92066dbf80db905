#include "hetero/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include <zlib.h>

#include "hetero/error.hpp"
#include "hetero/rng.hpp"

namespace hetero {
namespace {

std::string hex_magic(const std::array<std::uint8_t, 4>& m) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02X %02X %02X %02X", m[0], m[1], m[2], m[3]);
  return buf;
}

std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("idx: file not found: " + path.string());
  }
  // gzread passes uncompressed files through unchanged.
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw DataFormatError("idx: cannot open " + path.string());
  std::vector<std::uint8_t> bytes;
  std::array<std::uint8_t, 1 << 16> buf{};
  while (true) {
    const int got = gzread(f, buf.data(), static_cast<unsigned>(buf.size()));
    if (got < 0) {
      int err = 0;
      const std::string msg = gzerror(f, &err);
      gzclose(f);
      throw DataFormatError("idx: read error in " + path.string() + ": " + msg);
    }
    if (got == 0) break;
    bytes.insert(bytes.end(), buf.begin(), buf.begin() + got);
  }
  gzclose(f);
  return bytes;
}

std::uint64_t product(const std::vector<std::uint32_t>& dims) {
  std::uint64_t p = 1;
  for (auto d : dims) p *= d;
  return p;
}

[[noreturn]] void csv_fail(std::size_t line, const std::string& msg) {
  throw DataFormatError("csv line " + std::to_string(line) + ": " + msg);
}

std::vector<std::string_view> split_commas(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(',', start);
    out.push_back(s.substr(start, pos == s.npos ? s.npos : pos - start));
    if (pos == s.npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_cell(std::string_view cell, std::size_t line, const char* what) {
  T v{};
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    csv_fail(line, std::string("non-numeric ") + what + " cell '" + std::string(cell) + "'");
  }
  return v;
}

}  // namespace

IdxFile parse_idx(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) throw DataFormatError("idx: file shorter than the 4-byte magic");
  IdxFile f;
  std::copy_n(bytes.begin(), 4, f.magic.begin());
  if (f.magic[0] != 0 || f.magic[1] != 0) {
    throw DataFormatError("idx: bad magic " + hex_magic(f.magic) + " (expected 00 00 08 xx)");
  }
  if (f.magic[2] != 0x08) {
    throw DataFormatError("idx: bad magic " + hex_magic(f.magic) +
                          " (only the unsigned byte type 0x08 is supported)");
  }
  const std::size_t ndim = f.magic[3];
  if (ndim == 0) throw DataFormatError("idx: bad magic, zero dimensions");
  const std::size_t header = 4 + 4 * ndim;
  if (bytes.size() < header) throw DataFormatError("idx: truncated header");
  for (std::size_t k = 0; k < ndim; ++k) {
    const auto* p = bytes.data() + 4 + 4 * k;
    f.dims.push_back((std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
                     (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]});
  }
  const std::uint64_t expected = product(f.dims);
  const std::uint64_t have = bytes.size() - header;
  if (have < expected) {
    throw DataFormatError("idx: truncated payload, header promises " + std::to_string(expected) +
                          " bytes but file has " + std::to_string(have));
  }
  if (have > expected) {
    throw DataFormatError("idx: payload has " + std::to_string(have - expected) +
                          " trailing bytes beyond the header dimensions");
  }
  f.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return f;
}

IdxFile read_idx(const std::filesystem::path& path) {
  try {
    return parse_idx(read_maybe_gzip(path));
  } catch (const DataFormatError& e) {
    throw DataFormatError(path.filename().string() + ": " + e.what());
  }
}

Dataset dataset_from_idx(const IdxFile& images, const IdxFile& labels,
                         const IdxSelection& selection) {
  if (images.dims.size() != 3) {
    throw DataFormatError("idx: image file must have 3 dimensions, has " +
                          std::to_string(images.dims.size()));
  }
  if (labels.dims.size() != 1) {
    throw DataFormatError("idx: label file must have 1 dimension, has " +
                          std::to_string(labels.dims.size()));
  }
  const std::size_t count = images.dims[0];
  if (labels.dims[0] != count) {
    throw DataFormatError("idx: " + std::to_string(count) + " images but " +
                          std::to_string(labels.dims[0]) + " labels");
  }
  const std::size_t pixels = std::size_t{images.dims[1]} * images.dims[2];

  // Original label -> class index.
  std::map<int, int> remap;
  if (selection.classes.empty()) {
    int mx = 0;
    for (auto b : labels.payload) mx = std::max(mx, static_cast<int>(b));
    for (int c = 0; c <= mx; ++c) remap[c] = c;
  } else {
    for (int c : selection.classes) {
      if (remap.count(c)) throw ConfigError("idx: class " + std::to_string(c) + " listed twice");
      const int k = static_cast<int>(remap.size());
      remap[c] = k;
    }
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < count; ++i) {
    const int y = labels.payload[i];
    if (remap.count(y)) by_class[y].push_back(i);
  }
  std::vector<std::size_t> keep;
  for (const auto& [orig, cls] : remap) {
    auto rows = by_class[orig];
    if (selection.per_class > 0) {
      if (rows.size() < selection.per_class) {
        throw ConfigError("idx: class " + std::to_string(orig) + " has " +
                          std::to_string(rows.size()) + " examples, " +
                          std::to_string(selection.per_class) + " requested");
      }
      Rng rng(mix_seed(selection.seed, static_cast<std::uint64_t>(orig)));
      rng.shuffle(std::span<std::size_t>(rows));
      rows.resize(selection.per_class);
    }
    keep.insert(keep.end(), rows.begin(), rows.end());
  }
  std::sort(keep.begin(), keep.end());

  Eigen::MatrixXd features(static_cast<Eigen::Index>(keep.size()),
                           static_cast<Eigen::Index>(pixels));
  std::vector<int> out_labels;
  std::vector<PointId> ids;
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const std::size_t i = keep[r];
    const auto* px = images.payload.data() + i * pixels;
    for (std::size_t p = 0; p < pixels; ++p) {
      features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p)) = px[p] / 255.0;
    }
    out_labels.push_back(remap.at(labels.payload[i]));
    ids.push_back(static_cast<PointId>(i));
  }
  return Dataset(std::move(features), std::move(out_labels), static_cast<int>(remap.size()),
                 std::move(ids));
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 const IdxSelection& selection) {
  return dataset_from_idx(read_idx(images), read_idx(labels), selection);
}

MislabelResult mislabel(const Dataset& data, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ContractError("mislabel: rate outside [0, 1]");
  if (data.num_classes() < 2) throw ContractError("mislabel: need at least two classes");
  const std::size_t n = data.size();
  const auto k = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n)));
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(rows));
  rows.resize(k);
  std::sort(rows.begin(), rows.end());
  std::vector<int> labels = data.labels();
  MislabelResult out;
  for (auto r : rows) {
    const auto draw = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(data.num_classes() - 1)));
    labels[r] = draw + (draw >= labels[r] ? 1 : 0);
    out.corrupted_ids.push_back(data.ids()[r]);
  }
  std::sort(out.corrupted_ids.begin(), out.corrupted_ids.end());
  out.data = data.with_labels(std::move(labels));
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& data, const SplitSpec& spec) {
  const std::size_t n = data.size();
  if (n < 2) throw ContractError("split: need at least two points");
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ContractError("split: train_fraction must lie in (0, 1)");
  }
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train == n) {
    throw ContractError("split: fraction " + std::to_string(spec.train_fraction) +
                        " leaves an empty side for n=" + std::to_string(n));
  }
  std::vector<std::size_t> train_rows;
  if (!spec.stratified) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    Rng rng(spec.seed);
    rng.shuffle(std::span<std::size_t>(rows));
    train_rows.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
  } else {
    const int c = data.num_classes();
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(c));
    for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(data.labels()[i])].push_back(i);
    // Floor quotas, then hand out the remaining slots by largest remainder.
    std::vector<std::size_t> quota(by_class.size());
    std::vector<double> frac(by_class.size());
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < by_class.size(); ++k) {
      const double exact = spec.train_fraction * static_cast<double>(by_class[k].size());
      quota[k] = static_cast<std::size_t>(std::floor(exact));
      frac[k] = exact - std::floor(exact);
      assigned += quota[k];
    }
    std::vector<std::size_t> order(by_class.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t i = 0; assigned < n_train && i < order.size(); ++i) {
      if (quota[order[i]] < by_class[order[i]].size()) {
        ++quota[order[i]];
        ++assigned;
      }
    }
    for (std::size_t k = 0; k < by_class.size(); ++k) {
      auto& rows = by_class[k];
      Rng rng(mix_seed(spec.seed, k));
      rng.shuffle(std::span<std::size_t>(rows));
      train_rows.insert(train_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(quota[k]));
    }
  }
  std::sort(train_rows.begin(), train_rows.end());
  return {data.subset(train_rows), data.without_rows(train_rows)};
}

void write_csv(std::ostream& out, const Dataset& data) {
  out << "id";
  for (int j = 0; j < data.dim(); ++j) out << ",f" << j;
  out << ",label";
  if (data.has_components()) out << ",component";
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.ids()[i];
    for (int j = 0; j < data.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g",
                    data.features()(static_cast<Eigen::Index>(i), j));
      out << ',' << buf;
    }
    out << ',' << data.labels()[i];
    if (data.has_components()) out << ',' << data.components()[i];
    out << '\n';
  }
  if (!out) throw Error("csv: write failed");
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("csv: cannot open " + path.string() + " for writing");
  write_csv(out, data);
}

Dataset read_csv(std::istream& in, int num_classes) {
  static const std::string kSchema = "id,f0,...,f{d-1},label[,component]";
  std::string line;
  if (!std::getline(in, line)) csv_fail(1, "empty file, expected header " + kSchema);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  bool with_component = !header.empty() && header.back() == "component";
  const std::size_t label_col = header.size() - (with_component ? 2 : 1);
  bool ok = header.size() >= 2 + (with_component ? 1 : 0) && header[0] == "id" &&
            header[label_col] == "label";
  for (std::size_t j = 1; ok && j < label_col; ++j) ok = header[j] == "f" + std::to_string(j - 1);
  if (!ok) csv_fail(1, "bad header, expected " + kSchema);
  const std::size_t d = label_col - 1;

  std::vector<double> values;
  std::vector<int> labels;
  std::vector<PointId> ids;
  std::vector<int> comps;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      csv_fail(line_no, "expected " + std::to_string(header.size()) + " cells, got " +
                            std::to_string(cells.size()));
    }
    ids.push_back(parse_cell<PointId>(cells[0], line_no, "id"));
    for (std::size_t j = 1; j <= d; ++j) {
      const double v = parse_cell<double>(cells[j], line_no, "feature");
      if (!std::isfinite(v)) csv_fail(line_no, "non-finite feature value");
      values.push_back(v);
    }
    const int y = parse_cell<int>(cells[label_col], line_no, "label");
    if (y < 0) csv_fail(line_no, "negative label");
    labels.push_back(y);
    if (with_component) comps.push_back(parse_cell<int>(cells[label_col + 1], line_no, "component"));
  }
  const auto n = static_cast<Eigen::Index>(labels.size());
  Eigen::MatrixXd features(n, static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(d); ++j)
      features(i, j) = values[static_cast<std::size_t>(i) * d + static_cast<std::size_t>(j)];
  int classes = num_classes;
  if (classes == 0) {
    classes = 1;
    for (int y : labels) classes = std::max(classes, y + 1);
  }
  try {
    return Dataset(std::move(features), std::move(labels), classes, std::move(ids), std::move(comps));
  } catch (const ContractError& e) {
    throw DataFormatError(std::string("csv: ") + e.what());
  }
}

Dataset read_csv(const std::filesystem::path& path, int num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("csv: cannot open " + path.string());
  try {
    return read_csv(in, num_classes);
  } catch (const DataFormatError& e) {
    throw DataFormatError(path.string() + ": " + e.what());
  }
}

}  // namespace hetero
