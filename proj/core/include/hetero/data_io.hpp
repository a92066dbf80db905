#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <utility>
#include <vector>

#include "hetero/dataset.hpp"

namespace hetero {

// Raw IDX file: magic, big-endian dimension sizes and unsigned-byte payload.
struct IdxFile {
  std::array<std::uint8_t, 4> magic{};
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;
};

// Reads plain or gzip-compressed IDX. Only the unsigned byte type (0x08) is
// accepted. Throws DataFormatError on bad magic or a payload whose length
// differs from the product of the dimensions.
IdxFile read_idx(const std::filesystem::path& path);
IdxFile parse_idx(const std::vector<std::uint8_t>& bytes);

struct IdxSelection {
  // Original labels to keep; they become classes 0..k-1 in this order.
  // Empty keeps every label 0..max as is.
  std::vector<int> classes;
  // Points drawn per class by seeded sampling; 0 keeps all of them.
  std::size_t per_class = 0;
  std::uint64_t seed = 0;
};

// Image/label IDX pair to a Dataset with pixels scaled to [0, 1]. Point ids
// are the record indices in the file, and rows stay in file order.
// Throws ConfigError when a class has fewer than per_class examples.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 const IdxSelection& selection);
Dataset dataset_from_idx(const IdxFile& images, const IdxFile& labels,
                         const IdxSelection& selection);

struct MislabelResult {
  Dataset data;
  std::vector<PointId> corrupted_ids;  // ascending
};

// floor(r*n) points chosen uniformly without replacement each get a label
// drawn uniformly from the other C-1 classes.
MislabelResult mislabel(const Dataset& data, double rate, std::uint64_t seed);

struct SplitSpec {
  double train_fraction = 0.8;
  bool stratified = true;
  std::uint64_t seed = 0;
};

// Seeded (train, test) partition. Both parts keep the input row order.
std::pair<Dataset, Dataset> split(const Dataset& data, const SplitSpec& spec);

// Header `id,f0,...,f{d-1},label[,component]`; doubles at 17 significant
// digits. num_classes = 0 infers max label + 1.
void write_csv(std::ostream& out, const Dataset& data);
void write_csv(const std::filesystem::path& path, const Dataset& data);
Dataset read_csv(std::istream& in, int num_classes = 0);
Dataset read_csv(const std::filesystem::path& path, int num_classes = 0);

}  // namespace hetero
