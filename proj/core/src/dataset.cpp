#include "hetero/dataset.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <unordered_set>

#include "hetero/error.hpp"

namespace hetero {

Dataset::Dataset(Eigen::MatrixXd features, std::vector<int> labels, int num_classes,
                 std::vector<PointId> ids, std::vector<int> components)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      ids_(std::move(ids)),
      components_(std::move(components)),
      num_classes_(num_classes) {
  const auto n = labels_.size();
  if (static_cast<std::size_t>(features_.rows()) != n) {
    throw ContractError("dataset: feature rows (" + std::to_string(features_.rows()) +
                        ") != label count (" + std::to_string(n) + ")");
  }
  if (num_classes_ < 1) throw ContractError("dataset: num_classes must be >= 1");
  for (int y : labels_) {
    if (y < 0 || y >= num_classes_) {
      throw ContractError("dataset: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(num_classes_) + ")");
    }
  }
  if (!features_.allFinite()) throw ContractError("dataset: non-finite feature value");
  if (ids_.empty()) {
    ids_.resize(n);
    std::iota(ids_.begin(), ids_.end(), PointId{0});
  } else if (ids_.size() != n) {
    throw ContractError("dataset: id count != point count");
  }
  std::unordered_set<PointId> seen(ids_.begin(), ids_.end());
  if (seen.size() != n) throw ContractError("dataset: duplicate point id");
  if (!components_.empty() && components_.size() != n) {
    throw ContractError("dataset: component count != point count");
  }
}

DataPoint Dataset::point(std::size_t row) const {
  return DataPoint{features_.row(static_cast<Eigen::Index>(row)).transpose(), labels_.at(row)};
}

std::optional<std::size_t> Dataset::row_of(PointId id) const {
  auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - ids_.begin());
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Eigen::MatrixXd f(static_cast<Eigen::Index>(rows.size()), features_.cols());
  std::vector<int> labels;
  std::vector<PointId> ids;
  std::vector<int> comps;
  labels.reserve(rows.size());
  ids.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto r = rows[k];
    if (r >= size()) throw ContractError("dataset: subset row out of range");
    f.row(static_cast<Eigen::Index>(k)) = features_.row(static_cast<Eigen::Index>(r));
    labels.push_back(labels_[r]);
    ids.push_back(ids_[r]);
    if (has_components()) comps.push_back(components_[r]);
  }
  return Dataset(std::move(f), std::move(labels), num_classes_, std::move(ids), std::move(comps));
}

Dataset Dataset::without_rows(std::span<const std::size_t> rows) const {
  std::vector<bool> drop(size(), false);
  for (auto r : rows) {
    if (r >= size()) throw ContractError("dataset: removal row out of range");
    drop[r] = true;
  }
  std::vector<std::size_t> keep;
  keep.reserve(size());
  for (std::size_t i = 0; i < size(); ++i)
    if (!drop[i]) keep.push_back(i);
  return subset(keep);
}

Dataset Dataset::without_ids(std::span<const PointId> ids) const {
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (auto id : ids) {
    auto r = row_of(id);
    if (!r) throw ContractError("dataset: unknown point id " + std::to_string(id));
    rows.push_back(*r);
  }
  return without_rows(rows);
}

Dataset Dataset::with_labels(std::vector<int> labels) const {
  return Dataset(features_, std::move(labels), num_classes_, ids_, components_);
}

Dataset Dataset::concat(const Dataset& other) const {
  if (empty()) return other;
  if (other.empty()) return *this;
  if (other.dim() != dim()) throw ContractError("dataset: concat dimension mismatch");
  if (has_components() != other.has_components()) {
    throw ContractError("dataset: concat component column mismatch");
  }
  Eigen::MatrixXd f(features_.rows() + other.features_.rows(), features_.cols());
  f << features_, other.features_;
  auto labels = labels_;
  labels.insert(labels.end(), other.labels_.begin(), other.labels_.end());
  auto ids = ids_;
  ids.insert(ids.end(), other.ids_.begin(), other.ids_.end());
  auto comps = components_;
  comps.insert(comps.end(), other.components_.begin(), other.components_.end());
  return Dataset(std::move(f), std::move(labels), std::max(num_classes_, other.num_classes_),
                 std::move(ids), std::move(comps));
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes_), 0);
  for (int y : labels_) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

bool operator==(const Dataset& a, const Dataset& b) {
  return a.num_classes_ == b.num_classes_ && a.labels_ == b.labels_ && a.ids_ == b.ids_ &&
         a.components_ == b.components_ && a.features_.rows() == b.features_.rows() &&
         a.features_.cols() == b.features_.cols() && a.features_ == b.features_;
}

}  // namespace hetero
