#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace hetero {

using PointId = std::int64_t;

struct DataPoint {
  Eigen::VectorXd features;
  int label = 0;
};

// Labeled sample with stable per-point ids.
//
// Rows of `features()` are points. Ids survive subsetting, so a point keeps
// its identity through splits and purification removals. The optional
// component column records which generating distribution produced a point.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Eigen::MatrixXd features, std::vector<int> labels, int num_classes,
          std::vector<PointId> ids = {}, std::vector<int> components = {});

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  int dim() const { return static_cast<int>(features_.cols()); }
  int num_classes() const { return num_classes_; }

  const Eigen::MatrixXd& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<PointId>& ids() const { return ids_; }
  const std::vector<int>& components() const { return components_; }
  bool has_components() const { return !components_.empty(); }

  DataPoint point(std::size_t row) const;
  std::optional<std::size_t> row_of(PointId id) const;

  Dataset subset(std::span<const std::size_t> rows) const;
  Dataset without_rows(std::span<const std::size_t> rows) const;
  Dataset without_ids(std::span<const PointId> ids) const;
  Dataset with_labels(std::vector<int> labels) const;
  // Rows of `other` appended after this dataset's rows.
  Dataset concat(const Dataset& other) const;

  std::vector<std::size_t> class_counts() const;

  friend bool operator==(const Dataset& a, const Dataset& b);

 private:
  Eigen::MatrixXd features_;
  std::vector<int> labels_;
  std::vector<PointId> ids_;
  std::vector<int> components_;
  int num_classes_ = 0;
};

}  // namespace hetero
