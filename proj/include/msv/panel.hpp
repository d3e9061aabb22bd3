#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace msv {

/// T x N returns with a per-cell observation mask. Values under a cleared
/// mask bit are never read.
struct ReturnsPanel {
  using Values = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Mask = Eigen::Matrix<unsigned char, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Values values;
  Mask observed;
  std::vector<std::string> names;

  ReturnsPanel() = default;
  ReturnsPanel(Values v, Mask m, std::vector<std::string> names = {});

  /// Fully observed panel.
  static ReturnsPanel complete(Values v);

  int horizon() const { return static_cast<int>(values.rows()); }
  int assets() const { return static_cast<int>(values.cols()); }
  bool is_observed(int t, int n) const { return observed(t, n) != 0; }
  long observed_count() const;
  bool has_missing() const;

  /// Column indices observed at time t.
  std::vector<int> observed_indices(int t) const;

  /// Throws DataError on shape mismatch, non-finite observed values, or an
  /// all-missing column.
  void validate() const;
};

}  // namespace msv
