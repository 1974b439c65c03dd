#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace optrack {

/// Partition of a decision vector into P consecutive blocks.
class BlockLayout {
 public:
  BlockLayout() = default;
  explicit BlockLayout(std::vector<int> sizes);

  int num_blocks() const { return static_cast<int>(sizes_.size()); }
  int size(int block) const { return sizes_.at(static_cast<std::size_t>(block)); }
  int offset(int block) const { return offsets_.at(static_cast<std::size_t>(block)); }
  int total() const { return total_; }
  const std::vector<int>& sizes() const { return sizes_; }

  /// Throws DimensionError if `block` is not a valid index.
  void check_block(int block) const;

  bool operator==(const BlockLayout& other) const { return sizes_ == other.sizes_; }

 private:
  std::vector<int> sizes_;
  std::vector<int> offsets_;
  int total_ = 0;
};

/// A vector of length layout.total() with block views.
class BlockVector {
 public:
  BlockVector() = default;
  explicit BlockVector(BlockLayout layout);
  BlockVector(BlockLayout layout, Eigen::VectorXd data);

  const BlockLayout& layout() const { return layout_; }
  const Eigen::VectorXd& data() const { return data_; }
  Eigen::VectorXd& data() { return data_; }

  auto block(int i) { return data_.segment(layout_.offset(i), layout_.size(i)); }
  auto block(int i) const { return data_.segment(layout_.offset(i), layout_.size(i)); }

 private:
  BlockLayout layout_;
  Eigen::VectorXd data_;
};

/// w = (z, mu).
struct PrimalDualPoint {
  BlockVector z;
  Eigen::VectorXd mu;

  /// Stacked (z, mu) for distance computations.
  Eigen::VectorXd stacked() const;
};

}  // namespace optrack
