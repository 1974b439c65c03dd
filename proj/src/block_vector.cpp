#include "optrack/block_vector.hpp"

#include <string>
#include <utility>

#include "optrack/errors.hpp"

namespace optrack {

BlockLayout::BlockLayout(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.empty()) {
    throw ModelError("block layout needs at least one block");
  }
  offsets_.reserve(sizes_.size());
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    if (sizes_[i] < 1) {
      throw ModelError("block " + std::to_string(i) + " has non-positive size " +
                       std::to_string(sizes_[i]));
    }
    offsets_.push_back(total_);
    total_ += sizes_[i];
  }
}

void BlockLayout::check_block(int block) const {
  if (block < 0 || block >= num_blocks()) {
    throw DimensionError("block index " + std::to_string(block) + " out of range [0, " +
                         std::to_string(num_blocks()) + ")");
  }
}

BlockVector::BlockVector(BlockLayout layout)
    : layout_(std::move(layout)), data_(Eigen::VectorXd::Zero(layout_.total())) {}

BlockVector::BlockVector(BlockLayout layout, Eigen::VectorXd data)
    : layout_(std::move(layout)), data_(std::move(data)) {
  if (data_.size() != layout_.total()) {
    throw DimensionError("block vector data has length " + std::to_string(data_.size()) +
                         ", layout expects " + std::to_string(layout_.total()));
  }
}

Eigen::VectorXd PrimalDualPoint::stacked() const {
  Eigen::VectorXd w(z.data().size() + mu.size());
  w << z.data(), mu;
  return w;
}

}  // namespace optrack
