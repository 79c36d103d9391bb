#pragma once

#include <Eigen/SparseCore>
#include <algorithm>
#include <vector>

namespace mapdyn::detail {

// Compressed sparsity pattern plus the value slot of every emitted entry, so
// re-assembly at a new state only rewrites values. `emit(sink)` must call
// sink(row, col, value) for the same entries in the same order every time
// and never twice for one (row, col).
class PatternCache {
 public:
  using Matrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

  template <class Emit>
  void build(Eigen::Index rows, Eigen::Index cols, Emit&& emit) {
    std::vector<Eigen::Triplet<double, int>> triplets;
    emit([&](Eigen::Index r, Eigen::Index c, double) {
      triplets.emplace_back(static_cast<int>(r), static_cast<int>(c), 0.0);
    });
    pattern_.resize(rows, cols);
    pattern_.setFromTriplets(triplets.begin(), triplets.end());
    pattern_.makeCompressed();
    slots_.clear();
    slots_.reserve(triplets.size());
    const int* outer = pattern_.outerIndexPtr();
    const int* inner = pattern_.innerIndexPtr();
    for (const auto& t : triplets) {
      const int* it = std::lower_bound(inner + outer[t.col()], inner + outer[t.col() + 1], t.row());
      slots_.push_back(static_cast<int>(it - inner));
    }
  }

  template <class Emit>
  void fill(Matrix& out, Emit&& emit) const {
    if (out.rows() != pattern_.rows() || out.cols() != pattern_.cols() || out.nonZeros() != pattern_.nonZeros() ||
        !out.isCompressed()) {
      out = pattern_;
    }
    double* values = out.valuePtr();
    std::size_t k = 0;
    emit([&](Eigen::Index, Eigen::Index, double v) { values[slots_[k++]] = v; });
  }

  const Matrix& pattern() const { return pattern_; }

 private:
  Matrix pattern_;
  std::vector<int> slots_;
};

}  // namespace mapdyn::detail
