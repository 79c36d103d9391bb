#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <memory>
#include <vector>

namespace mapdyn {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

enum class CholeskyOrdering { kApproximateMinimumDegree, kNatural };

// Symbolic analysis of a symmetric sparsity pattern: fill-reducing pivot
// order, elimination tree and factor column layout. Immutable once built,
// so one instance can back numeric factorizations on many threads.
class CholeskySymbolic {
 public:
  // Only the lower triangle of `pattern` (row >= col) is read; storing the
  // full symmetric matrix is fine.
  explicit CholeskySymbolic(const SparseMatrix& pattern,
                            CholeskyOrdering ordering = CholeskyOrdering::kApproximateMinimumDegree);

  Eigen::Index size() const { return n_; }
  // order()[k] is the original index eliminated at step k.
  const std::vector<int>& order() const { return order_; }
  const std::vector<int>& inverse_order() const { return inverse_order_; }
  const std::vector<int>& elimination_tree() const { return parent_; }
  // Nonzeros of L, diagonal included.
  Eigen::Index factor_nonzeros() const { return column_start_.back(); }

  // True when `a` has exactly the analysed pattern.
  bool matches(const SparseMatrix& a) const;

 private:
  friend class SparseCholesky;

  Eigen::Index n_ = 0;
  std::vector<int> order_;
  std::vector<int> inverse_order_;
  std::vector<int> parent_;
  std::vector<int> column_start_;  // n + 1 offsets into L storage
  // Permuted upper triangle C = P A P^T in compressed columns.
  std::vector<int> c_outer_;
  std::vector<int> c_inner_;
  // For each stored value of the analysed matrix, its slot in C (-1 when the
  // entry lies in the strict upper triangle and is ignored).
  std::vector<int> value_slot_;
  std::vector<int> a_outer_;
  std::vector<int> a_inner_;
};

struct FactorOptions {
  // Added to every diagonal entry before factorization.
  double jitter = 0.0;
  // Factor S A S with S = diag(A)^-1/2 instead of A; solves and marginals
  // still refer to A. The pivot rule then applies to the scaled matrix.
  bool equilibrate = false;
};

// Numeric LL^T factorization P A P^T = L L^T on a shared symbolic analysis.
// A pivot below 1e-13 times the largest diagonal entry of A raises
// IndefiniteMatrixError carrying the original index of that pivot; any
// jitter must be requested explicitly.
class SparseCholesky {
 public:
  static constexpr double kPivotTolerance = 1e-13;

  SparseCholesky() = default;
  explicit SparseCholesky(std::shared_ptr<const CholeskySymbolic> symbolic);
  explicit SparseCholesky(const SparseMatrix& a,
                          CholeskyOrdering ordering = CholeskyOrdering::kApproximateMinimumDegree,
                          const FactorOptions& options = {});

  void factorize(const SparseMatrix& a, const FactorOptions& options = {});

  const std::shared_ptr<const CholeskySymbolic>& symbolic() const { return symbolic_; }
  bool factorized() const { return factorized_; }
  Eigen::Index size() const { return symbolic_ ? symbolic_->size() : 0; }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;

  // Diagonal of A^-1 at the given original indices, from one sparse
  // triangular solve per index.
  Eigen::VectorXd inverse_diagonal(const std::vector<Eigen::Index>& indices) const;
  // Dense A^-1.
  Eigen::MatrixXd inverse() const;
  double log_determinant() const;

  // L in the permuted index space, compressed lower columns (of the scaled
  // matrix when equilibrated).
  SparseMatrix factor() const;
  // Empty unless equilibrated: S indexed by original position.
  const Eigen::VectorXd& scaling() const { return scaling_; }

 private:
  void require_factor() const;
  void forward(double* y) const;
  void backward(double* y) const;

  std::shared_ptr<const CholeskySymbolic> symbolic_;
  std::vector<int> l_inner_;
  std::vector<double> l_values_;
  Eigen::VectorXd scaling_;
  bool factorized_ = false;
};

// One-shot solve A x = b with a symbolic analysis that may be reused.
Eigen::VectorXd sparse_cholesky_solve(const SparseMatrix& a, const Eigen::VectorXd& b,
                                      const std::shared_ptr<const CholeskySymbolic>& symbolic = nullptr);

}  // namespace mapdyn
