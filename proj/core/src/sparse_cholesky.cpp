#include "mapdyn/sparse_cholesky.hpp"

#include <Eigen/OrderingMethods>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mapdyn/errors.hpp"

namespace mapdyn {

namespace {

// Nonzero pattern of row k of L (CSparse ereach): written to
// stack[top..n-1] in topological order; returns top. `mark` must be all
// false on entry and is restored on exit.
int row_pattern(const std::vector<int>& c_outer, const std::vector<int>& c_inner, int k,
                const std::vector<int>& parent, std::vector<int>& stack, std::vector<char>& mark) {
  const int n = static_cast<int>(parent.size());
  int top = n;
  mark[static_cast<std::size_t>(k)] = 1;
  for (int p = c_outer[static_cast<std::size_t>(k)]; p < c_outer[static_cast<std::size_t>(k) + 1]; ++p) {
    int i = c_inner[static_cast<std::size_t>(p)];
    if (i > k) continue;
    int len = 0;
    for (; !mark[static_cast<std::size_t>(i)]; i = parent[static_cast<std::size_t>(i)]) {
      stack[static_cast<std::size_t>(len++)] = i;
      mark[static_cast<std::size_t>(i)] = 1;
    }
    while (len > 0) stack[static_cast<std::size_t>(--top)] = stack[static_cast<std::size_t>(--len)];
  }
  for (int p = top; p < n; ++p) mark[static_cast<std::size_t>(stack[static_cast<std::size_t>(p)])] = 0;
  mark[static_cast<std::size_t>(k)] = 0;
  return top;
}

SparseMatrix compressed(const SparseMatrix& a) {
  SparseMatrix c = a;
  c.makeCompressed();
  return c;
}

}  // namespace

CholeskySymbolic::CholeskySymbolic(const SparseMatrix& pattern_in, CholeskyOrdering ordering) {
  if (pattern_in.rows() != pattern_in.cols()) throw InputError("sparse Cholesky: matrix must be square");
  const SparseMatrix pattern = compressed(pattern_in);
  n_ = pattern.rows();
  const auto n = static_cast<std::size_t>(n_);
  a_outer_.assign(pattern.outerIndexPtr(), pattern.outerIndexPtr() + n_ + 1);
  a_inner_.assign(pattern.innerIndexPtr(), pattern.innerIndexPtr() + pattern.nonZeros());

  order_.resize(n);
  if (ordering == CholeskyOrdering::kNatural) {
    std::iota(order_.begin(), order_.end(), 0);
  } else {
    SparseMatrix lower = pattern.triangularView<Eigen::Lower>();
    SparseMatrix symmetric = lower.selfadjointView<Eigen::Lower>();
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> pinv;
    Eigen::AMDOrdering<int> amd;
    amd(symmetric, pinv);
    for (std::size_t k = 0; k < n; ++k) order_[k] = pinv.indices()(static_cast<Eigen::Index>(k));
  }
  inverse_order_.resize(n);
  for (std::size_t k = 0; k < n; ++k) inverse_order_[static_cast<std::size_t>(order_[k])] = static_cast<int>(k);

  // Permuted upper triangle.
  struct Entry {
    int row, col, source;
  };
  std::vector<Entry> entries;
  value_slot_.assign(a_inner_.size(), -1);
  for (std::size_t j = 0; j < n; ++j) {
    for (int p = a_outer_[j]; p < a_outer_[j + 1]; ++p) {
      const int i = a_inner_[static_cast<std::size_t>(p)];
      if (i < static_cast<int>(j)) continue;
      const int pi = inverse_order_[static_cast<std::size_t>(i)];
      const int pj = inverse_order_[j];
      entries.push_back({std::min(pi, pj), std::max(pi, pj), p});
    }
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.col != b.col ? a.col < b.col : a.row < b.row; });
  c_outer_.assign(n + 1, 0);
  c_inner_.resize(entries.size());
  for (std::size_t e = 0; e < entries.size(); ++e) {
    ++c_outer_[static_cast<std::size_t>(entries[e].col) + 1];
    c_inner_[e] = entries[e].row;
    value_slot_[static_cast<std::size_t>(entries[e].source)] = static_cast<int>(e);
  }
  std::partial_sum(c_outer_.begin(), c_outer_.end(), c_outer_.begin());

  // Elimination tree.
  parent_.assign(n, -1);
  std::vector<int> ancestor(n, -1);
  for (std::size_t k = 0; k < n; ++k) {
    for (int p = c_outer_[k]; p < c_outer_[k + 1]; ++p) {
      int i = c_inner_[static_cast<std::size_t>(p)];
      while (i != -1 && i < static_cast<int>(k)) {
        const int next = ancestor[static_cast<std::size_t>(i)];
        ancestor[static_cast<std::size_t>(i)] = static_cast<int>(k);
        if (next == -1) parent_[static_cast<std::size_t>(i)] = static_cast<int>(k);
        i = next;
      }
    }
  }

  // Column counts from the row patterns.
  std::vector<int> counts(n, 1);
  std::vector<int> stack(n);
  std::vector<char> mark(n, 0);
  for (std::size_t k = 0; k < n; ++k) {
    const int top = row_pattern(c_outer_, c_inner_, static_cast<int>(k), parent_, stack, mark);
    for (std::size_t t = static_cast<std::size_t>(top); t < n; ++t) ++counts[static_cast<std::size_t>(stack[t])];
  }
  column_start_.assign(n + 1, 0);
  for (std::size_t k = 0; k < n; ++k) column_start_[k + 1] = column_start_[k] + counts[k];
}

bool CholeskySymbolic::matches(const SparseMatrix& a) const {
  if (a.rows() != n_ || a.cols() != n_ || !a.isCompressed()) return false;
  if (static_cast<std::size_t>(a.nonZeros()) != a_inner_.size()) return false;
  return std::equal(a_outer_.begin(), a_outer_.end(), a.outerIndexPtr()) &&
         std::equal(a_inner_.begin(), a_inner_.end(), a.innerIndexPtr());
}

SparseCholesky::SparseCholesky(std::shared_ptr<const CholeskySymbolic> symbolic) : symbolic_(std::move(symbolic)) {
  if (!symbolic_) throw InputError("sparse Cholesky: null symbolic analysis");
}

SparseCholesky::SparseCholesky(const SparseMatrix& a, CholeskyOrdering ordering, const FactorOptions& options)
    : symbolic_(std::make_shared<CholeskySymbolic>(a, ordering)) {
  factorize(a, options);
}

void SparseCholesky::factorize(const SparseMatrix& a_in, const FactorOptions& options) {
  if (!symbolic_) throw InputError("sparse Cholesky: factorize before analysis");
  factorized_ = false;
  const SparseMatrix* a = &a_in;
  SparseMatrix copy;
  if (!a_in.isCompressed()) {
    copy = compressed(a_in);
    a = &copy;
  }
  const CholeskySymbolic& s = *symbolic_;
  if (!s.matches(*a)) throw InputError("sparse Cholesky: matrix pattern differs from the analysed pattern");
  const auto n = static_cast<std::size_t>(s.n_);
  const double* av = a->valuePtr();

  Eigen::VectorXd diag = Eigen::VectorXd::Constant(s.n_, options.jitter);
  for (std::size_t j = 0; j < n; ++j) {
    for (int p = s.a_outer_[j]; p < s.a_outer_[j + 1]; ++p) {
      if (s.a_inner_[static_cast<std::size_t>(p)] == static_cast<int>(j)) diag(static_cast<Eigen::Index>(j)) += av[p];
    }
  }
  scaling_.resize(0);
  if (options.equilibrate) {
    scaling_.resize(s.n_);
    for (Eigen::Index j = 0; j < s.n_; ++j) {
      if (!(diag(j) > 0.0) || !std::isfinite(diag(j))) {
        throw IndefiniteMatrixError("sparse Cholesky: non-positive diagonal entry at index " + std::to_string(j), j);
      }
      scaling_(j) = 1.0 / std::sqrt(diag(j));
    }
  }

  std::vector<double> c_values(s.c_inner_.size(), 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (int p = s.a_outer_[j]; p < s.a_outer_[j + 1]; ++p) {
      const int slot = s.value_slot_[static_cast<std::size_t>(p)];
      if (slot < 0) continue;
      double v = av[p];
      if (options.equilibrate) {
        v *= scaling_(s.a_inner_[static_cast<std::size_t>(p)]) * scaling_(static_cast<Eigen::Index>(j));
      }
      c_values[static_cast<std::size_t>(slot)] = v;
    }
  }
  Eigen::VectorXd permuted_jitter = Eigen::VectorXd::Constant(s.n_, options.jitter);
  if (options.equilibrate) {
    for (std::size_t k = 0; k < n; ++k) {
      const double sk = scaling_(s.order_[k]);
      permuted_jitter(static_cast<Eigen::Index>(k)) *= sk * sk;
    }
  }
  double max_diag = 0.0;
  for (Eigen::Index j = 0; j < s.n_; ++j) {
    max_diag = std::max(max_diag, options.equilibrate ? 1.0 : std::abs(diag(j)));
  }
  const double threshold = kPivotTolerance * max_diag;

  l_inner_.assign(static_cast<std::size_t>(s.factor_nonzeros()), 0);
  l_values_.assign(static_cast<std::size_t>(s.factor_nonzeros()), 0.0);
  std::vector<int> next(s.column_start_.begin(), s.column_start_.end() - 1);
  std::vector<double> x(n, 0.0);
  std::vector<int> stack(n);
  std::vector<char> mark(n, 0);

  for (std::size_t k = 0; k < n; ++k) {
    const int top = row_pattern(s.c_outer_, s.c_inner_, static_cast<int>(k), s.parent_, stack, mark);
    x[k] = 0.0;
    for (int p = s.c_outer_[k]; p < s.c_outer_[k + 1]; ++p) {
      x[static_cast<std::size_t>(s.c_inner_[static_cast<std::size_t>(p)])] = c_values[static_cast<std::size_t>(p)];
    }
    double d = x[k] + permuted_jitter(static_cast<Eigen::Index>(k));
    x[k] = 0.0;
    for (std::size_t t = static_cast<std::size_t>(top); t < n; ++t) {
      const auto i = static_cast<std::size_t>(stack[t]);
      const double lki = x[i] / l_values_[static_cast<std::size_t>(s.column_start_[i])];
      x[i] = 0.0;
      for (int p = s.column_start_[i] + 1; p < next[i]; ++p) {
        x[static_cast<std::size_t>(l_inner_[static_cast<std::size_t>(p)])] -= l_values_[static_cast<std::size_t>(p)] * lki;
      }
      d -= lki * lki;
      const auto slot = static_cast<std::size_t>(next[i]++);
      l_inner_[slot] = static_cast<int>(k);
      l_values_[slot] = lki;
    }
    if (!(d > threshold) || !std::isfinite(d)) {
      const int original = s.order_[k];
      throw IndefiniteMatrixError("sparse Cholesky: pivot " + std::to_string(d) + " at index " +
                                      std::to_string(original) + " (elimination step " + std::to_string(k) +
                                      ") is below " + std::to_string(threshold) +
                                      "; matrix is not positive definite",
                                  original);
    }
    const auto slot = static_cast<std::size_t>(next[k]++);
    l_inner_[slot] = static_cast<int>(k);
    l_values_[slot] = std::sqrt(d);
  }
  factorized_ = true;
}

void SparseCholesky::require_factor() const {
  if (!factorized_) throw InputError("sparse Cholesky: no numeric factorization available");
}

void SparseCholesky::forward(double* y) const {
  const auto& cs = symbolic_->column_start_;
  const auto n = static_cast<std::size_t>(symbolic_->n_);
  for (std::size_t j = 0; j < n; ++j) {
    y[j] /= l_values_[static_cast<std::size_t>(cs[j])];
    const double yj = y[j];
    for (int p = cs[j] + 1; p < cs[j + 1]; ++p) {
      y[l_inner_[static_cast<std::size_t>(p)]] -= l_values_[static_cast<std::size_t>(p)] * yj;
    }
  }
}

void SparseCholesky::backward(double* y) const {
  const auto& cs = symbolic_->column_start_;
  for (auto j = static_cast<std::ptrdiff_t>(symbolic_->n_) - 1; j >= 0; --j) {
    const auto ju = static_cast<std::size_t>(j);
    double acc = y[ju];
    for (int p = cs[ju] + 1; p < cs[ju + 1]; ++p) {
      acc -= l_values_[static_cast<std::size_t>(p)] * y[l_inner_[static_cast<std::size_t>(p)]];
    }
    y[ju] = acc / l_values_[static_cast<std::size_t>(cs[ju])];
  }
}

Eigen::VectorXd SparseCholesky::solve(const Eigen::VectorXd& b) const {
  require_factor();
  if (b.size() != symbolic_->n_) throw InputError("sparse Cholesky: rhs has the wrong length");
  const auto& order = symbolic_->order_;
  const bool scaled = scaling_.size() > 0;
  Eigen::VectorXd y(b.size());
  for (Eigen::Index k = 0; k < b.size(); ++k) {
    const int o = order[static_cast<std::size_t>(k)];
    y(k) = scaled ? b(o) * scaling_(o) : b(o);
  }
  forward(y.data());
  backward(y.data());
  Eigen::VectorXd x(b.size());
  for (Eigen::Index k = 0; k < b.size(); ++k) {
    const int o = order[static_cast<std::size_t>(k)];
    x(o) = scaled ? y(k) * scaling_(o) : y(k);
  }
  return x;
}

Eigen::MatrixXd SparseCholesky::solve(const Eigen::MatrixXd& b) const {
  Eigen::MatrixXd x(b.rows(), b.cols());
  for (Eigen::Index c = 0; c < b.cols(); ++c) x.col(c) = solve(Eigen::VectorXd(b.col(c)));
  return x;
}

Eigen::VectorXd SparseCholesky::inverse_diagonal(const std::vector<Eigen::Index>& indices) const {
  require_factor();
  const CholeskySymbolic& s = *symbolic_;
  const auto& cs = s.column_start_;
  std::vector<double> z(static_cast<std::size_t>(s.n_), 0.0);
  Eigen::VectorXd out(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] < 0 || indices[r] >= s.n_) throw InputError("sparse Cholesky: marginal index out of range");
    // Nonzeros of L^-1 e_k lie on the elimination-tree path from k.
    const int start = s.inverse_order_[static_cast<std::size_t>(indices[r])];
    z[static_cast<std::size_t>(start)] = 1.0;
    double sum = 0.0;
    for (int j = start; j != -1; j = s.parent_[static_cast<std::size_t>(j)]) {
      const auto ju = static_cast<std::size_t>(j);
      const double zj = z[ju] / l_values_[static_cast<std::size_t>(cs[ju])];
      z[ju] = 0.0;
      sum += zj * zj;
      for (int p = cs[ju] + 1; p < cs[ju + 1]; ++p) {
        z[static_cast<std::size_t>(l_inner_[static_cast<std::size_t>(p)])] -= l_values_[static_cast<std::size_t>(p)] * zj;
      }
    }
    out(static_cast<Eigen::Index>(r)) = scaling_.size() > 0 ? sum * scaling_(indices[r]) * scaling_(indices[r]) : sum;
  }
  return out;
}

Eigen::MatrixXd SparseCholesky::inverse() const {
  require_factor();
  return solve(Eigen::MatrixXd(Eigen::MatrixXd::Identity(symbolic_->n_, symbolic_->n_)));
}

double SparseCholesky::log_determinant() const {
  require_factor();
  double sum = 0.0;
  const auto& cs = symbolic_->column_start_;
  for (Eigen::Index j = 0; j < symbolic_->n_; ++j) sum += std::log(l_values_[static_cast<std::size_t>(cs[static_cast<std::size_t>(j)])]);
  if (scaling_.size() > 0) sum -= scaling_.array().log().sum();
  return 2.0 * sum;
}

SparseMatrix SparseCholesky::factor() const {
  require_factor();
  std::vector<Eigen::Triplet<double, int>> t;
  t.reserve(l_values_.size());
  const auto& cs = symbolic_->column_start_;
  for (Eigen::Index j = 0; j < symbolic_->n_; ++j) {
    for (int p = cs[static_cast<std::size_t>(j)]; p < cs[static_cast<std::size_t>(j) + 1]; ++p) {
      t.emplace_back(l_inner_[static_cast<std::size_t>(p)], static_cast<int>(j), l_values_[static_cast<std::size_t>(p)]);
    }
  }
  SparseMatrix l(symbolic_->n_, symbolic_->n_);
  l.setFromTriplets(t.begin(), t.end());
  return l;
}

Eigen::VectorXd sparse_cholesky_solve(const SparseMatrix& a, const Eigen::VectorXd& b,
                                      const std::shared_ptr<const CholeskySymbolic>& symbolic) {
  SparseCholesky chol(symbolic ? symbolic : std::make_shared<const CholeskySymbolic>(a));
  chol.factorize(a);
  return chol.solve(b);
}

}  // namespace mapdyn
