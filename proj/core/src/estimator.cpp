#include "mapdyn/estimator.hpp"

#include <Eigen/Dense>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseQR>
#include <string>

#include "mapdyn/errors.hpp"

namespace mapdyn {

namespace {

SparseMatrix sparse_diagonal(const Eigen::VectorXd& values) {
  SparseMatrix m(values.size(), values.size());
  m.reserve(Eigen::VectorXi::Ones(values.size()));
  for (Eigen::Index k = 0; k < values.size(); ++k) m.insert(k, k) = values(k);
  m.makeCompressed();
  return m;
}

// A^T diag(w) A.
SparseMatrix weighted_gram(const SparseMatrix& a, const Eigen::VectorXd& w) {
  const SparseMatrix scaled = w.cwiseSqrt().asDiagonal() * a;
  SparseMatrix gram = SparseMatrix(scaled.transpose()) * scaled;
  gram.makeCompressed();
  return gram;
}

void require_positive(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite() || (v.size() > 0 && !(v.array() > 0.0).all())) {
    throw InputError(std::string(what) + " must be finite and positive");
  }
}

std::shared_ptr<SparseCholesky> factorize_with(const SparseMatrix& a,
                                               const std::shared_ptr<const CholeskySymbolic>& symbolic,
                                               bool equilibrate) {
  auto chol = std::make_shared<SparseCholesky>(symbolic && symbolic->matches(a)
                                                   ? symbolic
                                                   : std::make_shared<const CholeskySymbolic>(a));
  FactorOptions fo;
  fo.equilibrate = equilibrate;
  chol->factorize(a, fo);
  return chol;
}

Eigen::Index qr_rank(const SparseMatrix& a) {
  if (a.cols() == 0) return 0;
  if (a.rows() == 0) return 0;
  SparseMatrix c = a;
  c.makeCompressed();
  Eigen::SparseQR<SparseMatrix, Eigen::COLAMDOrdering<int>> qr;
  qr.compute(c);
  if (qr.info() != Eigen::Success) throw NumericalError("sparse QR failed during the rank check");
  return qr.rank();
}

SparseMatrix stack_rows(const SparseMatrix& top, const SparseMatrix& bottom) {
  const Eigen::Index cols = top.rows() > 0 ? top.cols() : bottom.cols();
  std::vector<Eigen::Triplet<double, int>> t;
  t.reserve(static_cast<std::size_t>(top.nonZeros() + bottom.nonZeros()));
  for (int k = 0; k < top.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(top, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (int k = 0; k < bottom.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(bottom, k); it; ++it)
      t.emplace_back(static_cast<int>(top.rows()) + it.row(), it.col(), it.value());
  SparseMatrix s(top.rows() + bottom.rows(), cols);
  s.setFromTriplets(t.begin(), t.end());
  return s;
}

}  // namespace

GaussianBelief::GaussianBelief(Eigen::VectorXd mean, Eigen::MatrixXd covariance)
    : mean_(std::move(mean)), covariance_(std::move(covariance)) {
  if (covariance_->rows() != mean_.size() || covariance_->cols() != mean_.size()) {
    throw InputError("GaussianBelief: covariance shape does not match the mean");
  }
}

GaussianBelief::GaussianBelief(Eigen::VectorXd mean, SparseMatrix precision,
                               std::shared_ptr<const SparseCholesky> factor)
    : mean_(std::move(mean)), precision_(std::move(precision)), factor_(std::move(factor)) {
  if (precision_->rows() != mean_.size() || precision_->cols() != mean_.size()) {
    throw InputError("GaussianBelief: precision shape does not match the mean");
  }
}

const Eigen::MatrixXd& GaussianBelief::covariance() const {
  if (!covariance_) throw InputError("GaussianBelief: covariance not materialized");
  return *covariance_;
}

const SparseMatrix& GaussianBelief::precision() const {
  if (!precision_) throw InputError("GaussianBelief: no precision stored");
  return *precision_;
}

void GaussianBelief::materialize_covariance() {
  if (!covariance_) covariance_ = dense_covariance();
}

Eigen::MatrixXd GaussianBelief::dense_covariance() const {
  if (covariance_) return *covariance_;
  if (factor_) return factor_->inverse();
  if (precision_) return SparseCholesky(*precision_).inverse();
  throw InputError("GaussianBelief: no covariance information");
}

Eigen::VectorXd GaussianBelief::marginal_variances(const std::vector<Eigen::Index>& indices) const {
  if (covariance_) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(indices.size()));
    for (std::size_t k = 0; k < indices.size(); ++k) {
      if (indices[k] < 0 || indices[k] >= dimension()) throw InputError("marginal index out of range");
      out(static_cast<Eigen::Index>(k)) = (*covariance_)(indices[k], indices[k]);
    }
    return out;
  }
  if (factor_) return factor_->inverse_diagonal(indices);
  if (precision_) return SparseCholesky(*precision_).inverse_diagonal(indices);
  throw InputError("GaussianBelief: no covariance information");
}

Eigen::VectorXd GaussianBelief::marginal_variances() const {
  std::vector<Eigen::Index> all(static_cast<std::size_t>(dimension()));
  for (Eigen::Index k = 0; k < dimension(); ++k) all[static_cast<std::size_t>(k)] = k;
  return marginal_variances(all);
}

void MapProblem::validate() const {
  const Eigen::Index n = dimension();
  if (prior_variance.size() != n) throw InputError("MapProblem: prior variance has the wrong length");
  if (D.rows() > 0 && D.cols() != n) throw InputError("MapProblem: D has the wrong column count");
  if (Y.rows() > 0 && Y.cols() != n) throw InputError("MapProblem: Y has the wrong column count");
  if (b_D.size() != D.rows() || model_variance.size() != D.rows()) {
    throw InputError("MapProblem: b_D or Sigma_D does not match the rows of D");
  }
  if (b_Y.size() != Y.rows() || y.size() != Y.rows() || measurement_variance.size() != Y.rows()) {
    throw InputError("MapProblem: b_Y, y or Sigma_y does not match the rows of Y");
  }
  require_positive(prior_variance, "prior variance");
  require_positive(model_variance, "model variance");
  require_positive(measurement_variance, "measurement variance");
  if (!prior_mean.allFinite() || !y.allFinite() || !b_D.allFinite() || !b_Y.allFinite()) {
    throw InputError("MapProblem: non-finite input");
  }
}

MapProblem make_map_problem(const ConstraintSystem& constraints, const MeasurementSystem& measurements,
                            const Eigen::VectorXd& y, const CovarianceDefaults& covariances) {
  MapProblem p;
  p.D = constraints.D;
  p.b_D = constraints.b;
  p.model_variance = Eigen::VectorXd::Constant(constraints.D.rows(), covariances.model);
  p.Y = measurements.Y;
  p.b_Y = measurements.b;
  p.y = y;
  p.measurement_variance = measurements.variance;
  p.prior_mean = Eigen::VectorXd::Zero(constraints.D.cols());
  p.prior_variance = Eigen::VectorXd::Constant(constraints.D.cols(), covariances.prior);
  p.validate();
  return p;
}

Eigen::Index constraint_stack_rank(const SparseMatrix& Y, const SparseMatrix& D) {
  return qr_rank(stack_rows(Y, D));
}

void check_rank_condition(const SparseMatrix& Y, const SparseMatrix& D) {
  const Eigen::Index cols = Y.rows() > 0 ? Y.cols() : D.cols();
  const Eigen::Index rank = constraint_stack_rank(Y, D);
  if (rank < cols) {
    throw RankDeficiencyError("rank condition violated: [Y; D] has rank " + std::to_string(rank) + " for " +
                                  std::to_string(cols) + " unknowns; " + std::to_string(cols - rank) +
                                  "-dimensional subspace is unconstrained",
                              cols - rank);
  }
}

MapResult map_solve_with_prior(const SparseMatrix& D, const Eigen::VectorXd& b_D, const Eigen::VectorXd& model_variance,
                               const SparseMatrix& Y, const Eigen::VectorXd& b_Y, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& measurement_variance, const Eigen::VectorXd& prior_mean,
                               const SparseMatrix& prior_precision, const MapOptions& options,
                               const std::shared_ptr<const CholeskySymbolic>& prior_symbolic,
                               const std::shared_ptr<const CholeskySymbolic>& posterior_symbolic) {
  const Eigen::Index n = prior_mean.size();
  const Eigen::VectorXd w_d = model_variance.cwiseInverse();
  const Eigen::VectorXd w_y = measurement_variance.cwiseInverse();

  SparseMatrix prior_prec = prior_precision;
  Eigen::VectorXd prior_rhs = prior_precision * prior_mean;
  if (D.rows() > 0) {
    prior_prec = weighted_gram(D, w_d) + prior_precision;
    prior_rhs -= D.transpose() * w_d.cwiseProduct(b_D);
  }
  prior_prec.makeCompressed();
  auto prior_factor = factorize_with(prior_prec, prior_symbolic, options.equilibrate);
  const Eigen::VectorXd prior_mu = prior_factor->solve(prior_rhs);

  SparseMatrix post_prec = prior_prec;
  Eigen::VectorXd post_rhs = prior_prec * prior_mu;
  if (Y.rows() > 0) {
    post_prec = prior_prec + weighted_gram(Y, w_y);
    post_rhs += Y.transpose() * w_y.cwiseProduct(y - b_Y);
  }
  post_prec.makeCompressed();
  auto post_factor = factorize_with(post_prec, posterior_symbolic, options.equilibrate);
  Eigen::VectorXd post_mu = post_factor->solve(post_rhs);

  MapResult r{GaussianBelief(prior_mu, std::move(prior_prec), prior_factor),
              GaussianBelief(std::move(post_mu), std::move(post_prec), post_factor)};
  if (n <= options.dense_covariance_limit) {
    r.prior.materialize_covariance();
    r.posterior.materialize_covariance();
  }
  return r;
}

GaussianBelief shape_prior(const MapProblem& problem, const MapOptions& options) {
  problem.validate();
  const SparseMatrix empty(0, problem.dimension());
  return map_solve_with_prior(problem.D, problem.b_D, problem.model_variance, empty, Eigen::VectorXd(),
                              Eigen::VectorXd(), Eigen::VectorXd(), problem.prior_mean,
                              sparse_diagonal(problem.prior_variance.cwiseInverse()), options)
      .prior;
}

MapSolver::MapSolver(const MapProblem& pattern, const MapOptions& options) : options_(options) {
  pattern.validate();
  if (options_.check_rank) check_rank_condition(pattern.Y, pattern.D);
  SparseMatrix prior_prec = sparse_diagonal(pattern.prior_variance.cwiseInverse());
  if (pattern.D.rows() > 0) prior_prec = weighted_gram(pattern.D, pattern.model_variance.cwiseInverse()) + prior_prec;
  prior_prec.makeCompressed();
  prior_symbolic_ = std::make_shared<const CholeskySymbolic>(prior_prec);
  SparseMatrix post_prec = prior_prec;
  if (pattern.Y.rows() > 0) post_prec = prior_prec + weighted_gram(pattern.Y, pattern.measurement_variance.cwiseInverse());
  post_prec.makeCompressed();
  posterior_symbolic_ = std::make_shared<const CholeskySymbolic>(post_prec);
}

MapResult MapSolver::solve(const MapProblem& problem) const {
  problem.validate();
  return map_solve_with_prior(problem.D, problem.b_D, problem.model_variance, problem.Y, problem.b_Y, problem.y,
                              problem.measurement_variance, problem.prior_mean,
                              sparse_diagonal(problem.prior_variance.cwiseInverse()), options_, prior_symbolic_,
                              posterior_symbolic_);
}

GaussianBelief map_solve(const MapProblem& problem, const MapOptions& options) {
  problem.validate();
  if (options.check_rank) check_rank_condition(problem.Y, problem.D);
  MapOptions inner = options;
  inner.check_rank = false;
  return map_solve_with_prior(problem.D, problem.b_D, problem.model_variance, problem.Y, problem.b_Y, problem.y,
                              problem.measurement_variance, problem.prior_mean,
                              sparse_diagonal(problem.prior_variance.cwiseInverse()), inner)
      .posterior;
}

Eigen::VectorXd gls_solve(const SparseMatrix& A, const Eigen::VectorXd& b, const Eigen::VectorXd& weights) {
  if (b.size() != A.rows() || weights.size() != A.rows()) throw InputError("gls_solve: shape mismatch");
  require_positive(weights, "GLS weights");
  const SparseMatrix gram = weighted_gram(A, weights);
  const Eigen::VectorXd rhs = A.transpose() * weights.cwiseProduct(b);
  try {
    return sparse_cholesky_solve(gram, rhs);
  } catch (const IndefiniteMatrixError&) {
    const Eigen::Index rank = qr_rank(A);
    throw RankDeficiencyError("gls_solve: A has rank " + std::to_string(rank) + " for " + std::to_string(A.cols()) +
                                  " unknowns",
                              A.cols() - rank);
  }
}

Eigen::VectorXd gls_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::MatrixXd& weights) {
  if (b.size() != A.rows() || weights.rows() != A.rows() || weights.cols() != A.rows()) {
    throw InputError("gls_solve: shape mismatch");
  }
  Eigen::LLT<Eigen::MatrixXd> w_llt(weights);
  if (w_llt.info() != Eigen::Success) throw InputError("gls_solve: weight matrix is not positive definite");
  const Eigen::MatrixXd whitened = w_llt.matrixU() * A;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(whitened);
  qr.setThreshold(1e-12);
  if (qr.rank() < A.cols()) {
    throw RankDeficiencyError("gls_solve: A has rank " + std::to_string(qr.rank()) + " for " +
                                  std::to_string(A.cols()) + " unknowns",
                              A.cols() - qr.rank());
  }
  const Eigen::MatrixXd gram = A.transpose() * weights * A;
  return gram.llt().solve(A.transpose() * (weights * b));
}

GlsStack map_gls_stack(const MapProblem& problem) {
  problem.validate();
  const Eigen::Index n = problem.dimension();
  const SparseMatrix identity = sparse_diagonal(Eigen::VectorXd::Ones(n));
  GlsStack s;
  s.A = stack_rows(stack_rows(problem.D, problem.Y), identity);
  s.b.resize(s.A.rows());
  s.b << -problem.b_D, problem.y - problem.b_Y, problem.prior_mean;
  s.weights.resize(s.A.rows());
  s.weights << problem.model_variance.cwiseInverse(), problem.measurement_variance.cwiseInverse(),
      problem.prior_variance.cwiseInverse();
  return s;
}

LmmseForms lmmse_forms_check(const Eigen::MatrixXd& C, const Eigen::MatrixXd& sigma_x, const Eigen::MatrixXd& sigma_e,
                             const Eigen::VectorXd& mu_x, const Eigen::VectorXd& y) {
  const Eigen::Index m = C.rows();
  const Eigen::Index n = C.cols();
  if (sigma_x.rows() != n || sigma_x.cols() != n || sigma_e.rows() != m || sigma_e.cols() != m ||
      mu_x.size() != n || y.size() != m) {
    throw InputError("lmmse_forms_check: shape mismatch");
  }
  LmmseForms r;

  const Eigen::MatrixXd inner = C * sigma_x * C.transpose() + sigma_e;
  Eigen::LLT<Eigen::MatrixXd> inner_llt(inner);
  if (inner_llt.info() != Eigen::Success) throw NumericalError("lmmse_forms_check: C Sigma_x C^T + Sigma_e is singular");
  const Eigen::MatrixXd gain = inner_llt.solve(C * sigma_x).transpose();
  r.gain_estimate = mu_x + gain * (y - C * mu_x);
  r.gain_covariance = sigma_x - gain * C * sigma_x;

  Eigen::LLT<Eigen::MatrixXd> sx_llt(sigma_x);
  Eigen::LLT<Eigen::MatrixXd> se_llt(sigma_e);
  if (sx_llt.info() != Eigen::Success || se_llt.info() != Eigen::Success) {
    throw NumericalError("lmmse_forms_check: Sigma_x or Sigma_e is singular");
  }
  const Eigen::MatrixXd se_inv_c = se_llt.solve(C);
  const Eigen::MatrixXd information = sx_llt.solve(Eigen::MatrixXd::Identity(n, n)) + C.transpose() * se_inv_c;
  Eigen::LLT<Eigen::MatrixXd> info_llt(information);
  if (info_llt.info() != Eigen::Success) throw NumericalError("lmmse_forms_check: information matrix is singular");
  r.information_covariance = info_llt.solve(Eigen::MatrixXd::Identity(n, n));
  r.information_estimate = info_llt.solve(se_inv_c.transpose() * y + sx_llt.solve(mu_x));

  r.max_difference = std::max((r.gain_estimate - r.information_estimate).cwiseAbs().maxCoeff(),
                              (r.gain_covariance - r.information_covariance).cwiseAbs().maxCoeff());
  return r;
}

std::vector<FusionStage> incremental_fusion(const MapProblem& problem, const std::vector<MeasurementGroup>& groups,
                                            const FusionOptions& options) {
  const Eigen::Index n = problem.dimension();
  if (problem.prior_variance.size() != n || problem.b_D.size() != problem.D.rows() ||
      problem.model_variance.size() != problem.D.rows()) {
    throw InputError("incremental_fusion: inconsistent prior/constraint shapes");
  }
  require_positive(problem.prior_variance, "prior variance");
  require_positive(problem.model_variance, "model variance");

  const SparseMatrix empty(0, n);
  MapOptions no_dense;
  no_dense.dense_covariance_limit = -1;
  const MapResult base =
      map_solve_with_prior(problem.D, problem.b_D, problem.model_variance, empty, Eigen::VectorXd(), Eigen::VectorXd(),
                           Eigen::VectorXd(), problem.prior_mean,
                           sparse_diagonal(problem.prior_variance.cwiseInverse()), no_dense);
  SparseMatrix precision = base.prior.precision();
  Eigen::VectorXd rhs = precision * base.prior.mean();

  std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) all[static_cast<std::size_t>(k)] = k;

  std::vector<FusionStage> stages;
  stages.reserve(groups.size());
  for (const MeasurementGroup& g : groups) {
    if (g.Y.cols() != n || g.b.size() != g.Y.rows() || g.y.size() != g.Y.rows() || g.variance.size() != g.Y.rows()) {
      throw InputError("incremental_fusion: group '" + g.name + "' has inconsistent shapes");
    }
    require_positive(g.variance, "group variance");
    const Eigen::VectorXd w = g.variance.cwiseInverse();
    precision = precision + weighted_gram(g.Y, w);
    precision.makeCompressed();
    rhs += g.Y.transpose() * w.cwiseProduct(g.y - g.b);

    SparseCholesky chol(precision);
    FusionStage s;
    s.name = g.name;
    s.mean = chol.solve(rhs);
    s.precision = precision;
    s.marginal_variance = chol.inverse_diagonal(options.marginal_indices);
    if (options.dense_covariance) {
      s.covariance = chol.inverse();
      s.trace = s.covariance->trace();
    } else if (options.trace) {
      s.trace = chol.inverse_diagonal(all).sum();
    }
    stages.push_back(std::move(s));
  }
  return stages;
}

MeasurementGroup measurement_group(const std::string& name, const MeasurementSystem& system,
                                   const Eigen::VectorXd& y, Eigen::Index first_row, Eigen::Index rows) {
  if (first_row < 0 || rows < 0 || first_row + rows > system.Y.rows() || y.size() != system.Y.rows()) {
    throw InputError("measurement_group: row range outside the measurement system");
  }
  MeasurementGroup g;
  g.name = name;
  g.Y = system.Y.block(first_row, 0, rows, system.Y.cols());
  g.Y.makeCompressed();
  g.b = system.b.segment(first_row, rows);
  g.y = y.segment(first_row, rows);
  g.variance = system.variance.segment(first_row, rows);
  return g;
}

}  // namespace mapdyn
