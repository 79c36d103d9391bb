#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mapdyn/dynamics.hpp"
#include "mapdyn/sensors.hpp"
#include "mapdyn/sparse_cholesky.hpp"

namespace mapdyn {

// Gaussian over d. The mean is always present; the covariance is dense and
// only materialized on request or for small problems, otherwise the sparse
// precision and its factor answer marginal queries.
class GaussianBelief {
 public:
  GaussianBelief() = default;
  GaussianBelief(Eigen::VectorXd mean, Eigen::MatrixXd covariance);
  GaussianBelief(Eigen::VectorXd mean, SparseMatrix precision, std::shared_ptr<const SparseCholesky> factor);

  Eigen::Index dimension() const { return mean_.size(); }
  const Eigen::VectorXd& mean() const { return mean_; }

  bool has_covariance() const { return covariance_.has_value(); }
  bool has_precision() const { return precision_.has_value(); }
  const Eigen::MatrixXd& covariance() const;
  const SparseMatrix& precision() const;
  const std::shared_ptr<const SparseCholesky>& factor() const { return factor_; }

  // Materializes the dense covariance (from the factor if needed).
  void materialize_covariance();
  Eigen::MatrixXd dense_covariance() const;
  Eigen::VectorXd marginal_variances(const std::vector<Eigen::Index>& indices) const;
  Eigen::VectorXd marginal_variances() const;

 private:
  Eigen::VectorXd mean_;
  std::optional<Eigen::MatrixXd> covariance_;
  std::optional<SparseMatrix> precision_;
  std::shared_ptr<const SparseCholesky> factor_;
};

// Scalars of the diagonal covariances Sigma_d (prior on d) and Sigma_D
// (model confidence).
struct CovarianceDefaults {
  double prior = 1e4;
  double model = 1e-4;
};

// D d + b_D = 0 (with confidence Sigma_D), y = Y d + b_Y + e, d ~ N(mu_d,
// Sigma_d). All covariances are diagonal and stored as vectors.
struct MapProblem {
  SparseMatrix D;
  Eigen::VectorXd b_D;
  Eigen::VectorXd model_variance;
  SparseMatrix Y;
  Eigen::VectorXd b_Y;
  Eigen::VectorXd y;
  Eigen::VectorXd measurement_variance;
  Eigen::VectorXd prior_mean;
  Eigen::VectorXd prior_variance;

  Eigen::Index dimension() const { return prior_mean.size(); }
  // Throws InputError on inconsistent shapes or non-positive variances.
  void validate() const;
};

MapProblem make_map_problem(const ConstraintSystem& constraints, const MeasurementSystem& measurements,
                            const Eigen::VectorXd& y, const CovarianceDefaults& covariances = {});

// Rows [Y; D] stacked; rank via sparse QR.
Eigen::Index constraint_stack_rank(const SparseMatrix& Y, const SparseMatrix& D);
// Throws RankDeficiencyError naming the unconstrained subspace dimension.
void check_rank_condition(const SparseMatrix& Y, const SparseMatrix& D);

struct MapOptions {
  // Dense posterior covariance is formed only up to this dimension.
  Eigen::Index dense_covariance_limit = 200;
  bool check_rank = true;
  // Symmetric diagonal scaling before each factorization; needed when the
  // unknowns differ in scale by many orders of magnitude.
  bool equilibrate = false;
};

// Prior shaped by the constraints: precision D^T Sigma_D^-1 D + Sigma_d^-1,
// mean from a sparse Cholesky solve.
GaussianBelief shape_prior(const MapProblem& problem, const MapOptions& options = {});

// Posterior over d given y; also returns the intermediate shaped prior.
struct MapResult {
  GaussianBelief prior;
  GaussianBelief posterior;
};

// Caches the symbolic factorizations for one sparsity pattern; solve() is
// const and may run concurrently from several threads. The rank condition
// is checked once, on the problem passed to the constructor.
class MapSolver {
 public:
  explicit MapSolver(const MapProblem& pattern, const MapOptions& options = {});

  MapResult solve(const MapProblem& problem) const;

  const std::shared_ptr<const CholeskySymbolic>& prior_symbolic() const { return prior_symbolic_; }
  const std::shared_ptr<const CholeskySymbolic>& posterior_symbolic() const { return posterior_symbolic_; }

 private:
  MapOptions options_;
  std::shared_ptr<const CholeskySymbolic> prior_symbolic_;
  std::shared_ptr<const CholeskySymbolic> posterior_symbolic_;
};

GaussianBelief map_solve(const MapProblem& problem, const MapOptions& options = {});

// Two-stage solve with a general sparse prior precision (used by the
// augmented-state solve). Prior mean and precision replace mu_d and
// Sigma_d^-1.
MapResult map_solve_with_prior(const SparseMatrix& D, const Eigen::VectorXd& b_D, const Eigen::VectorXd& model_variance,
                               const SparseMatrix& Y, const Eigen::VectorXd& b_Y, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& measurement_variance, const Eigen::VectorXd& prior_mean,
                               const SparseMatrix& prior_precision, const MapOptions& options = {},
                               const std::shared_ptr<const CholeskySymbolic>& prior_symbolic = nullptr,
                               const std::shared_ptr<const CholeskySymbolic>& posterior_symbolic = nullptr);

// x = (A^T W A)^-1 A^T W b with diagonal weights W.
Eigen::VectorXd gls_solve(const SparseMatrix& A, const Eigen::VectorXd& b, const Eigen::VectorXd& weights);
// Dense variant with a full SPD weight matrix.
Eigen::VectorXd gls_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::MatrixXd& weights);

// Stacked least-squares form of the MAP problem: A = [D; Y; I],
// b = [-b_D; y - b_Y; mu_d], weights diag(Sigma_D^-1, Sigma_y^-1, Sigma_d^-1).
struct GlsStack {
  SparseMatrix A;
  Eigen::VectorXd b;
  Eigen::VectorXd weights;
};
GlsStack map_gls_stack(const MapProblem& problem);

// Linear regression y = C x + e, x ~ N(mu_x, Sigma_x), e ~ N(0, Sigma_e),
// evaluated in the gain form and in the information (Woodbury) form.
struct LmmseForms {
  Eigen::VectorXd gain_estimate;
  Eigen::MatrixXd gain_covariance;
  Eigen::VectorXd information_estimate;
  Eigen::MatrixXd information_covariance;
  double max_difference = 0.0;  // largest absolute entry difference
};
LmmseForms lmmse_forms_check(const Eigen::MatrixXd& C, const Eigen::MatrixXd& sigma_x, const Eigen::MatrixXd& sigma_e,
                             const Eigen::VectorXd& mu_x, const Eigen::VectorXd& y);

// One independent group of measurements for incremental fusion.
struct MeasurementGroup {
  std::string name;
  SparseMatrix Y;
  Eigen::VectorXd b;
  Eigen::VectorXd y;
  Eigen::VectorXd variance;
};

struct FusionOptions {
  std::vector<Eigen::Index> marginal_indices;  // reported per stage
  bool dense_covariance = false;               // keep the dense covariance of every stage
  bool trace = true;                           // compute trace(Sigma_m)
};

struct FusionStage {
  std::string name;
  Eigen::VectorXd mean;
  SparseMatrix precision;
  Eigen::VectorXd marginal_variance;
  std::optional<Eigen::MatrixXd> covariance;
  double trace = 0.0;
};

// Stage m adds Y_m^T Sigma_m^-1 Y_m to the precision of stage m-1, starting
// from the shaped prior. The Y, b_Y, y and measurement_variance fields of
// `problem` are ignored.
std::vector<FusionStage> incremental_fusion(const MapProblem& problem, const std::vector<MeasurementGroup>& groups,
                                            const FusionOptions& options = {});

// Splits an assembled measurement system into groups by spec index ranges.
MeasurementGroup measurement_group(const std::string& name, const MeasurementSystem& system,
                                   const Eigen::VectorXd& y, Eigen::Index first_row, Eigen::Index rows);

}  // namespace mapdyn
