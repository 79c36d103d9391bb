#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "mapdyn/augmented.hpp"
#include "mapdyn/errors.hpp"
#include "support/models.hpp"

namespace mapdyn {
namespace {

using testing::random_spd;
using testing::random_vector;
using testing::random_wrenches;

// Central differences of a residual, written independently of the library.
template <typename F>
Eigen::MatrixXd central_difference(F&& f, const Eigen::VectorXd& x, double h) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd j(f0.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Eigen::VectorXd xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    j.col(k) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return j;
}

double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / (1.0 + b.cwiseAbs().maxCoeff());
}

TEST(Augmented, ResidualsMatchAssembledSystems) {
  const KinematicTreeModel m = testing::two_dof_example();
  const ConstraintAssembler ca(m);
  const MeasurementAssembler ma(m, testing::two_dof_specs(m));
  std::mt19937_64 rng(81);
  const Eigen::VectorXd q = random_vector(rng, 2), qd = random_vector(rng, 2);
  const Eigen::VectorXd d = random_vector(rng, 52);
  const Eigen::VectorXd x = stack_state(q, qd);
  const ConstraintSystem c = ca.assemble(q, qd);
  const MeasurementSystem y = ma.assemble(q, qd);
  EXPECT_LE((constraint_residual(ca, d, x) - (c.D * d + c.b)).norm(), 1e-12);
  EXPECT_LE((measurement_residual(ma, d, x) - (y.Y * d + y.b)).norm(), 1e-12);
  EXPECT_THROW(constraint_residual(ca, d, random_vector(rng, 3)), InputError);
}

TEST(Augmented, AutodiffMatchesFiniteDifferences) {
  std::mt19937_64 rng(82);
  for (int trial = 0; trial < 5; ++trial) {
    const KinematicTreeModel m = trial == 0 ? testing::two_dof_example() : testing::random_tree(rng, 4);
    const auto specs = trial == 0 ? testing::two_dof_specs(m) : testing::case1_specs(m);
    const ConstraintAssembler ca(m);
    const MeasurementAssembler ma(m, specs);
    const std::size_t n = m.dof_count();
    const Eigen::VectorXd x = stack_state(random_vector(rng, n, 0.5), random_vector(rng, n));
    const Eigen::VectorXd d = rnea(m, x.head(n), x.tail(n), random_vector(rng, n), random_wrenches(rng, n)).values();
    const DynamicsCallbacks ad = make_dynamics_callbacks(ca, ma);
    const DynamicsCallbacks fd = make_finite_difference_callbacks(ca, ma);
    const Eigen::MatrixXd jd = ad.constraint_jacobian(d, x), jy = ad.measurement_jacobian(d, x);
    EXPECT_LE(relative_error(jd, fd.constraint_jacobian(d, x)), 1e-5);
    EXPECT_LE(relative_error(jy, fd.measurement_jacobian(d, x)), 1e-5);
    const auto rd = [&](const Eigen::VectorXd& xx) { return constraint_residual(ca, d, xx); };
    const auto ry = [&](const Eigen::VectorXd& xx) { return measurement_residual(ma, d, xx); };
    EXPECT_LE(relative_error(jd, central_difference(rd, x, 1e-6)), 1e-5);
    EXPECT_LE(relative_error(jy, central_difference(ry, x, 1e-6)), 1e-5);
  }
}

TEST(Augmented, PerfectStatePriorReducesToPlainMap) {
  const KinematicTreeModel m = testing::two_dof_example();
  const auto specs = testing::two_dof_specs(m);
  const ConstraintAssembler ca(m);
  const MeasurementAssembler ma(m, specs);
  std::mt19937_64 rng(83);
  const Eigen::VectorXd q = random_vector(rng, 2), qd = random_vector(rng, 2);
  const DynVector truth = rnea(m, q, qd, random_vector(rng, 2), random_wrenches(rng, 2));
  const MapProblem p = make_map_problem(ca.assemble(q, qd), ma.assemble(q, qd), simulate_readings(ma, q, qd, truth, 9));
  const GaussianBelief plain = map_solve(p);
  const Eigen::VectorXd x = stack_state(q, qd);
  const GaussianBelief aug = map_solve_augmented(p, x, 1e-12 * Eigen::MatrixXd::Identity(4, 4), plain.mean(), x,
                                                 make_dynamics_callbacks(ca, ma));
  ASSERT_EQ(aug.dimension(), 56);
  EXPECT_LE((aug.mean().head(52) - plain.mean()).cwiseAbs().maxCoeff(), 1e-6 * (1.0 + plain.mean().cwiseAbs().maxCoeff()));
  EXPECT_LE((aug.mean().tail(4) - x).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Augmented, AffineStateDependenceMatchesJointGaussian) {
  // r_D = D d + b0_D + J_D x and r_Y = Y d + b0_Y + J_Y x: linearization is exact.
  std::mt19937_64 rng(84);
  const Eigen::Index nd = 4, nx = 2;
  const Eigen::MatrixXd dm = random_vector(rng, 2 * nd).reshaped(2, nd);
  const Eigen::MatrixXd ym = random_vector(rng, 3 * nd).reshaped(3, nd);
  const Eigen::MatrixXd jd = random_vector(rng, 2 * nx).reshaped(2, nx);
  const Eigen::MatrixXd jy = random_vector(rng, 3 * nx).reshaped(3, nx);
  const Eigen::VectorXd b0d = random_vector(rng, 2), b0y = random_vector(rng, 3);
  const Eigen::VectorXd x_bar = random_vector(rng, nx), mu_x = random_vector(rng, nx);
  const Eigen::MatrixXd sigma_x = random_spd(rng, nx, 0.5);

  MapProblem p;
  p.D = dm.sparseView();
  p.b_D = b0d + jd * x_bar;
  p.model_variance = Eigen::Vector2d(1e-2, 2e-2);
  p.Y = ym.sparseView();
  p.b_Y = b0y + jy * x_bar;
  p.y = random_vector(rng, 3);
  p.measurement_variance = Eigen::Vector3d(0.1, 0.2, 0.3);
  p.prior_mean = random_vector(rng, nd);
  p.prior_variance = Eigen::Vector4d(1, 2, 3, 4);

  DynamicsCallbacks cb;
  cb.constraint_jacobian = [&](const Eigen::VectorXd&, const Eigen::VectorXd&) { return jd; };
  cb.measurement_jacobian = [&](const Eigen::VectorXd&, const Eigen::VectorXd&) { return jy; };
  const GaussianBelief aug = map_solve_augmented(p, mu_x, sigma_x, Eigen::VectorXd::Zero(nd), x_bar, cb);

  Eigen::MatrixXd ad(2, nd + nx), ay(3, nd + nx);
  ad << dm, jd;
  ay << ym, jy;
  Eigen::MatrixXd prior_info = Eigen::MatrixXd::Zero(nd + nx, nd + nx);
  prior_info.topLeftCorner(nd, nd) = p.prior_variance.cwiseInverse().asDiagonal();
  prior_info.bottomRightCorner(nx, nx) = sigma_x.inverse();
  Eigen::VectorXd prior_mean(nd + nx);
  prior_mean << p.prior_mean, mu_x;
  const Eigen::MatrixXd wd = p.model_variance.cwiseInverse().asDiagonal();
  const Eigen::MatrixXd wy = p.measurement_variance.cwiseInverse().asDiagonal();
  const Eigen::MatrixXd precision = prior_info + ad.transpose() * wd * ad + ay.transpose() * wy * ay;
  const Eigen::VectorXd rhs = prior_info * prior_mean - ad.transpose() * wd * b0d + ay.transpose() * wy * (p.y - b0y);
  const Eigen::VectorXd mean = precision.ldlt().solve(rhs);
  EXPECT_LE((aug.mean() - mean).norm(), 1e-9 * (1.0 + mean.norm()));
  EXPECT_LE((aug.covariance() - precision.inverse()).norm(), 1e-9 * precision.inverse().norm());
}

TEST(Augmented, RejectsBadInputs) {
  MapProblem p;
  p.D = SparseMatrix(1, 2);
  p.b_D = Eigen::VectorXd::Zero(1);
  p.model_variance = Eigen::VectorXd::Ones(1);
  p.Y = SparseMatrix(1, 2);
  p.b_Y = Eigen::VectorXd::Zero(1);
  p.y = Eigen::VectorXd::Zero(1);
  p.measurement_variance = Eigen::VectorXd::Ones(1);
  p.prior_mean = Eigen::VectorXd::Zero(2);
  p.prior_variance = Eigen::VectorXd::Ones(2);
  DynamicsCallbacks none;
  EXPECT_THROW(map_solve_augmented(p, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(2),
                                   Eigen::VectorXd::Zero(1), none),
               InputError);
  DynamicsCallbacks wrong;
  wrong.constraint_jacobian = [](const Eigen::VectorXd&, const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(3, 1); };
  wrong.measurement_jacobian = wrong.constraint_jacobian;
  EXPECT_THROW(map_solve_augmented(p, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(2),
                                   Eigen::VectorXd::Zero(1), wrong),
               InputError);
  DynamicsCallbacks ok;
  ok.constraint_jacobian = [](const Eigen::VectorXd&, const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(1, 1); };
  ok.measurement_jacobian = ok.constraint_jacobian;
  EXPECT_THROW(map_solve_augmented(p, Eigen::VectorXd::Zero(1), -Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(2),
                                   Eigen::VectorXd::Zero(1), ok),
               InputError);
}

}  // namespace
}  // namespace mapdyn
