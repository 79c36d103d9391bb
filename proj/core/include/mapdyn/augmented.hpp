#pragma once

#include <Eigen/Core>
#include <functional>

#include "mapdyn/dynamics.hpp"
#include "mapdyn/estimator.hpp"
#include "mapdyn/sensors.hpp"

namespace mapdyn {

// State x = [q; qd] (2n entries).
Eigen::VectorXd stack_state(const Eigen::VectorXd& q, const Eigen::VectorXd& qd);

// r_D(x) = D(x) d + b_D(x) and r_Y(x) = Y(x) d + b_Y(x) through the
// assemblers.
Eigen::VectorXd constraint_residual(const ConstraintAssembler& constraints, const Eigen::VectorXd& d,
                                    const Eigen::VectorXd& x);
Eigen::VectorXd measurement_residual(const MeasurementAssembler& measurements, const Eigen::VectorXd& d,
                                     const Eigen::VectorXd& x);

// Jacobians of r_D and r_Y with respect to x at (d, x).
struct DynamicsCallbacks {
  std::function<Eigen::MatrixXd(const Eigen::VectorXd& d, const Eigen::VectorXd& x)> constraint_jacobian;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd& d, const Eigen::VectorXd& x)> measurement_jacobian;
};

// Forward-mode automatic differentiation of a templated copy of the
// residuals. Both assemblers must outlive the callbacks.
DynamicsCallbacks make_dynamics_callbacks(const ConstraintAssembler& constraints,
                                          const MeasurementAssembler& measurements);

// Central finite differences of the assembled residuals.
DynamicsCallbacks make_finite_difference_callbacks(const ConstraintAssembler& constraints,
                                                   const MeasurementAssembler& measurements, double step = 1e-6);

// Linearized joint estimate of (d, x). `problem` holds D, Y and the biases
// at x_bar; d_bar is the linearization point for d. The result has
// dimension dim(d) + dim(x), d first.
GaussianBelief map_solve_augmented(const MapProblem& problem, const Eigen::VectorXd& mu_x,
                                   const Eigen::MatrixXd& sigma_x, const Eigen::VectorXd& d_bar,
                                   const Eigen::VectorXd& x_bar, const DynamicsCallbacks& callbacks,
                                   const MapOptions& options = {});

}  // namespace mapdyn
