#include <Eigen/Dense>
#include <string>

#include "mapdyn/errors.hpp"
#include "mapdyn/sensors.hpp"

namespace mapdyn {

namespace {

// Rows 0..2 of the fitted-coefficient operator evaluated at offset `at`
// (in samples) within a window starting at 0: value, first and second
// derivative weights per sample.
Eigen::Matrix<double, 3, Eigen::Dynamic> window_weights(int window, int order, double at, double dt) {
  Eigen::MatrixXd v(window, order + 1);
  for (int r = 0; r < window; ++r) {
    const double x = (r - at) * dt;
    double p = 1.0;
    for (int c = 0; c <= order; ++c) {
      v(r, c) = p;
      p *= x;
    }
  }
  const Eigen::MatrixXd coeffs = v.completeOrthogonalDecomposition().pseudoInverse();
  Eigen::Matrix<double, 3, Eigen::Dynamic> w = Eigen::MatrixXd::Zero(3, window);
  w.row(0) = coeffs.row(0);
  if (order >= 1) w.row(1) = coeffs.row(1);
  if (order >= 2) w.row(2) = 2.0 * coeffs.row(2);
  return w;
}

}  // namespace

SavitzkyGolayResult savitzky_golay_derivatives(const Eigen::MatrixXd& samples, double dt, int window, int order) {
  if (window < 1 || window % 2 == 0) throw InputError("savitzky_golay: window must be odd and positive");
  if (order < 0 || window <= order) throw InputError("savitzky_golay: window must exceed the polynomial order");
  if (!(dt > 0.0)) throw InputError("savitzky_golay: dt must be positive");
  const Eigen::Index n = samples.rows();
  if (n < window) {
    throw InputError("savitzky_golay: series has " + std::to_string(n) + " samples, window needs " +
                     std::to_string(window));
  }
  const int half = window / 2;
  SavitzkyGolayResult out{Eigen::MatrixXd(n, samples.cols()), Eigen::MatrixXd(n, samples.cols()),
                          Eigen::MatrixXd(n, samples.cols())};

  const auto centre = window_weights(window, order, half, dt);
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index start = k - half;
    double at = half;
    Eigen::Matrix<double, 3, Eigen::Dynamic> edge;
    const Eigen::Matrix<double, 3, Eigen::Dynamic>* w = &centre;
    if (start < 0 || start + window > n) {
      start = start < 0 ? 0 : n - window;
      at = static_cast<double>(k - start);
      edge = window_weights(window, order, at, dt);
      w = &edge;
    }
    const auto block = samples.middleRows(start, window);
    out.value.row(k) = w->row(0) * block;
    out.first.row(k) = w->row(1) * block;
    out.second.row(k) = w->row(2) * block;
  }
  return out;
}

}  // namespace mapdyn
