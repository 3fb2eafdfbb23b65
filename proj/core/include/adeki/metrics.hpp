#pragma once

#include <Eigen/Dense>
#include <span>

namespace adeki {

/// Dense symmetric matrix. Construction checks the asymmetry against a
/// 1e-12 relative bound and then averages with the transpose.
class SymMatrix {
 public:
  explicit SymMatrix(const Eigen::MatrixXd& m);

  const Eigen::MatrixXd& matrix() const noexcept { return m_; }
  Eigen::Index dim() const noexcept { return m_.rows(); }

 private:
  Eigen::MatrixXd m_;
};

/// Eigenvalues in ascending order.
Eigen::VectorXd sym_eigvals(const SymMatrix& m);

struct LogDet {
  double value = 0.0;
  int clipped = 0;
  double floor = 0.0;
};

/// Sum of log eigenvalues, each clipped from below at `floor`. Eigenvalues
/// below -floor are treated as genuine indefiniteness and raise.
LogDet logdet_spd(const SymMatrix& m, double floor = 0.0);

double gaussian_logpdf(double x, double mean, double var);

/// Euclidean distance between two points in the plane.
double distance2d(double ax, double ay, double bx, double by);

/// (lambda1 * lambda2)^(1/4) for a 2x2 covariance.
double sigma_eq(const Eigen::Matrix2d& cov);

struct FieldError {
  double mse = 0.0;
  double re = 0.0;
};

/// Mean squared and relative error of `model` against `truth`.
FieldError field_error(std::span<const double> model, std::span<const double> truth);

/// Coefficient of determination of an ordinary least-squares line.
double linear_fit_r2(std::span<const double> x, std::span<const double> y);

}  // namespace adeki
