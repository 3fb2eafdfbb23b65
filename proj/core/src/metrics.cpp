#include "adeki/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "adeki/error.hpp"

namespace adeki {

SymMatrix::SymMatrix(const Eigen::MatrixXd& m) {
  require(m.rows() == m.cols(), ErrorKind::invalid_argument, "SymMatrix: matrix must be square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  require(asym <= 1e-12 * scale, ErrorKind::invalid_argument, "SymMatrix: matrix is not symmetric");
  m_ = 0.5 * (m + m.transpose());
}

Eigen::VectorXd sym_eigvals(const SymMatrix& m) {
  if (m.dim() == 0) return {};
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.matrix(), Eigen::EigenvaluesOnly);
  require(es.info() == Eigen::Success, ErrorKind::numerical_failure, "eigenvalue solver did not converge");
  return es.eigenvalues();
}

LogDet logdet_spd(const SymMatrix& m, double floor) {
  const Eigen::VectorXd ev = sym_eigvals(m);
  LogDet out;
  out.floor = floor;
  for (double lam : ev) {
    if (lam < -floor) fail(ErrorKind::numerical_failure, "logdet_spd: matrix is indefinite beyond the clip floor");
    if (lam <= floor) {
      require(floor > 0.0, ErrorKind::numerical_failure, "logdet_spd: singular matrix and no clip floor");
      lam = floor;
      ++out.clipped;
    }
    out.value += std::log(lam);
  }
  return out;
}

double gaussian_logpdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (r * r / var + std::log(2.0 * std::numbers::pi * var));
}

double distance2d(double ax, double ay, double bx, double by) { return std::hypot(ax - bx, ay - by); }

double sigma_eq(const Eigen::Matrix2d& cov) {
  const Eigen::VectorXd ev = sym_eigvals(SymMatrix(cov));
  const double prod = std::max(0.0, ev[0]) * std::max(0.0, ev[1]);
  return std::pow(prod, 0.25);
}

FieldError field_error(std::span<const double> model, std::span<const double> truth) {
  require(model.size() == truth.size() && !truth.empty(), ErrorKind::invalid_argument,
          "field_error: size mismatch");
  double sq = 0.0, abs_diff = 0.0, abs_truth = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = model[i] - truth[i];
    sq += d * d;
    abs_diff += std::abs(d);
    abs_truth += std::abs(truth[i]);
  }
  if (abs_truth == 0.0) fail(ErrorKind::undefined_metric, "relative error: truth field is identically zero");
  return {sq / static_cast<double>(truth.size()), abs_diff / abs_truth};
}

double linear_fit_r2(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorKind::invalid_argument, "linear_fit_r2: need >= 2 points");
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (syy == 0.0) return 1.0;
  require(sxx > 0.0, ErrorKind::invalid_argument, "linear_fit_r2: x values are constant");
  return sxy * sxy / (sxx * syy);
}

}  // namespace adeki
