#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "adeki/error.hpp"
#include "adeki/metrics.hpp"
#include "doctest.h"

using namespace adeki;

namespace {

Eigen::MatrixXd random_symmetric(int n, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = nd(gen);
  return 0.5 * (a + a.transpose());
}

// cyclic Jacobi rotations, independent of Eigen's solver
std::vector<double> jacobi_eigvals(Eigen::MatrixXd a) {
  const int n = static_cast<int>(a.rows());
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (int i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("eigenvalues of simple matrices") {
    const Eigen::VectorXd id = sym_eigvals(SymMatrix(Eigen::Matrix2d::Identity()));
    CHECK(id[0] == doctest::Approx(1.0));
    CHECK(id[1] == doctest::Approx(1.0));

    Eigen::Matrix2d d;
    d << 5.0, 0.0, 0.0, -2.0;
    const Eigen::VectorXd ev = sym_eigvals(SymMatrix(d));
    CHECK(ev[0] == doctest::Approx(-2.0));
    CHECK(ev[1] == doctest::Approx(5.0));
  }

  TEST_CASE("eigenvalues match a Jacobi oracle") {
    std::mt19937_64 gen(7);
    for (int rep = 0; rep < 10; ++rep) {
      const Eigen::MatrixXd a = random_symmetric(5, gen);
      const Eigen::VectorXd ev = sym_eigvals(SymMatrix(a));
      const std::vector<double> ref = jacobi_eigvals(a);
      for (int i = 0; i < 5; ++i) CHECK(std::abs(ev[i] - ref[i]) < 1e-10);
    }
  }

  TEST_CASE("shift moves every eigenvalue by the shift") {
    std::mt19937_64 gen(11);
    const Eigen::MatrixXd a = random_symmetric(6, gen);
    const double c = 0.37;
    const Eigen::VectorXd e0 = sym_eigvals(SymMatrix(a));
    const Eigen::VectorXd e1 = sym_eigvals(SymMatrix(a + c * Eigen::MatrixXd::Identity(6, 6)));
    for (int i = 0; i < 6; ++i) CHECK(std::abs(e1[i] - e0[i] - c) < 1e-12);
  }

  TEST_CASE("asymmetric input is rejected") {
    Eigen::Matrix2d m;
    m << 1.0, 0.5, 0.4, 1.0;
    CHECK_THROWS_AS(SymMatrix{m}, Error);
  }

  TEST_CASE("log-determinant") {
    CHECK(logdet_spd(SymMatrix(Eigen::Matrix3d::Identity())).value == doctest::Approx(0.0));
    Eigen::Matrix2d d = Eigen::Matrix2d::Zero();
    d(0, 0) = std::exp(1.0);
    d(1, 1) = std::exp(2.0);
    CHECK(logdet_spd(SymMatrix(d)).value == doctest::Approx(3.0).epsilon(1e-14));

    std::mt19937_64 gen(3);
    for (int rep = 0; rep < 5; ++rep) {
      Eigen::MatrixXd b = random_symmetric(6, gen);
      const Eigen::MatrixXd spd = b * b.transpose() + 0.5 * Eigen::MatrixXd::Identity(6, 6);
      const Eigen::LLT<Eigen::MatrixXd> llt(spd);
      const double ref = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      CHECK(std::abs(logdet_spd(SymMatrix(spd)).value - ref) < 1e-10);

      const double s = 3.5;
      CHECK(std::abs(logdet_spd(SymMatrix(s * spd)).value - ref - 6.0 * std::log(s)) < 1e-10);
    }
  }

  TEST_CASE("log-determinant clipping") {
    Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
    m(0, 0) = 1.0;
    const LogDet ld = logdet_spd(SymMatrix(m), 1e-6);
    CHECK(ld.clipped == 1);
    CHECK(ld.value == doctest::Approx(std::log(1e-6)));
    CHECK_THROWS_AS(logdet_spd(SymMatrix(m)), Error);
    m(1, 1) = -1.0;
    CHECK_THROWS_AS(logdet_spd(SymMatrix(m), 1e-6), Error);
  }

  TEST_CASE("sigma_eq and distance") {
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    cov(0, 0) = 0.04;
    cov(1, 1) = 0.01;
    CHECK(sigma_eq(cov) == doctest::Approx(std::pow(0.04 * 0.01, 0.25)));
    CHECK(distance2d(0.45, 0.25, 0.25, 0.25) == doctest::Approx(0.2));
  }

  TEST_CASE("field error") {
    const std::vector<double> truth{1.0, -2.0, 3.0};
    const std::vector<double> model{1.5, -2.0, 2.0};
    const FieldError e = field_error(model, truth);
    CHECK(e.mse == doctest::Approx((0.25 + 0.0 + 1.0) / 3.0));
    CHECK(e.re == doctest::Approx(1.5 / 6.0));
    const std::vector<double> zero(3, 0.0);
    CHECK_THROWS_AS(field_error(model, zero), Error);
  }

  TEST_CASE("linear fit") {
    const std::vector<double> x{1, 2, 3, 4};
    const std::vector<double> y{2, 4, 6, 8};
    CHECK(linear_fit_r2(x, y) == doctest::Approx(1.0));
    const std::vector<double> noisy{1, 3, 2, 4};
    CHECK(linear_fit_r2(x, noisy) < 1.0);
  }

  TEST_CASE("gaussian log density") {
    CHECK(gaussian_logpdf(0.3, 0.3, 2.0) == doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi * 2.0)));
  }
}
