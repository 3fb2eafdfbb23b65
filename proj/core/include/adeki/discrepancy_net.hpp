#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "adeki/random.hpp"

namespace adeki {

/// 2-4-4-1 tanh network. Flat layout: W1 (4x2 row-major), b1, W2 (4x4
/// row-major), b2, W3 (1x4), b3.
namespace net {
inline constexpr int kIn = 2;
inline constexpr int kHidden = 4;
inline constexpr int kParams = kHidden * kIn + kHidden + kHidden * kHidden + kHidden + kHidden + 1;
inline constexpr int kW1 = 0;
inline constexpr int kB1 = kW1 + kHidden * kIn;
inline constexpr int kW2 = kB1 + kHidden;
inline constexpr int kB2 = kW2 + kHidden * kHidden;
inline constexpr int kW3 = kB2 + kHidden;
inline constexpr int kB3 = kW3 + kHidden;
static_assert(kParams == 37);

std::string param_name(int k);
}  // namespace net

double nn_forward(double dx, double dy, const double* p);
inline double nn_forward(double dx, double dy, const Eigen::VectorXd& p) { return nn_forward(dx, dy, p.data()); }

/// Adds scale * d(output)/d(p) into grad and returns the output.
double nn_accumulate_grad(double dx, double dy, const double* p, double scale, double* grad);

Eigen::VectorXd nn_param_grad(double dx, double dy, const Eigen::VectorXd& p);

/// Hidden layers drawn from N(0, sd^2); the output layer starts at zero so the
/// correction is identically zero before training.
Eigen::VectorXd init_net_params(Rng& rng, double sd);

std::string net_params_csv(const Eigen::VectorXd& p);
Eigen::VectorXd parse_net_params_csv(const std::string& text);

struct TrainingRecord {
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;
  double value = 0.0;
  int stage = 0;
};

struct TrainOptions {
  int max_epochs = 200;
  double plateau = 1e-8;
  double initial_step = 1e-2;
  int max_halvings = 40;
  double growth = 1.0;  // step multiplier after an accepted epoch
};

struct TrainResult {
  Eigen::VectorXd params;
  double initial_loss = 0.0;
  double best_loss = 0.0;
  int epochs = 0;
  int accepted = 0;
  std::vector<double> loss_trace;
};

/// Loss and (optionally) its gradient at p.
using LossFn = std::function<double(const Eigen::VectorXd& p, Eigen::VectorXd* grad)>;

/// Gradient descent with backtracking: the step is halved until the loss
/// decreases and scaled by `growth` after each accepted step. Returns the best
/// parameters seen.
TrainResult train(const Eigen::VectorXd& p0, const LossFn& loss, const TrainOptions& options);

}  // namespace adeki
