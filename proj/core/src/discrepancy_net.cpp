#include "adeki/discrepancy_net.hpp"

#include <cmath>
#include <sstream>

#include "adeki/error.hpp"

namespace adeki {

namespace net {
std::string param_name(int k) {
  auto rc = [](const char* m, int k, int cols) {
    return std::string(m) + "_" + std::to_string(k / cols) + "_" + std::to_string(k % cols);
  };
  if (k < kB1) return rc("W1", k - kW1, kIn);
  if (k < kW2) return "b1_" + std::to_string(k - kB1);
  if (k < kB2) return rc("W2", k - kW2, kHidden);
  if (k < kW3) return "b2_" + std::to_string(k - kB2);
  if (k < kB3) return rc("W3", k - kW3, kHidden);
  return "b3";
}
}  // namespace net

using namespace net;

namespace {
struct Activations {
  double h1[kHidden];
  double h2[kHidden];
  double out;
};

inline void forward_pass(double dx, double dy, const double* p, Activations& a) {
  for (int k = 0; k < kHidden; ++k) a.h1[k] = std::tanh(p[kW1 + 2 * k] * dx + p[kW1 + 2 * k + 1] * dy + p[kB1 + k]);
  a.out = p[kB3];
  for (int k = 0; k < kHidden; ++k) {
    double z = p[kB2 + k];
    for (int l = 0; l < kHidden; ++l) z += p[kW2 + kHidden * k + l] * a.h1[l];
    a.h2[k] = std::tanh(z);
    a.out += p[kW3 + k] * a.h2[k];
  }
}
}  // namespace

double nn_forward(double dx, double dy, const double* p) {
  Activations a;
  forward_pass(dx, dy, p, a);
  return a.out;
}

double nn_accumulate_grad(double dx, double dy, const double* p, double scale, double* grad) {
  Activations a;
  forward_pass(dx, dy, p, a);
  double d2[kHidden];
  grad[kB3] += scale;
  for (int k = 0; k < kHidden; ++k) {
    grad[kW3 + k] += scale * a.h2[k];
    d2[k] = scale * p[kW3 + k] * (1.0 - a.h2[k] * a.h2[k]);
    grad[kB2 + k] += d2[k];
    for (int l = 0; l < kHidden; ++l) grad[kW2 + kHidden * k + l] += d2[k] * a.h1[l];
  }
  for (int l = 0; l < kHidden; ++l) {
    double d1 = 0.0;
    for (int k = 0; k < kHidden; ++k) d1 += p[kW2 + kHidden * k + l] * d2[k];
    d1 *= 1.0 - a.h1[l] * a.h1[l];
    grad[kW1 + 2 * l] += d1 * dx;
    grad[kW1 + 2 * l + 1] += d1 * dy;
    grad[kB1 + l] += d1;
  }
  return a.out;
}

Eigen::VectorXd nn_param_grad(double dx, double dy, const Eigen::VectorXd& p) {
  require(p.size() == kParams, ErrorKind::invalid_argument, "network parameter vector must have 37 entries");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(kParams);
  nn_accumulate_grad(dx, dy, p.data(), 1.0, g.data());
  return g;
}

Eigen::VectorXd init_net_params(Rng& rng, double sd) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(kParams);
  for (int k = 0; k < kW3; ++k) p[k] = sd * rng.normal();
  return p;
}

std::string net_params_csv(const Eigen::VectorXd& p) {
  require(p.size() == kParams, ErrorKind::invalid_argument, "network parameter vector must have 37 entries");
  std::ostringstream os;
  os.precision(17);
  os << "# layers: 2x4 tanh, 4x4 tanh, 4x1 linear\n";
  os << "index,name,value\n";
  for (int k = 0; k < kParams; ++k) os << k << ',' << param_name(k) << ',' << p[k] << '\n';
  return os.str();
}

Eigen::VectorXd parse_net_params_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  Eigen::VectorXd p = Eigen::VectorXd::Zero(kParams);
  int seen = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("index", 0) == 0) continue;
    const auto c1 = line.find(','), c2 = line.rfind(',');
    if (c1 == std::string::npos || c1 == c2) fail(ErrorKind::io, "malformed parameter row: " + line);
    const int k = std::stoi(line.substr(0, c1));
    if (k < 0 || k >= kParams) fail(ErrorKind::io, "parameter index out of range: " + line);
    p[k] = std::stod(line.substr(c2 + 1));
    ++seen;
  }
  if (seen != kParams) fail(ErrorKind::io, "expected 37 parameter rows");
  return p;
}

TrainResult train(const Eigen::VectorXd& p0, const LossFn& loss, const TrainOptions& options) {
  TrainResult r;
  r.params = p0;
  Eigen::VectorXd grad(p0.size());
  double current = loss(p0, &grad);
  if (!std::isfinite(current) || !grad.allFinite()) fail(ErrorKind::training_failure, "non-finite initial loss");
  r.initial_loss = r.best_loss = current;
  r.loss_trace.push_back(current);
  double step = options.initial_step;
  Eigen::VectorXd p = p0;
  for (r.epochs = 0; r.epochs < options.max_epochs; ++r.epochs) {
    if (grad.squaredNorm() == 0.0) break;
    bool accepted = false;
    double trial_loss = current;
    Eigen::VectorXd trial;
    for (int h = 0; h <= options.max_halvings; ++h) {
      trial = p - step * grad;
      trial_loss = loss(trial, nullptr);
      if (std::isfinite(trial_loss) && trial_loss < current) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const double improvement = (current - trial_loss) / std::max(current, 1e-300);
    p = trial;
    current = loss(p, &grad);
    if (!std::isfinite(current) || !grad.allFinite()) fail(ErrorKind::training_failure, "non-finite loss");
    ++r.accepted;
    r.loss_trace.push_back(current);
    if (current < r.best_loss) {
      r.best_loss = current;
      r.params = p;
    }
    step *= options.growth;
    if (improvement < options.plateau) break;
  }
  return r;
}

}  // namespace adeki
