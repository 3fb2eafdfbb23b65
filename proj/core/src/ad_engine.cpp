#include "adeki/ad_engine.hpp"

#include <algorithm>
#include <cmath>

#include "adeki/error.hpp"
#include "adeki/memory.hpp"
#include "adeki/parallel.hpp"

namespace adeki {

namespace {

MatrixXd centred(const MatrixXd& m) { return m.rowwise() - m.colwise().mean(); }

std::size_t matrix_bytes(const MatrixXd& m) { return static_cast<std::size_t>(m.size()) * sizeof(double); }

std::vector<MapEval> evaluate_with_grad(const BoundMap& map, const MatrixXd& theta, bool keep_state) {
  std::vector<MapEval> evals(static_cast<std::size_t>(theta.rows()));
  parallel_for(evals.size(), [&](std::size_t j) {
    evals[j] = map.evaluate(theta.row(static_cast<Eigen::Index>(j)).transpose(), true, keep_state);
  });
  return evals;
}

}  // namespace

DesignGradient grad_kl_wrt_design(const Design& d, const KlSample& sample, const ObservationFn& observe,
                                  const BoundMap& map, const MatrixXd& gamma, const AdOptions& options) {
  const Observation obs = observe(d, map);
  const bool store_all = options.mode == CheckpointMode::store_all;
  TrackedBytes held;
  std::vector<std::vector<MapEval>> stored;

  const MemberEvaluator evaluator = [&](const MatrixXd& theta, int) {
    MatrixXd g(theta.rows(), map.data_dim());
    if (store_all) {
      stored.push_back(evaluate_with_grad(map, theta, true));
      for (Eigen::Index j = 0; j < theta.rows(); ++j) {
        const MapEval& e = stored.back()[static_cast<std::size_t>(j)];
        g.row(j) = e.g.transpose();
        held.add(matrix_bytes(e.dg_dtheta) + matrix_bytes(e.dg_dd));
      }
    } else {
      g = evaluate_members(map, theta);
    }
    held.add(matrix_bytes(theta) + matrix_bytes(g));
    return g;
  };

  const EkiRun run = run_eki(sample, obs.y, gamma, evaluator, options.eki);
  const auto K = static_cast<int>(run.g.size());
  const Eigen::Index J = sample.theta0.rows();
  const double inv = 1.0 / static_cast<double>(J - 1);

  DesignGradient out;
  out.value = run.kl_trace.back();
  out.kl_trace = run.kl_trace;

  const CovFactor f0 = factor_covariance(ensemble_cov(sample.theta0));
  const CovFactor fK = factor_covariance(ensemble_cov(run.theta.back()));
  const VectorXd shift = (run.theta.back().colwise().mean() - sample.theta0.colwise().mean()).transpose();
  const VectorXd v = f0.precision * shift;
  const MatrixXd W = 0.5 * (f0.precision - fK.precision);

  MatrixXd theta_bar = (2.0 * inv) * centred(run.theta.back()) * W;
  theta_bar.rowwise() += v.transpose() / static_cast<double>(J);

  VectorXd y_bar = VectorXd::Zero(obs.y.size());
  Eigen::Vector2d d_bar = Eigen::Vector2d::Zero();

  for (int n = K - 1; n >= 0; --n) {
    const MatrixXd& theta = run.theta[static_cast<std::size_t>(n)];
    const MatrixXd& G = run.g[static_cast<std::size_t>(n)];
    const MatrixXd A = centred(theta);
    const MatrixXd B = centred(G);
    const MatrixXd c_tg = A.transpose() * B * inv;
    const MatrixXd S = B.transpose() * B * inv + gamma;
    const MatrixXd S_inv = S.ldlt().solve(MatrixXd::Identity(S.rows(), S.cols()));
    const MatrixXd gain = c_tg * S_inv;
    const MatrixXd R = (sample.eps[static_cast<std::size_t>(n)].rowwise() + obs.y.transpose()) - G;

    const MatrixXd R_bar = theta_bar * gain;
    const MatrixXd gain_bar = theta_bar.transpose() * R;
    y_bar += R_bar.colwise().sum().transpose();
    MatrixXd G_bar = -R_bar;
    const MatrixXd c_tg_bar = gain_bar * S_inv;
    const MatrixXd S_bar = -gain.transpose() * gain_bar * S_inv;
    const MatrixXd A_bar = B * c_tg_bar.transpose() * inv;
    const MatrixXd B_bar = A * c_tg_bar * inv + B * (S_bar + S_bar.transpose()) * inv;
    G_bar += centred(B_bar);

    MatrixXd theta_prev_bar = theta_bar;
    if (!options.truncate_theta_chain) theta_prev_bar += centred(A_bar);

    std::vector<MapEval> replay;
    const std::vector<MapEval>* evals = nullptr;
    if (store_all) {
      evals = &stored[static_cast<std::size_t>(n)];
    } else {
      replay = evaluate_with_grad(map, theta, false);
      for (Eigen::Index j = 0; j < J; ++j) {
        if (replay[static_cast<std::size_t>(j)].g != G.row(j).transpose())
          fail(ErrorKind::replay_mismatch, "member prediction replay differs from the checkpoint");
      }
      evals = &replay;
    }
    for (Eigen::Index j = 0; j < J; ++j) {
      const MapEval& e = (*evals)[static_cast<std::size_t>(j)];
      const VectorXd gj = G_bar.row(j).transpose();
      if (!options.truncate_theta_chain) theta_prev_bar.row(j) += (e.dg_dtheta.transpose() * gj).transpose();
      d_bar += e.dg_dd.transpose() * gj;
    }
    theta_bar = std::move(theta_prev_bar);
    if (store_all) stored[static_cast<std::size_t>(n)].clear();
  }
  d_bar += obs.dy_dd.transpose() * y_bar;
  out.grad = d_bar;
  return out;
}

DesignGradient grad_kl_wrt_design(const Design& d, const KlSample& sample, const ObservationFn& observe,
                                  const DesignModel& model, const MatrixXd& gamma, const AdOptions& options) {
  const auto bound = model.bind(d);
  return grad_kl_wrt_design(d, sample, observe, *bound, gamma, options);
}

DesignGradient grad_eig_wrt_design(const Design& d, const EigSampleSet& samples, const DesignModel& model,
                                   const MatrixXd& gamma, const AdOptions& options) {
  require(!samples.samples.empty(), ErrorKind::invalid_argument, "EIG needs at least one outer sample");
  const auto bound = model.bind(d);
  DesignGradient out;
  const auto M = static_cast<double>(samples.samples.size());
  for (std::size_t m = 0; m < samples.samples.size(); ++m) {
    const DesignGradient g =
        grad_kl_wrt_design(d, samples.samples[m], samples.observations[m], *bound, gamma, options);
    out.value += g.value / M;
    out.grad += g.grad / M;
    if (out.kl_trace.size() < g.kl_trace.size()) out.kl_trace.resize(g.kl_trace.size(), 0.0);
    for (std::size_t n = 0; n < g.kl_trace.size(); ++n) out.kl_trace[n] += g.kl_trace[n] / M;
  }
  return out;
}

OptimizerTrace optimize_design(const Design& d0, const DesignObjective& objective, const OptimizerOptions& options) {
  require(options.step > 0.0, ErrorKind::invalid_argument, "optimizer step must be positive");
  OptimizerTrace trace;
  auto adjust = [&](Design d) {
    d.x = std::clamp(std::clamp(d.x, d0.x - options.step_box, d0.x + options.step_box), options.lo, options.hi);
    d.y = std::clamp(std::clamp(d.y, d0.y - options.step_box, d0.y + options.step_box), options.lo, options.hi);
    if (options.grid) d = nudge_off_grid(*options.grid, d, options.hi);
    return d;
  };
  Design cur = adjust(d0);
  DesignGradient f = objective(cur);
  ++trace.evaluations;
  trace.designs.push_back(cur);
  trace.values.push_back(f.value);
  trace.grads.push_back(f.grad);
  trace.stop_reason = "max_iters";
  for (int it = 0; it < options.max_iters; ++it) {
    const double gnorm = f.grad.norm();
    if (!(gnorm > 0.0) || !std::isfinite(gnorm)) {
      trace.stop_reason = "zero_gradient";
      break;
    }
    double step = options.step;
    bool accepted = false, clipped = false, stuck = false;
    Design next;
    DesignGradient fn;
    for (int h = 0; h <= options.max_halvings; ++h, step *= 0.5) {
      Design raw = cur;
      raw.x += step * f.grad[0] / gnorm;
      raw.y += step * f.grad[1] / gnorm;
      next = adjust(raw);
      if (next.x == cur.x && next.y == cur.y) {
        stuck = true;
        break;
      }
      clipped = std::abs(next.x - raw.x) > 1e-8 || std::abs(next.y - raw.y) > 1e-8;
      fn = objective(next);
      ++trace.evaluations;
      if (fn.value > f.value) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      trace.stop_reason = stuck ? "boundary" : "no_improvement";
      break;
    }
    const double increment = fn.value - f.value;
    cur = next;
    f = fn;
    trace.designs.push_back(cur);
    trace.values.push_back(f.value);
    trace.grads.push_back(f.grad);
    if (clipped) {
      trace.stop_reason = "boundary";
      break;
    }
    if (increment < options.tol) {
      trace.stop_reason = "tolerance";
      break;
    }
  }
  return trace;
}

}  // namespace adeki
