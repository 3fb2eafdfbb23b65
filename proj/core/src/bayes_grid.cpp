#include "adeki/bayes_grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "adeki/error.hpp"
#include "adeki/metrics.hpp"
#include "adeki/parallel.hpp"

namespace adeki {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_lattice(int n) { require(n >= 2, ErrorKind::invalid_argument, "lattice needs at least 2 nodes per axis"); }
}  // namespace

GridPosterior::GridPosterior(int n) : n_(n) {
  check_lattice(n);
  probs_.assign(static_cast<std::size_t>(n) * n, 1.0 / (static_cast<double>(n) * n));
}

GridPosterior::GridPosterior(int n, std::vector<double> probs) : n_(n), probs_(std::move(probs)) {
  check_lattice(n);
  require(probs_.size() == static_cast<std::size_t>(n) * n, ErrorKind::invalid_argument,
          "probability vector does not match the lattice");
  double total = 0.0;
  for (double p : probs_) {
    require(std::isfinite(p) && p >= 0.0, ErrorKind::invalid_argument, "probabilities must be finite and >= 0");
    total += p;
  }
  if (!(total > 0.0)) fail(ErrorKind::degenerate_update, "distribution has no mass");
  for (double& p : probs_) p /= total;
}

GridPosterior GridPosterior::from_log_weights(int n, std::span<const double> logw) {
  double top = kNegInf;
  for (double v : logw) {
    require(!std::isnan(v) && v != std::numeric_limits<double>::infinity(), ErrorKind::numerical_failure,
            "log weight is not a number");
    top = std::max(top, v);
  }
  if (top == kNegInf) fail(ErrorKind::degenerate_update, "every node has zero weight");
  std::vector<double> w(logw.size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = std::exp(logw[k] - top);
  return GridPosterior(n, std::move(w));
}

GridPosterior GridPosterior::gaussian(int n, double mean_x, double mean_y, double sd) {
  require(sd > 0.0, ErrorKind::invalid_argument, "prior sd must be positive");
  GridPosterior base(n);
  std::vector<double> logw(base.size());
  for (std::size_t k = 0; k < logw.size(); ++k) {
    const double dx = base.x(k) - mean_x, dy = base.y(k) - mean_y;
    logw[k] = -(dx * dx + dy * dy) / (2.0 * sd * sd);
  }
  return from_log_weights(n, logw);
}

std::vector<double> log_likelihood_grid(double y, std::span<const double> predictions, double noise_var) {
  require(noise_var > 0.0, ErrorKind::invalid_argument, "noise variance must be positive");
  std::vector<double> out(predictions.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = gaussian_logpdf(y, predictions[k], noise_var);
  return out;
}

std::vector<double> likelihood_grid(double y, std::span<const double> predictions, double noise_var) {
  std::vector<double> out = log_likelihood_grid(y, predictions, noise_var);
  for (double& v : out) v = std::exp(v);
  return out;
}

GridPosterior posterior_update(const GridPosterior& prior, std::span<const double> likelihood) {
  require(likelihood.size() == prior.size(), ErrorKind::invalid_argument, "likelihood does not match the lattice");
  std::vector<double> w(prior.size());
  double total = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    require(std::isfinite(likelihood[k]) && likelihood[k] >= 0.0, ErrorKind::numerical_failure,
            "likelihood must be finite and >= 0");
    w[k] = prior[k] * likelihood[k];
    total += w[k];
  }
  if (!(total > 0.0)) fail(ErrorKind::degenerate_update, "posterior has no mass");
  return GridPosterior(prior.n(), std::move(w));
}

GridPosterior posterior_update_log(const GridPosterior& prior, std::span<const double> log_likelihood) {
  require(log_likelihood.size() == prior.size(), ErrorKind::invalid_argument,
          "likelihood does not match the lattice");
  std::vector<double> logw(prior.size());
  for (std::size_t k = 0; k < logw.size(); ++k)
    logw[k] = prior[k] > 0.0 ? std::log(prior[k]) + log_likelihood[k] : kNegInf;
  return GridPosterior::from_log_weights(prior.n(), logw);
}

double kl_utility(const GridPosterior& posterior, const GridPosterior& prior) {
  require(posterior.size() == prior.size(), ErrorKind::invalid_argument, "distributions live on different lattices");
  double kl = 0.0;
  for (std::size_t k = 0; k < posterior.size(); ++k) {
    const double p = posterior[k];
    if (p == 0.0) continue;
    if (prior[k] == 0.0) fail(ErrorKind::support_violation, "posterior puts mass where the prior has none");
    kl += p * std::log(p / prior[k]);
  }
  return kl;
}

PhysMap map_estimate(const GridPosterior& p) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < p.size(); ++k)
    if (p[k] > p[best]) best = k;
  return {p.x(best), p.y(best), best};
}

GridPosterior flatten_prior(const GridPosterior& p, double power) {
  require(power > 0.0 && std::isfinite(power), ErrorKind::invalid_argument, "flattening power must be positive");
  std::vector<double> logw(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) logw[k] = p[k] > 0.0 ? power * std::log(p[k]) : kNegInf;
  return GridPosterior::from_log_weights(p.n(), logw);
}

PosteriorMetrics posterior_metrics(const GridPosterior& p, double truth_x, double truth_y) {
  PosteriorMetrics m;
  m.map = map_estimate(p);
  m.distance = distance2d(m.map.x, m.map.y, truth_x, truth_y);
  for (std::size_t k = 0; k < p.size(); ++k) m.mean += p[k] * Eigen::Vector2d(p.x(k), p.y(k));
  for (std::size_t k = 0; k < p.size(); ++k) {
    const Eigen::Vector2d e = Eigen::Vector2d(p.x(k), p.y(k)) - m.mean;
    m.cov += p[k] * e * e.transpose();
  }
  m.sigma_eq = sigma_eq(m.cov);
  return m;
}

FieldWindow FieldWindow::covering(const Grid2D& grid, double lo, double hi) {
  require(grid.contains(lo, lo) && grid.contains(hi, hi), ErrorKind::out_of_bounds,
          "design region is not inside the simulation grid");
  FieldWindow w;
  w.i0 = std::max(0, static_cast<int>(std::floor((lo - grid.x_min) / grid.hx() + 1e-9)));
  w.i1 = std::min(grid.nx - 1, static_cast<int>(std::ceil((hi - grid.x_min) / grid.hx() - 1e-9)));
  w.j0 = std::max(0, static_cast<int>(std::floor((lo - grid.y_min) / grid.hy() + 1e-9)));
  w.j1 = std::min(grid.ny - 1, static_cast<int>(std::ceil((hi - grid.y_min) / grid.hy() - 1e-9)));
  // one extra node so bilinear stencils at the region edge stay inside
  w.i0 = std::max(0, w.i0 - 1);
  w.j0 = std::max(0, w.j0 - 1);
  w.i1 = std::min(grid.nx - 1, w.i1 + 1);
  w.j1 = std::min(grid.ny - 1, w.j1 + 1);
  return w;
}

void FieldWindow::extract(const Grid2D& grid, const Field& u, double* out) const {
  std::size_t k = 0;
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i) out[k++] = u[grid.index(i, j)];
}

PredictionCache::PredictionCache(Grid2D grid, FieldWindow window, int lattice_n, int stride,
                                 std::shared_ptr<const std::vector<double>> data, std::size_t offset,
                                 std::size_t pitch, double scale)
    : grid_(grid),
      window_(window),
      lattice_n_(lattice_n),
      stride_(stride),
      data_(std::move(data)),
      offset_(offset),
      pitch_(pitch),
      scale_(scale) {
  check_lattice(lattice_n);
  require(stride >= 1 && (lattice_n - 1) % stride == 0, ErrorKind::invalid_argument,
          "cache stride must divide the lattice intervals");
}

void PredictionCache::stored_values(const Design& d, std::vector<double>& out) const {
  const PointStencil s = bilinear_stencil(grid_, d.x, d.y);
  std::array<std::size_t, 4> local{};
  for (int c = 0; c < 4; ++c) {
    const int i = static_cast<int>(s.idx[c] % grid_.nx), j = static_cast<int>(s.idx[c] / grid_.nx);
    if (i < window_.i0 || i > window_.i1 || j < window_.j0 || j > window_.j1)
      fail(ErrorKind::out_of_bounds, "design outside the cached window");
    local[c] = static_cast<std::size_t>(j - window_.j0) * window_.width() + (i - window_.i0);
  }
  const auto m = static_cast<std::size_t>(stored_n()) * stored_n();
  out.resize(m);
  const double* base = data_->data() + offset_;
  for (std::size_t k = 0; k < m; ++k) {
    const double* block = base + k * pitch_;
    out[k] = scale_ * (s.w[0] * block[local[0]] + s.w[1] * block[local[1]] + s.w[2] * block[local[2]] +
                       s.w[3] * block[local[3]]);
  }
}

void PredictionCache::predict_all(const Design& d, std::vector<double>& out) const {
  if (stride_ == 1) {
    stored_values(d, out);
    return;
  }
  std::vector<double> coarse;
  stored_values(d, coarse);
  const int cn = stored_n();
  out.resize(static_cast<std::size_t>(lattice_n_) * lattice_n_);
  for (int j = 0; j < lattice_n_; ++j) {
    const int cj = std::min(j / stride_, cn - 2);
    const double ty = static_cast<double>(j - cj * stride_) / stride_;
    for (int i = 0; i < lattice_n_; ++i) {
      const int ci = std::min(i / stride_, cn - 2);
      const double tx = static_cast<double>(i - ci * stride_) / stride_;
      const auto at = [&](int a, int b) { return coarse[static_cast<std::size_t>(b) * cn + a]; };
      out[static_cast<std::size_t>(j) * lattice_n_ + i] =
          (1 - tx) * (1 - ty) * at(ci, cj) + tx * (1 - ty) * at(ci + 1, cj) + (1 - tx) * ty * at(ci, cj + 1) +
          tx * ty * at(ci + 1, cj + 1);
    }
  }
}

double PredictionCache::predict(std::size_t theta_index, const Design& d) const {
  std::vector<double> all;
  predict_all(d, all);
  return all.at(theta_index);
}

PredictionCache build_prediction_cache(const StageSetup& stage, const ModelSpec& spec, const VectorXd& psi,
                                       int lattice_n, int stride) {
  check_lattice(lattice_n);
  require(stride >= 1 && (lattice_n - 1) % stride == 0, ErrorKind::invalid_argument,
          "cache stride must divide the lattice intervals");
  const Grid2D& grid = stage.solver->grid();
  const FieldWindow window = FieldWindow::covering(grid, 0.0, 1.0);
  const int cn = (lattice_n - 1) / stride + 1;
  const double spacing = static_cast<double>(stride) / (lattice_n - 1);
  auto data = std::make_shared<std::vector<double>>(static_cast<std::size_t>(cn) * cn * window.size());
  parallel_for(static_cast<std::size_t>(cn) * cn, [&](std::size_t k) {
    const double tx = static_cast<double>(k % cn) * spacing, ty = static_cast<double>(k / cn) * spacing;
    const SourceEvaluator ev(grid, spec, tx, ty);
    Field src;
    ev.field(psi, src);
    const ScalarFieldSeries s = stage.solver->solve(src, *stage.schedule, stage.snapshot);
    window.extract(grid, s.values.back(), data->data() + k * window.size());
  });
  return PredictionCache(grid, window, lattice_n, stride, std::move(data), 0, window.size(), 1.0);
}

UnitFieldBank::UnitFieldBank(const FieldSolver& solver, const TimeSchedule& schedule, SourceFamily family,
                             double theta_h, int quad, int lattice_n, int stride)
    : grid_(solver.grid()),
      window_(FieldWindow::covering(solver.grid(), 0.0, 1.0)),
      lattice_n_(lattice_n),
      stride_(stride),
      snapshots_(schedule.snapshot_times.size()) {
  check_lattice(lattice_n);
  require(stride >= 1 && (lattice_n - 1) % stride == 0, ErrorKind::invalid_argument,
          "cache stride must divide the lattice intervals");
  const int cn = (lattice_n - 1) / stride + 1;
  const double spacing = static_cast<double>(stride) / (lattice_n - 1);
  const std::size_t pitch = snapshots_ * window_.size();
  data_ = std::make_shared<std::vector<double>>(static_cast<std::size_t>(cn) * cn * pitch);
  parallel_for(static_cast<std::size_t>(cn) * cn, [&](std::size_t k) {
    const SourceParams p{static_cast<double>(k % cn) * spacing, static_cast<double>(k / cn) * spacing, theta_h, 1.0};
    Field src;
    family_source(grid_, family, p, quad, src);
    const ScalarFieldSeries s = solver.solve(src, schedule);
    for (std::size_t t = 0; t < snapshots_; ++t)
      window_.extract(grid_, s.values[t], data_->data() + k * pitch + t * window_.size());
  });
}

PredictionCache UnitFieldBank::cache(std::size_t snapshot, double theta_s) const {
  require(snapshot < snapshots_, ErrorKind::missing_snapshot, "snapshot not stored in the bank");
  return PredictionCache(grid_, window_, lattice_n_, stride_, data_, snapshot * window_.size(),
                         snapshots_ * window_.size(), theta_s);
}

PhysicalDraws draw_physical(int samples, Rng& rng) {
  require(samples >= 1, ErrorKind::invalid_argument, "at least one EIG sample is required");
  PhysicalDraws d;
  for (int m = 0; m < samples; ++m) {
    d.u.push_back(rng.uniform());
    d.z.push_back(rng.normal());
  }
  return d;
}

namespace {

double eig_from_predictions(const std::vector<double>& g, const GridPosterior& prior, const std::vector<double>& cdf,
                            double noise_var, const PhysicalDraws& draws) {
  const double sd = std::sqrt(noise_var);
  std::vector<double> ll(g.size());
  double total = 0.0;
  for (std::size_t m = 0; m < draws.u.size(); ++m) {
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), draws.u[m] * cdf.back());
    std::size_t idx = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), g.size() - 1);
    while (prior[idx] == 0.0 && idx > 0) --idx;
    const double y = g[idx] + sd * draws.z[m];
    double top = kNegInf;
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (prior[k] == 0.0) continue;
      const double r = y - g[k];
      ll[k] = -r * r / (2.0 * noise_var);
      top = std::max(top, ll[k]);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k)
      if (prior[k] > 0.0) z += prior[k] * std::exp(ll[k] - top);
    const double log_z = top + std::log(z);
    double kl = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (prior[k] == 0.0) continue;
      const double lr = ll[k] - log_z;
      kl += prior[k] * std::exp(lr) * lr;
    }
    total += std::max(kl, 0.0);
  }
  return total / static_cast<double>(draws.u.size());
}

std::vector<double> prior_cdf(const GridPosterior& prior) {
  std::vector<double> cdf(prior.size());
  std::partial_sum(prior.probs().begin(), prior.probs().end(), cdf.begin());
  return cdf;
}

}  // namespace

double eig_physical(const Design& d, const GridPosterior& prior, const PredictionCache& cache, double noise_var,
                    const PhysicalDraws& draws) {
  require(noise_var > 0.0, ErrorKind::invalid_argument, "noise variance must be positive");
  require(!draws.u.empty() && draws.u.size() == draws.z.size(), ErrorKind::invalid_argument,
          "EIG draws are empty or inconsistent");
  std::vector<double> g;
  cache.predict_all(d, g);
  require(g.size() == prior.size(), ErrorKind::invalid_argument, "cache lattice does not match the prior");
  return eig_from_predictions(g, prior, prior_cdf(prior), noise_var, draws);
}

PhysicalDesignResult optimize_design_physical(const Design& d_prev, const GridPosterior& prior,
                                              const PredictionCache& cache, double noise_var,
                                              const PhysicalSearch& search, Rng& rng) {
  require(search.candidates >= 1 && search.step_box >= 0.0, ErrorKind::invalid_argument,
          "candidate search needs a lattice size >= 1 and a non-negative step box");
  const double x0 = std::max(0.0, d_prev.x - search.step_box), x1 = std::min(1.0, d_prev.x + search.step_box);
  const double y0 = std::max(0.0, d_prev.y - search.step_box), y1 = std::min(1.0, d_prev.y + search.step_box);
  require(x0 <= x1 && y0 <= y1, ErrorKind::invalid_argument, "step box does not intersect the design region");
  PhysicalDesignResult out;
  out.candidates.push_back(project_design(d_prev, d_prev, search.step_box));
  const int n = search.candidates;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      Design c = d_prev;
      c.x = n == 1 ? 0.5 * (x0 + x1) : x0 + (x1 - x0) * i / (n - 1);
      c.y = n == 1 ? 0.5 * (y0 + y1) : y0 + (y1 - y0) * j / (n - 1);
      out.candidates.push_back(c);
    }
  }
  const PhysicalDraws draws = draw_physical(search.samples, rng);
  const std::vector<double> cdf = prior_cdf(prior);
  out.values.resize(out.candidates.size());
  parallel_for(out.candidates.size(), [&](std::size_t c) {
    std::vector<double> g;
    cache.predict_all(out.candidates[c], g);
    out.values[c] = eig_from_predictions(g, prior, cdf, noise_var, draws);
  });
  for (std::size_t c = 1; c < out.values.size(); ++c)
    if (out.values[c] > out.values[out.chosen]) out.chosen = c;
  out.design = out.candidates[out.chosen];
  out.eig = out.values[out.chosen];
  return out;
}

}  // namespace adeki
