#include "adeki/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "adeki/error.hpp"
#include "json.hpp"

namespace adeki {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  fail(ErrorKind::config, "config key '" + key + "': " + what);
}

template <class E>
E parse_enum(const std::string& key, const std::string& value, const std::map<std::string, E>& names) {
  auto it = names.find(value);
  if (it == names.end()) {
    std::string options;
    for (const auto& [name, _] : names) options += (options.empty() ? "" : ", ") + name;
    bad(key, "unknown value '" + value + "' (expected one of: " + options + ")");
  }
  return it->second;
}

const std::map<std::string, SourceFamily> kFamilies{{"gaussian", SourceFamily::gaussian},
                                                    {"cauchy", SourceFamily::cauchy}};
const std::map<std::string, ErrorModel> kErrors{{"strength", ErrorModel::strength}, {"network", ErrorModel::network}};
const std::map<std::string, ForwardStrategy> kStrategies{
    {"direct", ForwardStrategy::direct}, {"green", ForwardStrategy::green}, {"scaled", ForwardStrategy::scaled}};
const std::map<std::string, DataSource> kSources{{"predicted", DataSource::predicted},
                                                 {"measured", DataSource::measured}};
const std::map<std::string, CheckpointMode> kModes{{"checkpoint", CheckpointMode::checkpoint},
                                                   {"store_all", CheckpointMode::store_all}};
const std::map<std::string, NetworkUpdate> kUpdates{{"train", NetworkUpdate::train},
                                                    {"eki_mean", NetworkUpdate::eki_mean}};

template <class E>
std::string enum_name(E v, const std::map<std::string, E>& names) {
  for (const auto& [name, e] : names)
    if (e == v) return name;
  return "?";
}

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) bad(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key(const char* k) const { return path_.empty() ? k : path_ + "." + k; }

  const json* find(const char* k) {
    seen_.insert(k);
    auto it = j_.find(k);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const char* k, double& out) {
    if (const json* v = find(k)) {
      if (!v->is_number()) bad(key(k), "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) bad(key(k), "must be finite");
    }
  }
  void get(const char* k, int& out) {
    if (const json* v = find(k)) {
      if (!v->is_number_integer()) bad(key(k), "expected an integer");
      out = v->get<int>();
    }
  }
  void get(const char* k, unsigned& out) {
    if (const json* v = find(k)) {
      if (!v->is_number_unsigned()) bad(key(k), "expected a non-negative integer");
      out = v->get<unsigned>();
    }
  }
  void get(const char* k, std::uint64_t& out) {
    if (const json* v = find(k)) {
      if (!v->is_number_unsigned()) bad(key(k), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const char* k, bool& out) {
    if (const json* v = find(k)) {
      if (!v->is_boolean()) bad(key(k), "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* k, std::string& out) {
    if (const json* v = find(k)) {
      if (!v->is_string()) bad(key(k), "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* k, std::vector<double>& out) {
    if (const json* v = find(k)) {
      if (!v->is_array()) bad(key(k), "expected an array of numbers");
      out.clear();
      for (const json& e : *v) {
        if (!e.is_number()) bad(key(k), "expected an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }
  void get(const char* k, std::vector<int>& out) {
    if (const json* v = find(k)) {
      if (!v->is_array()) bad(key(k), "expected an array of integers");
      out.clear();
      for (const json& e : *v) {
        if (!e.is_number_integer()) bad(key(k), "expected an array of integers");
        out.push_back(e.get<int>());
      }
    }
  }
  template <class E>
  void get_enum(const char* k, E& out, const std::map<std::string, E>& names) {
    std::string s;
    get(k, s);
    if (!s.empty()) out = parse_enum(key(k), s, names);
  }
  void get_pair(const char* k, double& a, double& b) {
    std::vector<double> v{a, b};
    get(k, v);
    if (v.size() != 2) bad(key(k), "expected two numbers");
    a = v[0];
    b = v[1];
  }

  template <class F>
  void section(const char* k, F&& body) {
    if (const json* v = find(k)) {
      Reader sub(*v, key(k));
      body(sub);
      sub.finish();
    }
  }

  void finish() const {
    for (const auto& [k, _] : j_.items())
      if (!seen_.count(k)) bad(path_.empty() ? k : path_ + "." + k, "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void check(bool ok, const char* key, const char* what) {
  if (!ok) bad(key, what);
}

}  // namespace

std::string to_string(SourceFamily f) { return enum_name(f, kFamilies); }
std::string to_string(ErrorModel e) { return enum_name(e, kErrors); }
std::string to_string(ForwardStrategy s) { return enum_name(s, kStrategies); }
std::string to_string(DataSource s) { return enum_name(s, kSources); }
std::string to_string(CheckpointMode m) { return enum_name(m, kModes); }
std::string to_string(NetworkUpdate u) { return enum_name(u, kUpdates); }

ModelSpec ExperimentConfig::model_spec() const {
  ModelSpec s;
  s.family = model.family;
  s.theta_h = model.h;
  s.theta_s = model.s;
  s.error = model.error;
  s.input_scale = model.input_scale;
  s.quad = solver.source_quad;
  return s;
}

void ExperimentConfig::validate() const {
  check(n_stages >= 1, "n_stages", "must be >= 1");
  check(threads >= 1, "threads", "must be >= 1");
  check(grid.n >= 3, "grid.n", "must be >= 3");
  check(grid.hi > grid.lo, "grid.hi", "must exceed grid.lo");
  check(grid.lo <= 0.0 && grid.hi >= 1.0, "grid", "must contain the design region [0,1]^2");
  check(solver.cfl > 0.0, "solver.cfl", "must be positive");
  check(solver.dt >= 0.0, "solver.dt", "must be >= 0");
  check(solver.blowup > 0.0, "solver.blowup", "must be positive");
  check(solver.source_quad >= 1, "solver.source_quad", "must be >= 1");
  check(truth.h > 0.0, "truth.h", "must be positive");
  check(model.h > 0.0, "model.h", "must be positive");
  check(model.init_sd >= 0.0, "model.init_sd", "must be >= 0");
  check(truth.x >= 0.0 && truth.x <= 1.0 && truth.y >= 0.0 && truth.y <= 1.0, "truth", "location must lie in [0,1]^2");
  check(static_cast<int>(stage_times.size()) >= n_stages, "stage_times", "needs one time per stage");
  for (std::size_t k = 0; k < stage_times.size(); ++k) {
    check(stage_times[k] > 0.0, "stage_times", "must be positive");
    check(k == 0 || stage_times[k] > stage_times[k - 1], "stage_times", "must be strictly increasing");
  }
  check(noise_std > 0.0, "noise_std", "must be positive");
  check(initial_x >= 0.0 && initial_x <= 1.0 && initial_y >= 0.0 && initial_y <= 1.0, "initial_design",
        "must lie in [0,1]^2");
  check(physical.lattice_n >= 2, "physical.lattice_n", "must be >= 2");
  check(physical.step_box >= 0.0, "physical.step_box", "must be >= 0");
  check(physical.candidates >= 1, "physical.candidates", "must be >= 1");
  check(physical.eig_samples >= 1, "physical.eig_samples", "must be >= 1");
  check(physical.cache_stride >= 1 && (physical.lattice_n - 1) % physical.cache_stride == 0,
        "physical.cache_stride", "must divide lattice_n - 1");
  check(physical.prior.type == "uniform" || physical.prior.type == "gaussian", "physical.prior.type",
        "must be 'uniform' or 'gaussian'");
  check(physical.prior.sd > 0.0, "physical.prior.sd", "must be positive");
  check(physical.prior.flatten_power > 0.0, "physical.prior.flatten_power", "must be positive");
  check(network.ensemble_size >= 2, "network.ensemble_size", "must be >= 2");
  check(network.iterations >= 1, "network.iterations", "must be >= 1");
  check(network.eig_samples >= 1, "network.eig_samples", "must be >= 1");
  check(network.prior_var > 0.0, "network.prior_var", "must be positive");
  check(network.kl_tol >= 0.0, "network.kl_tol", "must be >= 0");
  check(!(network.strategy == ForwardStrategy::scaled && model.error != ErrorModel::strength), "network.strategy",
        "'scaled' requires model.error = 'strength'");
  check(network.optimizer.step > 0.0, "network.optimizer.step", "must be positive");
  check(network.optimizer.max_iters >= 0, "network.optimizer.max_iters", "must be >= 0");
  check(network.optimizer.max_halvings >= 0, "network.optimizer.max_halvings", "must be >= 0");
  check(network.train.max_epochs >= 0, "network.train.max_epochs", "must be >= 0");
  check(network.train.growth >= 1.0, "network.train.growth", "must be >= 1");
  check(network.train.step > 0.0, "network.train.step", "must be positive");
  check(gradcheck.grid_n >= 3, "gradcheck.grid_n", "must be >= 3");
  check(gradcheck.ensemble_size >= 2, "gradcheck.ensemble_size", "must be >= 2");
  check(gradcheck.iterations >= 1, "gradcheck.iterations", "must be >= 1");
  check(gradcheck.designs >= 1, "gradcheck.designs", "must be >= 1");
  check(gradcheck.fd_step > 0.0, "gradcheck.fd_step", "must be positive");
  check(gradcheck.tol > 0.0, "gradcheck.tol", "must be positive");
  check(gradcheck.lo >= 0.0 && gradcheck.hi <= 1.0 && gradcheck.lo < gradcheck.hi, "gradcheck.lo",
        "design range must satisfy 0 <= lo < hi <= 1");
  check(gradcheck.stage_time > 0.0, "gradcheck.stage_time", "must be positive");
  check(bench.grid_n >= 3, "bench.grid_n", "must be >= 3");
  check(!bench.ensemble_sizes.empty() && !bench.iterations.empty(), "bench", "sweeps must be non-empty");
  for (int j : bench.ensemble_sizes) check(j >= 2, "bench.ensemble_sizes", "entries must be >= 2");
  for (int k : bench.iterations) check(k >= 1, "bench.iterations", "entries must be >= 1");
  check(bench.fixed_ensemble >= 2, "bench.fixed_ensemble", "must be >= 2");
  check(bench.fixed_iterations >= 1, "bench.fixed_iterations", "must be >= 1");
  check(bench.repetitions >= 1, "bench.repetitions", "must be >= 1");
  check(bench.stage_time > 0.0, "bench.stage_time", "must be positive");
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Reader r(j, "");
  r.get("name", c.name);
  r.get("seed", c.seed);
  r.get("threads", c.threads);
  r.get("n_stages", c.n_stages);
  r.section("grid", [&](Reader& s) {
    s.get("n", c.grid.n);
    s.get("lo", c.grid.lo);
    s.get("hi", c.grid.hi);
  });
  r.section("solver", [&](Reader& s) {
    s.get("cfl", c.solver.cfl);
    s.get("dt", c.solver.dt);
    s.get("blowup", c.solver.blowup);
    s.get("source_quad", c.solver.source_quad);
  });
  r.get("velocity_c", c.velocity_c);
  r.section("truth", [&](Reader& s) {
    s.get_enum("family", c.truth.family, kFamilies);
    s.get("x", c.truth.x);
    s.get("y", c.truth.y);
    s.get("h", c.truth.h);
    s.get("s", c.truth.s);
  });
  r.section("model", [&](Reader& s) {
    s.get_enum("family", c.model.family, kFamilies);
    s.get("h", c.model.h);
    s.get("s", c.model.s);
    s.get_enum("error", c.model.error, kErrors);
    s.get("input_scale", c.model.input_scale);
    s.get("init_sd", c.model.init_sd);
  });
  r.get("stage_times", c.stage_times);
  r.get("noise_std", c.noise_std);
  r.get_pair("initial_design", c.initial_x, c.initial_y);
  r.get("baseline", c.baseline);
  r.section("physical", [&](Reader& s) {
    s.get("lattice_n", c.physical.lattice_n);
    s.get("step_box", c.physical.step_box);
    s.get("candidates", c.physical.candidates);
    s.get("eig_samples", c.physical.eig_samples);
    s.get("cache_stride", c.physical.cache_stride);
    s.get("recondition_history", c.physical.recondition_history);
    s.section("prior", [&](Reader& p) {
      p.get("type", c.physical.prior.type);
      p.get_pair("mean", c.physical.prior.mean_x, c.physical.prior.mean_y);
      p.get("sd", c.physical.prior.sd);
      p.get("flatten_power", c.physical.prior.flatten_power);
    });
  });
  r.section("network", [&](Reader& s) {
    NetworkConfig& n = c.network;
    s.get("ensemble_size", n.ensemble_size);
    s.get("iterations", n.iterations);
    s.get("eig_samples", n.eig_samples);
    s.get("prior_var", n.prior_var);
    s.get_enum("data_source", n.data_source, kSources);
    s.get_enum("strategy", n.strategy, kStrategies);
    s.get("truncate_theta_chain", n.truncate_theta_chain);
    s.get("kl_tol", n.kl_tol);
    s.get_enum("checkpoint", n.checkpoint, kModes);
    s.get_enum("nn_update", n.nn_update, kUpdates);
    s.section("optimizer", [&](Reader& o) {
      o.get("step", n.optimizer.step);
      o.get("max_iters", n.optimizer.max_iters);
      o.get("max_halvings", n.optimizer.max_halvings);
      o.get("tol", n.optimizer.tol);
    });
    s.section("train", [&](Reader& t) {
      t.get("max_epochs", n.train.max_epochs);
      t.get("plateau", n.train.plateau);
      t.get("step", n.train.step);
      t.get("include_physical", n.train.include_physical);
      t.get("growth", n.train.growth);
    });
  });
  r.section("gradcheck", [&](Reader& s) {
    GradcheckConfig& g = c.gradcheck;
    s.get("grid_n", g.grid_n);
    s.get("ensemble_size", g.ensemble_size);
    s.get("iterations", g.iterations);
    s.get("designs", g.designs);
    s.get("fd_step", g.fd_step);
    s.get("tol", g.tol);
    s.get("lo", g.lo);
    s.get("hi", g.hi);
    s.get("stage_time", g.stage_time);
    s.get("theta_x", g.theta_x);
    s.get("theta_y", g.theta_y);
  });
  r.section("bench", [&](Reader& s) {
    BenchConfig& b = c.bench;
    s.get("grid_n", b.grid_n);
    s.get("ensemble_sizes", b.ensemble_sizes);
    s.get("iterations", b.iterations);
    s.get("fixed_ensemble", b.fixed_ensemble);
    s.get("fixed_iterations", b.fixed_iterations);
    s.get("repetitions", b.repetitions);
    s.get("stage_time", b.stage_time);
    s.get("design_x", b.design_x);
    s.get("design_y", b.design_y);
  });
  r.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c, int indent) {
  json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["n_stages"] = c.n_stages;
  j["grid"] = {{"n", c.grid.n}, {"lo", c.grid.lo}, {"hi", c.grid.hi}};
  j["solver"] = {{"cfl", c.solver.cfl},
                 {"dt", c.solver.dt},
                 {"blowup", c.solver.blowup},
                 {"source_quad", c.solver.source_quad}};
  j["velocity_c"] = c.velocity_c;
  j["truth"] = {{"family", to_string(c.truth.family)},
                {"x", c.truth.x},
                {"y", c.truth.y},
                {"h", c.truth.h},
                {"s", c.truth.s}};
  j["model"] = {{"family", to_string(c.model.family)}, {"h", c.model.h},
                {"s", c.model.s},                      {"error", to_string(c.model.error)},
                {"input_scale", c.model.input_scale},  {"init_sd", c.model.init_sd}};
  j["stage_times"] = c.stage_times;
  j["noise_std"] = c.noise_std;
  j["initial_design"] = {c.initial_x, c.initial_y};
  j["baseline"] = c.baseline;
  j["physical"] = {{"lattice_n", c.physical.lattice_n},
                   {"step_box", c.physical.step_box},
                   {"candidates", c.physical.candidates},
                   {"eig_samples", c.physical.eig_samples},
                   {"cache_stride", c.physical.cache_stride},
                   {"recondition_history", c.physical.recondition_history},
                   {"prior",
                    {{"type", c.physical.prior.type},
                     {"mean", {c.physical.prior.mean_x, c.physical.prior.mean_y}},
                     {"sd", c.physical.prior.sd},
                     {"flatten_power", c.physical.prior.flatten_power}}}};
  const NetworkConfig& n = c.network;
  j["network"] = {{"ensemble_size", n.ensemble_size},
                  {"iterations", n.iterations},
                  {"eig_samples", n.eig_samples},
                  {"prior_var", n.prior_var},
                  {"data_source", to_string(n.data_source)},
                  {"strategy", to_string(n.strategy)},
                  {"truncate_theta_chain", n.truncate_theta_chain},
                  {"kl_tol", n.kl_tol},
                  {"checkpoint", to_string(n.checkpoint)},
                  {"nn_update", to_string(n.nn_update)},
                  {"optimizer",
                   {{"step", n.optimizer.step},
                    {"max_iters", n.optimizer.max_iters},
                    {"max_halvings", n.optimizer.max_halvings},
                    {"tol", n.optimizer.tol}}},
                  {"train",
                   {{"max_epochs", n.train.max_epochs},
                    {"plateau", n.train.plateau},
                    {"step", n.train.step},
                    {"include_physical", n.train.include_physical},
                    {"growth", n.train.growth}}}};
  const GradcheckConfig& g = c.gradcheck;
  j["gradcheck"] = {{"grid_n", g.grid_n},   {"ensemble_size", g.ensemble_size}, {"iterations", g.iterations},
                    {"designs", g.designs}, {"fd_step", g.fd_step},             {"tol", g.tol},
                    {"lo", g.lo},           {"hi", g.hi},                       {"stage_time", g.stage_time},
                    {"theta_x", g.theta_x}, {"theta_y", g.theta_y}};
  const BenchConfig& b = c.bench;
  j["bench"] = {{"grid_n", b.grid_n},
                {"ensemble_sizes", b.ensemble_sizes},
                {"iterations", b.iterations},
                {"fixed_ensemble", b.fixed_ensemble},
                {"fixed_iterations", b.fixed_iterations},
                {"repetitions", b.repetitions},
                {"stage_time", b.stage_time},
                {"design_x", b.design_x},
                {"design_y", b.design_y}};
  return j.dump(indent);
}

std::vector<std::string> preset_names() {
  return {"parametric", "parametric_coarse", "parametric_biased", "structural", "structural_coarse", "gradcheck"};
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  if (name == "parametric" || name == "parametric_coarse" || name == "parametric_biased" || name == "gradcheck") {
    c.velocity_c = 20.0;
    c.truth = {SourceFamily::gaussian, 0.45, 0.25, 0.05, 2.0};
    c.model.family = SourceFamily::gaussian;
    c.model.s = 3.0;
    c.model.error = ErrorModel::strength;
    c.network.ensemble_size = 30;
    c.network.prior_var = 1.0;
    c.network.strategy = ForwardStrategy::scaled;
    c.network.eig_samples = 8;
    if (name != "gradcheck") c.noise_std = 0.01;
    if (name != "parametric") c.grid.n = 51;
    if (name == "parametric_biased") {
      c.physical.prior.type = "gaussian";
      c.physical.prior.mean_x = 0.9;
      c.physical.prior.mean_y = 0.9;
      c.physical.prior.sd = 0.08;
      c.physical.prior.flatten_power = 0.2;
    }
    if (name == "gradcheck") {
      c.network.strategy = ForwardStrategy::direct;
      c.n_stages = 1;
    }
    return c;
  }
  if (name == "structural" || name == "structural_coarse") {
    c.velocity_c = 50.0;
    c.truth = {SourceFamily::gaussian, 0.25, 0.25, 0.05, 2.0};
    c.model.family = SourceFamily::cauchy;
    c.model.s = 2.0;
    c.model.error = ErrorModel::network;
    c.network.ensemble_size = 40;
    c.network.prior_var = 0.09;
    c.network.strategy = ForwardStrategy::green;
    c.network.eig_samples = 4;
    if (name == "structural_coarse") c.grid.n = 51;
    return c;
  }
  fail(ErrorKind::config, "unknown preset '" + name + "'");
}

}  // namespace adeki
