#include "adeki/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "adeki/error.hpp"
#include "json.hpp"

namespace adeki {

using nlohmann::json;

void write_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open '" + tmp + "' for writing");
    out << content;
    out.flush();
    if (!out) fail(ErrorKind::io, "failed writing '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorKind::io, "cannot move '" + tmp + "' to '" + path + "'");
  }
}

namespace {

json design_json(const Design& d) { return {{"x", d.x}, {"y", d.y}, {"t", d.t}}; }

json vec_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json metrics_json(const PosteriorMetrics& m) {
  return {{"map", {m.map.x, m.map.y}}, {"D", m.distance}, {"sigma_eq", m.sigma_eq}, {"mean", {m.mean[0], m.mean[1]}}};
}

std::string run_name(const RunResult& r) { return r.corrected ? "corrected" : "baseline"; }

std::string num(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

json error_json(const FieldError& e) { return {{"mse", e.mse}, {"re", e.re}}; }

}  // namespace

std::string stage_record_json(const StageRecord& r) {
  json j;
  j["stage"] = r.stage;
  j["time"] = r.time;
  j["seed"] = r.seed;
  j["corrected"] = r.corrected;
  j["d_g"] = design_json(r.d_g);
  j["y_g"] = r.y_g;
  j["eig_g"] = r.eig_g;
  j["posterior_before"] = metrics_json(r.before);
  j["posterior"] = metrics_json(r.after);
  j["posterior_kl"] = r.posterior_kl;
  j["network_step"] = r.network_step;
  if (r.network_step) {
    j["network_failed"] = r.network_failed;
    if (r.network_failed) j["failure"] = r.failure;
    j["d_nn_start"] = design_json(r.d_nn_start);
    j["d_nn"] = design_json(r.d_nn);
    j["y_nn"] = r.y_nn;
    j["nn_stop_reason"] = r.nn_stop_reason;
    j["nn_steps"] = r.nn_trajectory.empty() ? 0 : r.nn_trajectory.size() - 1;
    j["kl_trace_start"] = r.kl_trace_start;
    j["kl_trace_final"] = r.kl_trace_final;
    j["train_loss_before"] = r.train_loss_before;
    j["train_loss_after"] = r.train_loss_after;
    j["train_epochs"] = r.train_epochs;
  }
  j["psi_before"] = vec_json(r.psi_before);
  j["psi_after"] = vec_json(r.psi_after);
  j["wall_seconds"] = r.wall_seconds;
  j["peak_bytes"] = r.peak_bytes;
  return j.dump();
}

std::string records_jsonl(const std::vector<StageRecord>& records) {
  std::string out;
  for (const StageRecord& r : records) out += stage_record_json(r) + "\n";
  return out;
}

std::string posterior_csv(const GridPosterior& p) {
  std::ostringstream s;
  s << "theta_x,theta_y,prob\n";
  for (std::size_t k = 0; k < p.size(); ++k) s << num(p.x(k)) << ',' << num(p.y(k)) << ',' << num(p[k]) << '\n';
  return s.str();
}

std::string kl_traces_csv(const RunResult& run) {
  std::ostringstream s;
  s << "stage,design,iteration,kl\n";
  for (const StageRecord& r : run.records) {
    if (!r.network_step || r.network_failed) continue;
    for (std::size_t n = 0; n < r.kl_trace_start.size(); ++n)
      s << r.stage << ",start," << n + 1 << ',' << num(r.kl_trace_start[n]) << '\n';
    for (std::size_t n = 0; n < r.kl_trace_final.size(); ++n)
      s << r.stage << ",final," << n + 1 << ',' << num(r.kl_trace_final[n]) << '\n';
  }
  return s.str();
}

std::string design_trajectory_csv(const std::vector<const RunResult*>& runs) {
  std::ostringstream s;
  s << "run,stage,kind,step,x,y,objective\n";
  for (const RunResult* run : runs) {
    for (const StageRecord& r : run->records) {
      s << run_name(*run) << ',' << r.stage << ",physical,0," << num(r.d_g.x) << ',' << num(r.d_g.y) << ','
        << num(r.eig_g) << '\n';
      for (std::size_t k = 0; k < r.nn_trajectory.size(); ++k)
        s << run_name(*run) << ',' << r.stage << ",network," << k << ',' << num(r.nn_trajectory[k].x) << ','
          << num(r.nn_trajectory[k].y) << ',' << num(r.nn_objective[k]) << '\n';
    }
  }
  return s.str();
}

std::string theta_trajectory_csv(const std::vector<const RunResult*>& runs) {
  std::ostringstream s;
  s << "run,stage,map_x,map_y,D,sigma_eq,param,value\n";
  for (const RunResult* run : runs) {
    for (const StageRecord& r : run->records) {
      for (Eigen::Index k = 0; k < r.psi_after.size(); ++k) {
        const std::string name = r.psi_after.size() == 1 ? "theta_s" : net::param_name(static_cast<int>(k));
        s << run_name(*run) << ',' << r.stage << ',' << num(r.after.map.x) << ',' << num(r.after.map.y) << ','
          << num(r.after.distance) << ',' << num(r.after.sigma_eq) << ',' << name << ',' << num(r.psi_after[k])
          << '\n';
      }
    }
  }
  return s.str();
}

std::string field_errors_csv(const FieldErrorReport& report) {
  std::ostringstream s;
  s << "run,stage,total_mse,total_re,local_mse,local_re,next_local_mse,next_local_re\n";
  const auto rows = [&](const char* name, const std::vector<FieldErrorRow>& v) {
    for (const FieldErrorRow& r : v) {
      s << name << ',' << r.stage << ',' << num(r.total.mse) << ',' << num(r.total.re) << ',' << num(r.local.mse)
        << ',' << num(r.local.re) << ',';
      if (r.next_local)
        s << num(r.next_local->mse) << ',' << num(r.next_local->re);
      else
        s << ',';
      s << '\n';
    }
  };
  rows("corrected", report.corrected);
  rows("baseline", report.baseline);
  return s.str();
}

std::string manifest_json(const ExperimentConfig& cfg, const std::vector<std::string>& files) {
  json j;
  j["config"] = json::parse(config_to_json(cfg));
  j["grid_spacing"] = cfg.grid2d().hx();
  j["noise_std"] = cfg.noise_std;
  j["ensemble_size"] = cfg.network.ensemble_size;
  j["eki_iterations"] = cfg.network.iterations;
  j["network_eig_samples"] = cfg.network.eig_samples;
  j["physical_eig_samples"] = cfg.physical.eig_samples;
  j["files"] = files;
  return j.dump(2);
}

std::string metrics_summary_json(const ExperimentConfig& cfg, const RunResult& corrected,
                                 const std::optional<RunResult>& baseline,
                                 const std::optional<FieldErrorReport>& errors) {
  json j;
  j["name"] = cfg.name;
  j["seed"] = cfg.seed;
  j["noise_std"] = cfg.noise_std;
  j["grid_n"] = cfg.grid.n;
  const auto summary = [](const RunResult& r) {
    json s;
    const StageRecord& last = r.records.back();
    s["final_D"] = last.after.distance;
    s["final_sigma_eq"] = last.after.sigma_eq;
    s["final_map"] = {last.after.map.x, last.after.map.y};
    if (last.psi_after.size() == 1) s["final_theta_s"] = last.psi_after[0];
    std::vector<double> d;
    for (const StageRecord& rec : r.records) d.push_back(rec.after.distance);
    s["D_per_stage"] = d;
    return s;
  };
  j["corrected"] = summary(corrected);
  if (baseline) j["baseline"] = summary(*baseline);
  if (errors) {
    json rows = json::array();
    for (std::size_t i = 0; i < errors->corrected.size() && i < errors->baseline.size(); ++i) {
      json r;
      r["stage"] = errors->corrected[i].stage;
      r["corrected"] = {{"total", error_json(errors->corrected[i].total)},
                        {"local", error_json(errors->corrected[i].local)}};
      r["baseline"] = {{"total", error_json(errors->baseline[i].total)},
                       {"local", error_json(errors->baseline[i].local)}};
      if (errors->corrected[i].next_local && errors->baseline[i].next_local) {
        r["corrected"]["next_local"] = error_json(*errors->corrected[i].next_local);
        r["baseline"]["next_local"] = error_json(*errors->baseline[i].next_local);
      }
      rows.push_back(r);
    }
    j["field_errors"] = rows;
  }
  return j.dump(2);
}

}  // namespace adeki
