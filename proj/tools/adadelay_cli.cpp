// Experiment runner for the delay-sensitive asynchronous SGD library.
//
// Subcommands:
//   run <config>                 sampled-delay experiment grid
//   simulate <config>            parameter-server simulation grid
//   diagnose <run-dir>           residuals + lemma-bound report from stored runs
//   ratefit <gaps.csv> [column]  log-log slope of mean gap vs T per policy
//   trace-export <run.csv> <out> extract the tau column as a delay trace
//   auc <scores> <labels>        rank-based AUC of two one-value-per-line files

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adadelay/diagnostics.hpp"
#include "adadelay/experiment.hpp"
#include "adadelay/io.hpp"
#include "adadelay/metrics.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

void usage(std::ostream& out) {
  out << "usage: adadelay <command> ...\n"
      << "  run <config>                  run a sampled-delay experiment\n"
      << "  simulate <config>             run a parameter-server simulation\n"
      << "  diagnose <run-dir>            residual + lemma report for stored runs\n"
      << "  ratefit <gaps.csv> [column]   fit log-log convergence slope\n"
      << "  trace-export <run.csv> <out>  export the run's delays as a trace file\n"
      << "  auc <scores> <labels>         AUC from score/label files\n"
      << "Set ADADELAY_OUTPUT_ROOT to re-root relative output directories.\n";
}

void apply_output_root(adadelay::ExperimentConfig& cfg) {
  const char* root = std::getenv("ADADELAY_OUTPUT_ROOT");
  if (root && *root && !std::filesystem::path(cfg.out_dir).is_absolute()) {
    cfg.out_dir = std::string(root) + "/" + cfg.out_dir;
  }
}

int cmd_run(const std::string& config_path, bool force_simulator) {
  adadelay::ExperimentConfig cfg;
  try {
    cfg = adadelay::ExperimentConfig::parse_file(config_path);
    if (force_simulator && cfg.mode != "simulator") {
      cfg.kv["mode"] = "simulator";
      cfg.validate();
    }
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  apply_output_root(cfg);
  try {
    const adadelay::ExperimentSummary summary = adadelay::run_experiment(cfg);
    std::cout << "runs: " << summary.runs.size() << "  out: " << summary.out_dir << '\n';
    for (const auto& row : summary.best) {
      std::cout << "best " << row.policy << " T=" << row.T << " alpha0="
                << adadelay::fmt_double(row.alpha0) << " mean_gap="
                << adadelay::fmt_double(row.mean_gap);
      if (row.has_auc) std::cout << " mean_auc=" << adadelay::fmt_double(row.mean_auc);
      std::cout << '\n';
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_diagnose(const std::string& run_dir) {
  namespace fs = std::filesystem;
  adadelay::ExperimentConfig cfg;
  try {
    cfg = adadelay::ExperimentConfig::parse_file(run_dir + "/config.txt");
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  if (cfg.problem != adadelay::ObjectiveKind::quadratic_synthetic || cfg.mode != "sampled") {
    std::cerr << "config error: diagnostics need a sampled-delay synthetic run\n";
    return kExitConfig;
  }
  try {
    const adadelay::SyntheticProblem prob = adadelay::make_synthetic(
        cfg.dim, cfg.sigma, cfg.radius, cfg.master_seed, cfg.offset_frac);

    // group trajectories by T; only the scalar policy at alpha0 = 1 carries
    // the analysis residuals
    std::map<std::uint64_t, std::vector<std::vector<adadelay::ResidualRow>>> by_T;
    std::size_t n_traj = 0;
    for (const auto& entry : fs::directory_iterator(run_dir + "/runs")) {
      const std::string name = entry.path().filename().string();
      if (name.size() < 9 || name.substr(name.size() - 9) != ".traj.csv") continue;
      const std::string stem = entry.path().string();
      const std::string json_path = stem.substr(0, stem.size() - 9) + ".json";
      if (!fs::exists(json_path)) continue;
      nlohmann::json meta;
      std::ifstream(json_path) >> meta;
      if (meta["policy"] != "adadelay" || meta["alpha0"].get<double>() != 1.0) continue;
      const adadelay::Trajectory traj = adadelay::read_trajectory(stem);
      auto rows = adadelay::compute_residuals(traj, prob.objective, prob.x_star,
                                              prob.f_star, cfg.L, 1.0);
      {
        std::ofstream out(stem.substr(0, stem.size() - 9) + ".residuals.csv");
        out << "t,tau,delta,gamma,sigma_term,cross,z,r,f_gap\n";
        for (const auto& r : rows) {
          out << r.t << ',' << r.tau << ',' << adadelay::fmt_double(r.delta) << ','
              << adadelay::fmt_double(r.gamma) << ',' << adadelay::fmt_double(r.sigma_term)
              << ',' << adadelay::fmt_double(r.cross) << ',' << adadelay::fmt_double(r.z)
              << ',' << adadelay::fmt_double(r.r) << ',' << adadelay::fmt_double(r.f_gap)
              << '\n';
        }
      }
      by_T[meta["T"].get<std::uint64_t>()].push_back(std::move(rows));
      ++n_traj;
    }
    if (n_traj == 0) {
      std::cerr << "error: no scalar-policy trajectories found (run with diagnostics = 1)\n";
      return kExitRuntime;
    }
    nlohmann::json report;
    for (const auto& [T, runs] : by_T) {
      adadelay::DelayProcess model(cfg.delay);
      const adadelay::LemmaReport rep = adadelay::check_lemma_bounds(
          runs, prob.constants, model, cfg.c, cfg.beta, T);
      report["T" + std::to_string(T)] = adadelay::lemma_report_json(rep);
      for (const auto& check : rep.checks) {
        std::cout << (check.pass ? "PASS " : "FAIL ") << check.name << " T=" << T
                  << " empirical=" << adadelay::fmt_double(check.empirical)
                  << " bound=" << adadelay::fmt_double(check.bound)
                  << " stderr=" << adadelay::fmt_double(check.stderr_) << '\n';
      }
    }
    std::ofstream out(run_dir + "/diagnostics_report.json");
    out << report.dump(2) << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_ratefit(const std::string& gaps_csv, const std::string& column) {
  try {
    std::ifstream in(gaps_csv);
    if (!in) throw std::runtime_error("cannot open " + gaps_csv);
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("empty csv");
    std::vector<std::string> cols;
    {
      std::istringstream hs(header);
      std::string tok;
      while (std::getline(hs, tok, ',')) cols.push_back(tok);
    }
    int t_idx = -1, gap_idx = -1, policy_idx = -1;
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (cols[i] == "T") t_idx = static_cast<int>(i);
      if (cols[i] == column) gap_idx = static_cast<int>(i);
      if (cols[i] == "policy") policy_idx = static_cast<int>(i);
    }
    if (t_idx < 0 || gap_idx < 0) {
      throw std::runtime_error("csv must have columns 'T' and '" + column + "'");
    }
    std::map<std::string, std::vector<adadelay::GapPoint>> by_policy;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> vals;
      std::istringstream ls(line);
      std::string tok;
      while (std::getline(ls, tok, ',')) vals.push_back(tok);
      if (vals.size() < cols.size()) vals.resize(cols.size());
      if (vals[gap_idx].empty()) continue;
      const std::string policy = policy_idx >= 0 ? vals[policy_idx] : "all";
      by_policy[policy].push_back(
          {std::stod(vals[t_idx]), std::stod(vals[gap_idx])});
    }
    if (by_policy.empty()) throw std::runtime_error("no usable rows");
    for (const auto& [policy, points] : by_policy) {
      const adadelay::RateFit fit = adadelay::fit_rate(points);
      std::cout << policy << " slope=" << adadelay::fmt_double(fit.slope) << " ci95=["
                << adadelay::fmt_double(fit.ci_lo) << ',' << adadelay::fmt_double(fit.ci_hi)
                << "] points=" << points.size() << '\n';
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_trace_export(const std::string& run_csv, const std::string& out_path) {
  try {
    const auto rows = adadelay::read_run_csv(run_csv);
    std::vector<std::uint64_t> taus;
    taus.reserve(rows.size());
    for (const auto& r : rows) taus.push_back(r.tau);
    adadelay::export_trace(taus, out_path);
    std::cout << "wrote " << taus.size() << " delays to " << out_path << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

std::vector<double> read_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<double> out;
  double v;
  while (in >> v) out.push_back(v);
  return out;
}

int cmd_auc(const std::string& scores_path, const std::string& labels_path) {
  try {
    const auto scores = read_values(scores_path);
    const auto labels = read_values(labels_path);
    std::cout << adadelay::fmt_double(adadelay::compute_auc(scores, labels)) << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty() || args[0] == "--help" || args[0] == "-h") {
    usage(args.empty() ? std::cerr : std::cout);
    return args.empty() ? kExitConfig : kExitOk;
  }
  const std::string& cmd = args[0];
  if (cmd == "run" && args.size() == 2) return cmd_run(args[1], false);
  if (cmd == "simulate" && args.size() == 2) return cmd_run(args[1], true);
  if (cmd == "diagnose" && args.size() == 2) return cmd_diagnose(args[1]);
  if (cmd == "ratefit" && (args.size() == 2 || args.size() == 3)) {
    return cmd_ratefit(args[1], args.size() == 3 ? args[2] : "online_gap");
  }
  if (cmd == "trace-export" && args.size() == 3) return cmd_trace_export(args[1], args[2]);
  if (cmd == "auc" && args.size() == 3) return cmd_auc(args[1], args[2]);
  usage(std::cerr);
  return kExitConfig;
}
