#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "adadelay/diagnostics.hpp"
#include "adadelay/engine.hpp"

namespace adadelay {

// round-trip-safe float formatting used in every CSV we emit
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_run_csv(const RunRecord& rec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write run csv: " + path);
  out << "t,tau,eta,alpha,f_gap\n";
  for (const auto& row : rec.rows) {
    out << row.t << ',' << row.tau << ',' << fmt_double(row.eta) << ','
        << fmt_double(row.alpha) << ',' << fmt_double(row.f_gap) << '\n';
  }
}

inline std::vector<RunRecordRow> read_run_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open run csv: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty run csv: " + path);
  std::vector<RunRecordRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    RunRecordRow row;
    std::istringstream ls(line);
    char comma;
    if (!(ls >> row.t >> comma >> row.tau >> comma >> row.eta >> comma >> row.alpha >>
          comma >> row.f_gap)) {
      throw std::runtime_error("malformed run csv row: " + line);
    }
    rows.push_back(row);
  }
  return rows;
}

inline void write_run_json(const RunRecord& rec, const nlohmann::json& extra,
                           const std::string& path) {
  nlohmann::json j;
  j["schema"] = "adadelay-run-v1";
  j["seed"] = rec.seed;
  j["config_hash"] = rec.config_hash;
  j["T"] = rec.T;
  j["L"] = rec.L;
  j["alpha0"] = rec.alpha0;
  j["f_star"] = rec.f_star;
  j["sum_gap_valid"] = rec.sum_gap_valid;
  j["sum_gap"] = rec.sum_gap;
  j["final_avg_gap"] = rec.final_avg_gap;
  j["final_gap"] = rec.final_gap;
  j["tau_sum"] = rec.tau_sum;
  j["delay_clamp_events"] = rec.delay_clamp_events;
  j["policy_clamp_events"] = rec.policy_clamp_events;
  j["averaged_iterate"] = rec.averaged_iterate;
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write run json: " + path);
  out << j.dump(2) << '\n';
}

// Trajectory rows: t 0 carries x(1); row t >= 1 carries x(t+1) and the
// gradient applied at t.
inline void write_trajectory(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trajectory: " + path);
  const std::size_t dim = traj.x.empty() ? 0 : traj.x.front().size();
  out << "t,tau,eta,alpha";
  for (std::size_t j = 0; j < dim; ++j) out << ",x" << j;
  for (std::size_t j = 0; j < dim; ++j) out << ",g" << j;
  out << '\n';
  for (std::size_t k = 0; k < traj.x.size(); ++k) {
    if (k == 0) {
      out << "0,0,0,0";
    } else {
      out << k << ',' << traj.tau[k - 1] << ',' << fmt_double(traj.eta[k - 1]) << ','
          << fmt_double(traj.alpha[k - 1]);
    }
    for (std::size_t j = 0; j < dim; ++j) out << ',' << fmt_double(traj.x[k][j]);
    for (std::size_t j = 0; j < dim; ++j) {
      out << ',' << (k == 0 ? "0" : fmt_double(traj.g[k - 1][j]));
    }
    out << '\n';
  }
}

inline Trajectory read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory: " + path);
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("empty trajectory: " + path);
  std::size_t dim = 0;
  {
    std::istringstream hs(header);
    std::string col;
    while (std::getline(hs, col, ',')) {
      if (col.size() > 1 && col[0] == 'x') ++dim;
    }
  }
  Trajectory traj;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    std::vector<double> vals;
    while (std::getline(ls, tok, ',')) vals.push_back(std::stod(tok));
    if (vals.size() != 4 + 2 * dim) throw std::runtime_error("malformed trajectory row");
    const std::uint64_t t = static_cast<std::uint64_t>(vals[0]);
    DenseVec x(vals.begin() + 4, vals.begin() + 4 + dim);
    traj.x.push_back(std::move(x));
    if (t >= 1) {
      traj.tau.push_back(static_cast<std::uint64_t>(vals[1]));
      traj.eta.push_back(vals[2]);
      traj.alpha.push_back(vals[3]);
      traj.g.emplace_back(vals.begin() + 4 + dim, vals.end());
    }
  }
  return traj;
}

inline nlohmann::json lemma_report_json(const LemmaReport& report) {
  nlohmann::json j;
  for (const auto& c : report.checks) {
    j[c.name] = {{"empirical", c.empirical},
                 {"bound", c.bound},
                 {"stderr", c.stderr_},
                 {"pass", c.pass}};
  }
  j["all_pass"] = report.all_pass();
  return j;
}

}  // namespace adadelay
