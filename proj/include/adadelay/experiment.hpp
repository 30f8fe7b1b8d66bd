#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "adadelay/dataset.hpp"
#include "adadelay/delay.hpp"
#include "adadelay/diagnostics.hpp"
#include "adadelay/engine.hpp"
#include "adadelay/io.hpp"
#include "adadelay/metrics.hpp"
#include "adadelay/problems.hpp"
#include "adadelay/simulator.hpp"

namespace adadelay {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "problem",     "dim",
      "sigma",       "radius",
      "offset_frac", "dataset",
      "test_dataset", "index_base",
      "l2_reg",      "projection",
      "policies",    "c",
      "beta",        "c_min",
      "c_max",       "alpha0",
      "L",           "mode",
      "delay",       "tau_bar",
      "theta",       "delay_cap",
      "gauss_mean",  "gauss_std",
      "trace_file",  "T",
      "seeds",       "master_seed",
      "minibatch",   "workers",
      "straggler_fraction", "straggler_factors",
      "service_time", "service_mean",
      "read_mean",   "lognormal_sd",
      "gap_every",   "record_rows",
      "diagnostics", "out_dir",
      "parallelism", "select_by",
  };
  return keys;
}

}  // namespace detail

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat `key = value` experiment configuration. Unknown and duplicate keys are
// rejected; the canonical serialization (sorted keys) round-trips and is the
// input of the config hash.
struct ExperimentConfig {
  std::map<std::string, std::string> kv;

  // typed fields, filled by validate()
  ObjectiveKind problem = ObjectiveKind::quadratic_synthetic;
  std::uint64_t dim = 10;
  double sigma = 1.0;
  double radius = 1.0;
  double offset_frac = 0.0;
  std::string dataset_path;
  std::string test_dataset_path;
  int index_base = 0;
  double l2_reg = 0.0;
  ProjectionKind projection = ProjectionKind::l2_ball;
  std::vector<PolicyKind> policies{PolicyKind::adadelay_scalar};
  double c = 1.0;
  double beta = 0.5;
  double c_min = 0.0;
  double c_max = std::numeric_limits<double>::infinity();
  std::vector<double> alpha0_list{1.0};
  double L = 1.0;
  std::string mode = "sampled";  // sampled | simulator
  DelayModelSpec delay;
  std::vector<std::uint64_t> T_list{1000};
  std::uint64_t seeds = 1;
  std::uint64_t master_seed = 1;
  std::size_t minibatch = 1;
  std::uint32_t workers = 4;
  double straggler_fraction = 0.0;
  std::vector<double> straggler_factors{1.0, 4.0};
  ServiceKind service_kind = ServiceKind::exponential;
  double service_mean = 1.0;
  double read_mean = 1.0;
  double lognormal_sd = 0.5;
  int gap_every = 1;
  bool record_rows = true;
  bool diagnostics = false;
  std::string out_dir = "out";
  int parallelism = 1;
  std::string select_by = "gap";  // gap | auc

  static ExperimentConfig parse_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::uint64_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string t = detail::trim(line);
      if (t.empty() || t[0] == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
      }
      const std::string key = detail::trim(t.substr(0, eq));
      const std::string value = detail::trim(t.substr(eq + 1));
      if (!detail::known_keys().count(key)) {
        throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
      }
      if (cfg.kv.count(key)) {
        throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
      }
      cfg.kv[key] = value;
    }
    cfg.validate();
    return cfg;
  }

  static ExperimentConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str());
  }

  std::string canonical_text() const {
    std::ostringstream out;
    for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
    return out.str();
  }

  std::string hash() const {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical_text())));
    return buf;
  }

  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config: " + path);
    out << canonical_text();
  }

  void validate() {
    try {
      typed_parse();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string("invalid config: ") + e.what());
    }
  }

 private:
  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
  }
  double get_d(const std::string& key, double fallback) const {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : std::stod(it->second);
  }
  std::uint64_t get_u(const std::string& key, std::uint64_t fallback) const {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : std::stoull(it->second);
  }

  void typed_parse() {
    const std::string prob = get("problem", "quadratic");
    if (prob == "quadratic") {
      problem = ObjectiveKind::quadratic_synthetic;
    } else if (prob == "logistic") {
      problem = ObjectiveKind::logistic;
    } else if (prob == "least_squares") {
      problem = ObjectiveKind::least_squares;
    } else {
      throw ConfigError("invalid config: unknown problem '" + prob + "'");
    }
    dim = get_u("dim", 10);
    sigma = get_d("sigma", 1.0);
    radius = get_d("radius", 1.0);
    offset_frac = get_d("offset_frac", 0.0);
    dataset_path = get("dataset", "");
    test_dataset_path = get("test_dataset", "");
    index_base = static_cast<int>(get_u("index_base", 0));
    l2_reg = get_d("l2_reg", 0.0);
    if (problem != ObjectiveKind::quadratic_synthetic) {
      if (dataset_path.empty()) throw ConfigError("invalid config: dataset required");
      if (!std::filesystem::exists(dataset_path)) {
        throw ConfigError("invalid config: dataset not found: " + dataset_path);
      }
      if (!test_dataset_path.empty() && !std::filesystem::exists(test_dataset_path)) {
        throw ConfigError("invalid config: test_dataset not found: " + test_dataset_path);
      }
    }

    const std::string proj = get("projection",
                                 problem == ObjectiveKind::quadratic_synthetic ? "ball" : "none");
    if (proj == "ball") {
      projection = ProjectionKind::l2_ball;
    } else if (proj == "none") {
      projection = ProjectionKind::unconstrained;
    } else {
      throw ConfigError("invalid config: unknown projection '" + proj + "'");
    }

    policies.clear();
    for (const auto& name : detail::split_list(get("policies", "adadelay"))) {
      if (name == "adadelay") {
        policies.push_back(PolicyKind::adadelay_scalar);
      } else if (name == "adadelay_coord") {
        policies.push_back(PolicyKind::adadelay_coord);
      } else if (name == "async_adagrad") {
        policies.push_back(PolicyKind::async_adagrad);
      } else if (name == "adaptive_revision") {
        policies.push_back(PolicyKind::adaptive_revision);
      } else {
        throw ConfigError("invalid config: unknown policy '" + name + "'");
      }
    }
    if (policies.empty()) throw ConfigError("invalid config: empty policy list");

    c = get_d("c", 1.0);
    beta = get_d("beta", 0.5);
    c_min = get_d("c_min", 0.0);
    c_max = get_d("c_max", std::numeric_limits<double>::infinity());
    L = get_d("L", 1.0);

    alpha0_list.clear();
    const std::string a0 = get("alpha0", "1");
    if (a0 == "grid") {
      // the standard grid over [1e-4, 1], log-spaced decades
      for (int e = -4; e <= 0; ++e) alpha0_list.push_back(std::pow(10.0, e));
    } else {
      for (const auto& tok : detail::split_list(a0)) alpha0_list.push_back(std::stod(tok));
    }
    if (alpha0_list.empty()) throw ConfigError("invalid config: empty alpha0 list");
    for (double a : alpha0_list) {
      if (!(a > 0)) throw ConfigError("invalid config: alpha0 must be positive");
    }

    mode = get("mode", "sampled");
    if (mode != "sampled" && mode != "simulator") {
      throw ConfigError("invalid config: mode must be sampled or simulator");
    }

    const std::string dk = get("delay", "uniform");
    if (dk == "uniform") {
      delay.kind = DelayKind::uniform;
    } else if (dk == "scaled") {
      delay.kind = DelayKind::scaled;
    } else if (dk == "gaussian") {
      delay.kind = DelayKind::truncated_gaussian;
    } else if (dk == "trace") {
      delay.kind = DelayKind::trace;
    } else {
      throw ConfigError("invalid config: unknown delay model '" + dk + "'");
    }
    delay.tau_bar = get_d("tau_bar", 0.0);
    delay.theta = get_d("theta", 0.5);
    delay.cap = get_u("delay_cap", 64);
    delay.gauss_mean = get_d("gauss_mean", 0.0);
    delay.gauss_std = get_d("gauss_std", 1.0);
    if (delay.kind == DelayKind::trace) {
      const std::string tf = get("trace_file", "");
      if (tf.empty()) throw ConfigError("invalid config: trace_file required");
      if (!std::filesystem::exists(tf)) {
        throw ConfigError("invalid config: trace_file not found: " + tf);
      }
      delay.trace = read_trace(tf);
    }
    delay.validate();

    T_list.clear();
    std::set<std::uint64_t> seen_T;
    for (const auto& tok : detail::split_list(get("T", "1000"))) {
      const std::uint64_t T = std::stoull(tok);
      if (T == 0) throw ConfigError("invalid config: T values must be positive");
      if (!seen_T.insert(T).second) throw ConfigError("invalid config: duplicate T value");
      T_list.push_back(T);
    }
    if (T_list.empty()) throw ConfigError("invalid config: empty T list");

    seeds = get_u("seeds", 1);
    if (seeds == 0) throw ConfigError("invalid config: seeds must be >= 1");
    master_seed = get_u("master_seed", 1);
    minibatch = get_u("minibatch", 1);
    if (minibatch == 0) throw ConfigError("invalid config: minibatch must be >= 1");

    workers = static_cast<std::uint32_t>(get_u("workers", 4));
    if (mode == "simulator" && workers == 0) {
      throw ConfigError("invalid config: workers must be >= 1");
    }
    straggler_fraction = get_d("straggler_fraction", 0.0);
    if (straggler_fraction < 0 || straggler_fraction > 1) {
      throw ConfigError("invalid config: straggler_fraction must be in [0,1]");
    }
    straggler_factors.clear();
    for (const auto& tok : detail::split_list(get("straggler_factors", "1,4"))) {
      straggler_factors.push_back(std::stod(tok));
    }
    const std::string sk = get("service_time", "exponential");
    if (sk == "exponential") {
      service_kind = ServiceKind::exponential;
    } else if (sk == "deterministic") {
      service_kind = ServiceKind::deterministic;
    } else if (sk == "lognormal") {
      service_kind = ServiceKind::lognormal;
    } else {
      throw ConfigError("invalid config: unknown service_time '" + sk + "'");
    }
    service_mean = get_d("service_mean", 1.0);
    read_mean = get_d("read_mean", service_mean);
    lognormal_sd = get_d("lognormal_sd", 0.5);

    gap_every = static_cast<int>(get_u("gap_every", problem == ObjectiveKind::quadratic_synthetic ? 1 : 0));
    record_rows = get_u("record_rows", 1) != 0;
    diagnostics = get_u("diagnostics", 0) != 0;
    out_dir = get("out_dir", "out");
    parallelism = static_cast<int>(get_u("parallelism", 1));
    if (parallelism < 1) throw ConfigError("invalid config: parallelism must be >= 1");
    select_by = get("select_by", "gap");
    if (select_by != "gap" && select_by != "auc") {
      throw ConfigError("invalid config: select_by must be gap or auc");
    }
  }
};

// Per-run seeds are a pure function of (master seed, policy, alpha0, T, seed
// index); adding seeds or grid points never perturbs existing runs.
inline std::uint64_t run_seed(std::uint64_t master_seed, const std::string& policy_name,
                              double alpha0, std::uint64_t T, std::uint64_t seed_index) {
  const std::string key =
      policy_name + "|" + fmt_double(alpha0) + "|" + std::to_string(T);
  return splitmix64(splitmix64(master_seed ^ fnv1a64(key)) + seed_index);
}

struct RunResult {
  std::string policy;
  double alpha0 = 0.0;
  std::uint64_t T = 0;
  std::uint64_t seed_index = 0;
  std::uint64_t seed = 0;
  double final_avg_gap = 0.0;
  double online_gap = 0.0;  // sum_gap / T when per-step gaps were recorded
  double final_gap = 0.0;
  bool online_gap_valid = false;
  double auc = 0.0;
  bool has_auc = false;
};

struct AggRow {
  std::string policy;
  double alpha0 = 0.0;
  std::uint64_t T = 0;
  std::size_t n_seeds = 0;
  double mean_gap = 0.0;
  double stderr_gap = 0.0;
  double mean_auc = 0.0;
  double stderr_auc = 0.0;
  bool has_auc = false;
};

struct ExperimentSummary {
  std::vector<RunResult> runs;
  std::vector<AggRow> aggregated;
  std::vector<AggRow> best;  // best alpha0 per (policy, T)
  std::string out_dir;
  double f_star = 0.0;
  bool f_star_converged = true;
  DelayStats sim_stats;
  bool has_sim_stats = false;
};

namespace detail {

inline void parallel_runs(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int k = std::min<int>(threads, static_cast<int>(n));
  pool.reserve(k);
  for (int i = 0; i < k; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

struct ProblemBundle {
  Objective objective;
  Projection projection;
  DenseVec x1;
  double f_star = 0.0;
  bool f_star_converged = true;
  ProblemConstants constants;
  std::shared_ptr<const Dataset> test_data;
};

inline ProblemBundle build_problem(const ExperimentConfig& cfg) {
  ProblemBundle b;
  if (cfg.problem == ObjectiveKind::quadratic_synthetic) {
    SyntheticProblem p =
        make_synthetic(cfg.dim, cfg.sigma, cfg.radius, cfg.master_seed, cfg.offset_frac);
    b.objective = p.objective;
    b.projection = cfg.projection == ProjectionKind::l2_ball
                       ? p.projection
                       : Projection::unconstrained();
    b.constants = p.constants;
    b.f_star = p.f_star;
    b.x1 = DenseVec(cfg.dim, 0.0);
    b.x1[0] = cfg.radius;  // deterministic start on the ball boundary
    return b;
  }
  auto data = std::make_shared<Dataset>(read_libsvm(cfg.dataset_path, cfg.index_base));
  if (data->rows.empty()) throw ConfigError("invalid config: dataset is empty");
  b.objective = cfg.problem == ObjectiveKind::logistic
                    ? Objective::logistic(data, cfg.l2_reg)
                    : Objective::least_squares(data, cfg.l2_reg);
  b.projection = cfg.projection == ProjectionKind::l2_ball
                     ? Projection::l2_ball(DenseVec(b.objective.dim(), 0.0), cfg.radius)
                     : Projection::unconstrained();
  b.x1 = DenseVec(b.objective.dim(), 0.0);
  if (!cfg.test_dataset_path.empty()) {
    auto test = std::make_shared<Dataset>(read_libsvm(cfg.test_dataset_path, cfg.index_base));
    // test rows must fit the training feature space
    for (auto& row : test->rows) {
      while (!row.features.empty() && row.features.back().index >= b.objective.dim()) {
        row.features.pop_back();
      }
    }
    b.test_data = test;
  }
  b.constants = ProblemConstants{cfg.L, 1.0, 1.0, 1.0};
  return b;
}

// f* estimates are cached per (dataset, objective, l2_reg) in the output dir.
inline void load_fstar(const ExperimentConfig& cfg, ProblemBundle& b) {
  if (cfg.problem == ObjectiveKind::quadratic_synthetic) return;
  const std::string key = cfg.dataset_path + "|" + objective_kind_name(cfg.problem) + "|" +
                          fmt_double(cfg.l2_reg);
  const std::string cache_path = cfg.out_dir + "/fstar_cache.json";
  nlohmann::json cache;
  if (std::filesystem::exists(cache_path)) {
    std::ifstream in(cache_path);
    try {
      in >> cache;
    } catch (...) {
      cache = nlohmann::json::object();
    }
  }
  if (cache.contains(key)) {
    b.f_star = cache[key]["value"].get<double>();
    b.f_star_converged = cache[key]["converged"].get<bool>();
    return;
  }
  const FstarEstimate est = estimate_fstar(b.objective, b.projection, 4000, 1e-10);
  b.f_star = est.value;
  b.f_star_converged = est.converged;
  cache[key] = {{"value", est.value}, {"converged", est.converged}};
  std::ofstream out(cache_path);
  out << cache.dump(2) << '\n';
}

inline double score_auc(const Objective&, const Dataset& test, const DenseVec& w) {
  std::vector<double> scores, labels;
  scores.reserve(test.rows.size());
  labels.reserve(test.rows.size());
  for (const auto& row : test.rows) {
    double z = 0.0;
    for (const auto& e : row.features) z += e.value * w[e.index];
    scores.push_back(z);
    labels.push_back(row.label);
  }
  return compute_auc(scores, labels);
}

}  // namespace detail

// Emits one CSV per figure analog from the aggregated summary. Deterministic:
// regenerating from the same summary gives byte-identical files.
inline void emit_plots_data(const ExperimentSummary& summary, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir + "/gap_vs_T.csv");
    out << "# best-alpha0 mean gap of the averaged iterate per policy and T\n";
    out << "policy,T,alpha0,mean_gap,stderr\n";
    for (const auto& row : summary.best) {
      out << row.policy << ',' << row.T << ',' << fmt_double(row.alpha0) << ','
          << fmt_double(row.mean_gap) << ',' << fmt_double(row.stderr_gap) << '\n';
    }
  }
  {
    std::ofstream out(dir + "/auc_vs_T.csv");
    out << "# best-alpha0 mean validation AUC per policy and T\n";
    out << "policy,T,alpha0,mean_auc,stderr\n";
    for (const auto& row : summary.best) {
      if (!row.has_auc) continue;
      out << row.policy << ',' << row.T << ',' << fmt_double(row.alpha0) << ','
          << fmt_double(row.mean_auc) << ',' << fmt_double(row.stderr_auc) << '\n';
    }
  }
  if (summary.has_sim_stats) {
    std::ofstream out(dir + "/delay_hist.csv");
    out << "# pooled delay histogram over seeds at the largest T\n";
    out << "tau,count\n";
    for (const auto& [tau, count] : summary.sim_stats.histogram) {
      out << tau << ',' << count << '\n';
    }
  }
}

// Runs the full (policy x alpha0 x T x seed) grid, writes per-run records and
// the aggregated/best summaries, and returns the summary.
inline ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  std::filesystem::create_directories(cfg.out_dir + "/runs");
  cfg.write(cfg.out_dir + "/config.txt");

  detail::ProblemBundle bundle = detail::build_problem(cfg);
  detail::load_fstar(cfg, bundle);

  struct Job {
    PolicyKind policy;
    double alpha0;
    std::uint64_t T;
    std::uint64_t seed_index;
    std::size_t alpha_index;
  };
  std::vector<Job> jobs;
  for (PolicyKind pk : cfg.policies) {
    std::size_t ai = 0;
    for (double a0 : cfg.alpha0_list) {
      for (std::uint64_t T : cfg.T_list) {
        for (std::uint64_t s = 0; s < cfg.seeds; ++s) {
          jobs.push_back({pk, a0, T, s, ai});
        }
      }
      ++ai;
    }
  }

  const std::uint64_t largest_T = *std::max_element(cfg.T_list.begin(), cfg.T_list.end());
  ExperimentSummary summary;
  summary.out_dir = cfg.out_dir;
  summary.f_star = bundle.f_star;
  summary.f_star_converged = bundle.f_star_converged;
  summary.runs.resize(jobs.size());

  std::vector<std::uint64_t> pooled_taus;
  std::mutex pooled_mu;

  const std::string config_hash = cfg.hash();
  detail::parallel_runs(jobs.size(), cfg.parallelism, [&](std::size_t i) {
    const Job& job = jobs[i];
    const std::string policy_name = policy_kind_name(job.policy);
    const std::uint64_t seed = run_seed(cfg.master_seed, policy_name, job.alpha0, job.T,
                                        job.seed_index);
    StepPolicyConfig pol;
    pol.kind = job.policy;
    pol.c = cfg.c;
    pol.beta = cfg.beta;
    pol.c_min = cfg.c_min;
    pol.c_max = cfg.c_max;

    RunRecord rec;
    Trajectory traj;
    const bool want_traj = cfg.diagnostics && cfg.mode == "sampled";
    std::vector<std::uint64_t> taus;
    if (cfg.mode == "sampled") {
      EngineConfig ec;
      ec.objective = bundle.objective;
      ec.projection = bundle.projection;
      ec.policy = pol;
      ec.delay = cfg.delay;
      ec.L = cfg.L;
      ec.alpha0 = job.alpha0;
      ec.T = job.T;
      ec.seed = seed;
      ec.minibatch = cfg.minibatch;
      ec.x1 = bundle.x1;
      ec.f_star = bundle.f_star;
      ec.gap_every = cfg.gap_every;
      ec.record_rows = cfg.record_rows;
      rec = run(ec, want_traj ? &traj : nullptr);
    } else {
      SimConfig sc;
      sc.workers = make_workers(cfg.workers, ServiceTime{cfg.service_kind, cfg.service_mean, cfg.lognormal_sd},
                                ServiceTime{cfg.service_kind, cfg.read_mean, cfg.lognormal_sd},
                                cfg.minibatch);
      if (cfg.straggler_fraction > 0) {
        sc.workers = inject_stragglers(sc.workers, cfg.straggler_fraction,
                                       cfg.straggler_factors, seed);
      }
      sc.objective = bundle.objective;
      sc.projection = bundle.projection;
      sc.policy = pol;
      sc.L = cfg.L;
      sc.alpha0 = job.alpha0;
      sc.T = job.T;
      sc.seed = seed;
      sc.x1 = bundle.x1;
      sc.f_star = bundle.f_star;
      sc.gap_every = cfg.gap_every;
      sc.record_rows = cfg.record_rows;
      SimResult sim = simulate(sc);
      rec = std::move(sim.record);
      taus = std::move(sim.taus);
      if (job.policy == cfg.policies.front() && job.alpha0 == cfg.alpha0_list.front() &&
          job.T == largest_T) {
        std::lock_guard<std::mutex> lock(pooled_mu);
        pooled_taus.insert(pooled_taus.end(), taus.begin(), taus.end());
      }
    }
    rec.seed = seed;
    rec.config_hash = config_hash;

    RunResult& rr = summary.runs[i];
    rr.policy = policy_name;
    rr.alpha0 = job.alpha0;
    rr.T = job.T;
    rr.seed_index = job.seed_index;
    rr.seed = seed;
    rr.final_avg_gap = rec.final_avg_gap;
    rr.final_gap = rec.final_gap;
    rr.online_gap_valid = rec.sum_gap_valid;
    rr.online_gap = rec.sum_gap_valid ? rec.sum_gap / static_cast<double>(job.T) : 0.0;
    if (bundle.test_data && !rec.averaged_iterate.empty()) {
      rr.auc = detail::score_auc(bundle.objective, *bundle.test_data, rec.averaged_iterate);
      rr.has_auc = true;
    }

    std::ostringstream name;
    name << cfg.out_dir << "/runs/" << policy_name << "__a" << job.alpha_index << "__T"
         << job.T << "__s" << job.seed_index;
    if (cfg.record_rows) write_run_csv(rec, name.str() + ".csv");
    nlohmann::json extra;
    extra["policy"] = policy_name;
    extra["alpha0"] = job.alpha0;
    extra["seed_index"] = job.seed_index;
    extra["mode"] = cfg.mode;
    if (rr.has_auc) extra["auc"] = rr.auc;
    write_run_json(rec, extra, name.str() + ".json");
    if (want_traj) write_trajectory(traj, name.str() + ".traj.csv");
    if (cfg.mode == "simulator" && cfg.record_rows) {
      export_trace(taus, name.str() + ".trace");
    }
  });

  // aggregate per (policy, alpha0, T), in job enumeration order
  std::map<std::tuple<std::string, double, std::uint64_t>, std::vector<const RunResult*>> groups;
  for (const auto& rr : summary.runs) {
    groups[{rr.policy, rr.alpha0, rr.T}].push_back(&rr);
  }
  for (const auto& [key, rs] : groups) {
    AggRow row;
    row.policy = std::get<0>(key);
    row.alpha0 = std::get<1>(key);
    row.T = std::get<2>(key);
    row.n_seeds = rs.size();
    std::vector<double> gaps, aucs;
    for (const auto* r : rs) {
      gaps.push_back(r->final_avg_gap);
      if (r->has_auc) aucs.push_back(r->auc);
    }
    row.mean_gap = mean(gaps);
    row.stderr_gap = standard_error(gaps);
    if (!aucs.empty()) {
      row.has_auc = true;
      row.mean_auc = mean(aucs);
      row.stderr_auc = standard_error(aucs);
    }
    summary.aggregated.push_back(row);
  }

  // best alpha0 per (policy, T); ties go to the smaller alpha0
  std::map<std::pair<std::string, std::uint64_t>, const AggRow*> best;
  for (const auto& row : summary.aggregated) {
    auto key = std::make_pair(row.policy, row.T);
    auto it = best.find(key);
    const bool better =
        it == best.end() ||
        (cfg.select_by == "auc" && row.has_auc
             ? (row.mean_auc > it->second->mean_auc ||
                (row.mean_auc == it->second->mean_auc && row.alpha0 < it->second->alpha0))
             : (row.mean_gap < it->second->mean_gap ||
                (row.mean_gap == it->second->mean_gap && row.alpha0 < it->second->alpha0)));
    if (better) best[key] = &row;
  }
  for (const auto& [key, row] : best) summary.best.push_back(*row);

  if (!pooled_taus.empty()) {
    summary.sim_stats = delay_stats(pooled_taus);
    summary.has_sim_stats = true;
  }

  // summary files
  {
    std::ofstream out(cfg.out_dir + "/summary.csv");
    out << "policy,alpha0,T,n_seeds,mean_gap,stderr_gap,mean_auc,stderr_auc\n";
    for (const auto& r : summary.aggregated) {
      out << r.policy << ',' << fmt_double(r.alpha0) << ',' << r.T << ',' << r.n_seeds << ','
          << fmt_double(r.mean_gap) << ',' << fmt_double(r.stderr_gap) << ','
          << (r.has_auc ? fmt_double(r.mean_auc) : "") << ','
          << (r.has_auc ? fmt_double(r.stderr_auc) : "") << '\n';
    }
  }
  {
    std::ofstream out(cfg.out_dir + "/gaps.csv");
    out << "policy,alpha0,T,seed,final_avg_gap,online_gap,final_gap,auc\n";
    for (const auto& r : summary.runs) {
      out << r.policy << ',' << fmt_double(r.alpha0) << ',' << r.T << ',' << r.seed_index
          << ',' << fmt_double(r.final_avg_gap) << ','
          << (r.online_gap_valid ? fmt_double(r.online_gap) : "") << ','
          << fmt_double(r.final_gap) << ',' << (r.has_auc ? fmt_double(r.auc) : "") << '\n';
    }
  }
  {
    std::ofstream out(cfg.out_dir + "/best.csv");
    out << "policy,T,alpha0,mean_gap,stderr_gap,mean_auc,stderr_auc\n";
    for (const auto& r : summary.best) {
      out << r.policy << ',' << r.T << ',' << fmt_double(r.alpha0) << ','
          << fmt_double(r.mean_gap) << ',' << fmt_double(r.stderr_gap) << ','
          << (r.has_auc ? fmt_double(r.mean_auc) : "") << ','
          << (r.has_auc ? fmt_double(r.stderr_auc) : "") << '\n';
    }
  }
  emit_plots_data(summary, cfg.out_dir + "/plots");
  return summary;
}

}  // namespace adadelay
