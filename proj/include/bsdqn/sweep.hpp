#pragma once

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "bsdqn/metrics.hpp"
#include "bsdqn/run_config.hpp"

namespace bsdqn {

struct SweepCellSpec {
  std::string label;
  AgentConfig agent;
};

struct SweepCellResult {
  std::string label;
  std::string variant;
  std::string optimizer;
  int hidden = 0;
  int layers = 0;
  int seeds = 0;
  int converged_runs = 0;
  double mean_throughput = 0.0;          // packets per episode, mean over runs
  double mean_convergence_episode = std::nan("");  // over converged runs
  double speedup = std::nan("");         // vs the baseline cell
  std::vector<double> run_throughput;
  std::vector<double> run_convergence;   // episode, -1 when not converged
};

struct SweepOptions {
  std::vector<int> hidden{16, 32, 64, 128, 256};
  std::vector<OptimizerKind> optimizers{OptimizerKind::sgd, OptimizerKind::adam};
  std::vector<std::string> variants;  // non-empty switches to the variant grid
  int seeds = 10;
  std::string baseline;  // optimizer name (grid) or cell label (variants)
  int threads = 0;       // 0: BSDQN_THREADS, else hardware width
  std::string out_dir;
  bool write_run_metrics = true;
};

namespace detail {

inline std::string optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::adam ? "adam" : "sgd";
}

// Comparison presets: the lightweight single-layer DQN cells plus the
// three-layer comparison variants.
inline SweepCellSpec variant_preset(const std::string& name,
                                    const AgentConfig& base) {
  AgentConfig a = base;
  auto shape = [&](Variant v, OptimizerKind opt, int hidden, int layers) {
    a.variant = v;
    a.optimizer = opt;
    a.hidden.assign(static_cast<std::size_t>(layers), hidden);
    a.learning_rate = base.learning_rate;  // 0 keeps the per-optimizer default
  };
  if (name == "dqn-sgd32")
    shape(Variant::dqn, OptimizerKind::sgd, 32, 1);
  else if (name == "dqn-adam128")
    shape(Variant::dqn, OptimizerKind::adam, 128, 1);
  else if (name == "doubledqn")
    shape(Variant::double_dqn, OptimizerKind::adam, 32, 3);
  else if (name == "dueldqn")
    shape(Variant::duel, OptimizerKind::adam, 32, 3);
  else if (name == "doubledueldqn")
    shape(Variant::double_duel, OptimizerKind::adam, 32, 3);
  else
    throw std::invalid_argument(
        "unknown sweep variant '" + name +
        "' (expected dqn-sgd32, dqn-adam128, doubledqn, dueldqn, "
        "doubledueldqn)");
  return {name, a};
}

inline int resolve_threads(int requested, std::size_t jobs) {
  int t = requested;
  if (t <= 0) {
    if (const char* env = std::getenv("BSDQN_THREADS")) t = std::atoi(env);
  }
  if (t <= 0) t = static_cast<int>(std::thread::hardware_concurrency());
  if (t <= 0) t = 1;
  return std::max(1, std::min<int>(t, static_cast<int>(jobs)));
}

}  // namespace detail

inline std::vector<SweepCellSpec> build_sweep_cells(const RunConfig& base,
                                                    const SweepOptions& opt) {
  std::vector<SweepCellSpec> cells;
  if (!opt.variants.empty()) {
    for (const auto& name : opt.variants)
      cells.push_back(detail::variant_preset(name, base.agent));
    return cells;
  }
  for (OptimizerKind k : opt.optimizers)
    for (int h : opt.hidden) {
      AgentConfig a = base.agent;
      a.optimizer = k;
      a.hidden.assign(a.hidden.size(), h);
      cells.push_back({detail::optimizer_name(k) + std::to_string(h), a});
    }
  return cells;
}

// Runs every (cell, seed) job in a worker pool, aggregates per-cell means and
// fills the speedup column against the baseline cell. Per-cell seeds are
// base seed + run index, so cells see paired randomness.
inline std::vector<SweepCellResult> run_sweep(const RunConfig& base,
                                              const SweepOptions& opt,
                                              std::ostream* log = nullptr) {
  if (opt.seeds < 1) throw std::invalid_argument("sweep needs seeds >= 1");
  const std::vector<SweepCellSpec> cells = build_sweep_cells(base, opt);

  struct Job {
    std::size_t cell;
    int run;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (int r = 0; r < opt.seeds; ++r) jobs.push_back({c, r});

  std::vector<std::vector<RunSummary>> runs(cells.size());
  for (auto& v : runs) v.resize(static_cast<std::size_t>(opt.seeds));

  if (!opt.out_dir.empty())
    std::filesystem::create_directories(opt.out_dir);

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      const Job job = jobs[j];
      const SweepCellSpec& cell = cells[job.cell];
      RunConfig rc = base;
      rc.agent = cell.agent;
      rc.seed = base.seed + static_cast<std::uint64_t>(job.run);
      Trainer trainer(rc.env, rc.agent, rc.harness, rc.seed);
      RunSummary rs = trainer.train();
      rs.config_snapshot = resolved_snapshot(rc);
      if (!opt.out_dir.empty() && opt.write_run_metrics)
        write_metrics_csv(opt.out_dir + "/" + cell.label + "_seed" +
                              std::to_string(rc.seed) + ".metrics.csv",
                          rs.records);
      if (log) {
        std::lock_guard<std::mutex> lock(log_mutex);
        *log << cell.label << " seed " << rc.seed << ": throughput "
             << rs.converged_mean_throughput << " pkts/episode, convergence "
             << (rs.convergence_episode
                     ? std::to_string(*rs.convergence_episode)
                     : std::string("none"))
             << ", episodes " << rs.records.size() << "\n";
      }
      runs[job.cell][static_cast<std::size_t>(job.run)] = std::move(rs);
    }
  };
  const int width = detail::resolve_threads(opt.threads, jobs.size());
  std::vector<std::thread> pool;
  for (int t = 0; t < width; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  std::vector<SweepCellResult> results;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    SweepCellResult res;
    res.label = cells[c].label;
    res.variant = variant_name(cells[c].agent.variant);
    res.optimizer = detail::optimizer_name(cells[c].agent.optimizer);
    res.hidden = cells[c].agent.hidden.front();
    res.layers = static_cast<int>(cells[c].agent.hidden.size());
    res.seeds = opt.seeds;
    double tp_sum = 0.0, conv_sum = 0.0;
    for (const RunSummary& rs : runs[c]) {
      tp_sum += rs.converged_mean_throughput;
      res.run_throughput.push_back(rs.converged_mean_throughput);
      if (rs.convergence_episode) {
        ++res.converged_runs;
        conv_sum += *rs.convergence_episode;
        res.run_convergence.push_back(*rs.convergence_episode);
      } else {
        res.run_convergence.push_back(-1.0);
      }
    }
    res.mean_throughput = tp_sum / opt.seeds;
    if (res.converged_runs > 0)
      res.mean_convergence_episode = conv_sum / res.converged_runs;
    results.push_back(std::move(res));
  }

  // Speedup column. Optimizer grids compare episodes-to-convergence against
  // the adam cell of the same width; variant grids compare throughput
  // against the doubledqn cell.
  if (opt.variants.empty()) {
    const std::string base_opt = opt.baseline.empty() ? "adam" : opt.baseline;
    for (auto& r : results) {
      for (const auto& b : results)
        if (b.optimizer == base_opt && b.hidden == r.hidden) {
          if (!std::isnan(r.mean_convergence_episode) &&
              !std::isnan(b.mean_convergence_episode) &&
              b.mean_convergence_episode > 0)
            r.speedup = compute_speedup(r.mean_convergence_episode,
                                        b.mean_convergence_episode);
          break;
        }
    }
  } else {
    const std::string base_label =
        opt.baseline.empty() ? "doubledqn" : opt.baseline;
    for (auto& r : results) {
      for (const auto& b : results)
        if (b.label == base_label) {
          if (b.mean_throughput > 0)
            r.speedup = compute_speedup(r.mean_throughput, b.mean_throughput);
          break;
        }
    }
  }
  return results;
}

// One row per sweep cell with the summary columns operators plot against.
inline void write_sweep_csv(const std::string& path, int n_st,
                            const std::vector<SweepCellResult>& results) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open sweep summary: " + path);
  f << "label,variant,optimizer,hidden,layers,n_st,seeds,converged_runs,"
       "mean_throughput_pkts,mean_convergence_episode,speedup\n";
  char buf[64];
  for (const auto& r : results) {
    f << r.label << ',' << r.variant << ',' << r.optimizer << ',' << r.hidden
      << ',' << r.layers << ',' << n_st << ',' << r.seeds << ','
      << r.converged_runs << ',';
    std::snprintf(buf, sizeof buf, "%.6g", r.mean_throughput);
    f << buf << ',';
    if (std::isnan(r.mean_convergence_episode))
      f << "na";
    else {
      std::snprintf(buf, sizeof buf, "%.6g", r.mean_convergence_episode);
      f << buf;
    }
    f << ',';
    if (std::isnan(r.speedup))
      f << "na";
    else {
      std::snprintf(buf, sizeof buf, "%.2f", r.speedup);
      f << buf;
    }
    f << "\n";
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace bsdqn
