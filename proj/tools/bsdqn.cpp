// bsdqn: RF-powered backscatter CRN simulator + DQN gateway scheduler.
//
// Subcommands: train a scheduler, evaluate a saved model, solve a small
// instance exactly by value iteration, or sweep optimizer/variant grids.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "bsdqn/metrics.hpp"
#include "bsdqn/run_config.hpp"
#include "bsdqn/sweep.hpp"

namespace fs = std::filesystem;
using namespace bsdqn;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << text;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::istringstream s(csv);
  std::string tok;
  while (std::getline(s, tok, ',')) out.push_back(std::stoi(tok));
  if (out.empty()) throw CLI::ValidationError("expected a comma-separated list");
  return out;
}

int cmd_train(const std::string& config_path, std::uint64_t seed,
              const std::string& out_dir, const std::string& agent,
              const std::string& optimizer, int hidden, int layers,
              long steps) {
  RunConfig cfg = parse_config(config_path);
  cfg.seed = seed;
  cfg.out_dir = out_dir;
  if (!agent.empty()) cfg.agent.variant = parse_variant(agent);
  if (!optimizer.empty()) {
    if (optimizer == "adam")
      cfg.agent.optimizer = OptimizerKind::adam;
    else if (optimizer == "sgd")
      cfg.agent.optimizer = OptimizerKind::sgd;
    else
      throw CLI::ValidationError("--optimizer must be sgd or adam");
  }
  if (hidden > 0 || layers > 0) {
    const int h = hidden > 0 ? hidden : cfg.agent.hidden.front();
    const int l = layers > 0 ? layers : static_cast<int>(cfg.agent.hidden.size());
    cfg.agent.hidden.assign(static_cast<std::size_t>(l), h);
  }
  if (steps > 0) cfg.harness.training_iterations = steps;
  cfg.validate();

  fs::create_directories(out_dir);
  write_text(out_dir + "/config.resolved", resolved_snapshot(cfg));

  Trainer trainer(cfg.env, cfg.agent, cfg.harness, cfg.seed);
  RunSummary rs = trainer.train([&](const EpisodeRecord& r) {
    if (r.episode % 50 == 0)
      std::cout << "episode " << r.episode << ": reward " << r.reward_pkts
                << " pkts, loss " << r.mean_loss << ", eps " << r.epsilon
                << std::endl;
  });
  rs.config_snapshot = resolved_snapshot(cfg);

  write_metrics_csv(out_dir + "/metrics.csv", rs.records);
  save_weights(out_dir + "/model.bsdqn", trainer.agent().online(),
               trainer.agent().optimizer());

  std::cout << "episodes: " << rs.records.size() << "\n";
  std::cout << "total_steps: " << rs.total_steps << "\n";
  std::cout << "convergence_episode: "
            << (rs.convergence_episode ? std::to_string(*rs.convergence_episode)
                                       : std::string("none"))
            << "\n";
  std::cout << "converged_mean_throughput_pkts: " << rs.converged_mean_throughput
            << "\n";
  std::cout << "final_window_mean_pkts: " << rs.final_window_mean << "\n";
  std::cout << "final_eval_pkts: " << rs.final_eval.mean << " +- "
            << rs.final_eval.stderr_ << " (" << rs.final_eval.episodes
            << " episodes)\n";
  std::cout << "model: " << out_dir << "/model.bsdqn\n";
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& config_path,
             int episodes, std::uint64_t seed) {
  RunConfig cfg = parse_config(config_path);
  const WeightFile wf = load_weights(model_path);
  ActionSpace space(cfg.env);
  if (wf.net.input_dim() != 1 + 2 * cfg.env.n() ||
      wf.net.output_dim() != space.size())
    throw std::runtime_error(
        "model dimensions do not match the configured environment");
  Rng rng = make_rng(seed, 9);
  Rng greedy_rng = make_rng(seed, 10);
  auto policy = [&](const NetworkState& s) {
    const std::vector<double> sv = encode_state(s, cfg.env);
    const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(
        sv.data(), static_cast<Eigen::Index>(sv.size()));
    return select_action(wf.net, space, x, s.busy_slots, 0.0, greedy_rng);
  };
  EvalSummary ev = evaluate_episodes(policy, cfg.env, space, episodes, rng);
  std::cout << "mean_throughput_pkts_per_episode: " << ev.mean << "\n";
  std::cout << "stderr: " << ev.stderr_ << "\n";
  std::cout << "episodes: " << ev.episodes << "\n";
  return 0;
}

int cmd_solve(const std::string& config_path, double tol, double gamma,
              const std::string& out_path) {
  RunConfig cfg = parse_config(config_path);
  const double g = gamma >= 0 ? gamma : cfg.agent.gamma;
  StateSpace states(cfg.env);
  ActionSpace space(cfg.env);
  std::cout << "states: " << states.size() << ", actions: " << space.size()
            << std::endl;
  ValueTable vt = value_iteration(cfg.env, space, states, g, tol);
  std::cout << "iterations: " << vt.iterations << "\n";
  std::cout << "residual: " << vt.residual << "\n";
  write_value_csv(out_path, cfg.env, states, space, vt);
  std::cout << "wrote " << out_path << "\n";

  Rng rng = make_rng(cfg.seed, 11);
  auto greedy = [&](const NetworkState& s) {
    return greedy_action(vt, states, s);
  };
  EvalStats st = evaluate_policy(greedy, cfg.env, space, 10000, rng);
  std::cout << "greedy_mean_pkts_per_frame: " << st.mean << " +- " << st.stderr_
            << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& hidden_csv,
              const std::string& optimizers_csv, const std::string& variants_csv,
              int seeds, const std::string& baseline, const std::string& out_dir,
              int threads, long steps) {
  RunConfig cfg = parse_config(config_path);
  SweepOptions opt;
  opt.seeds = seeds;
  opt.baseline = baseline;
  opt.threads = threads;
  opt.out_dir = out_dir;
  if (steps > 0) cfg.harness.training_iterations = steps;
  if (!hidden_csv.empty()) opt.hidden = parse_int_list(hidden_csv);
  if (!optimizers_csv.empty()) {
    opt.optimizers.clear();
    std::istringstream s(optimizers_csv);
    std::string tok;
    while (std::getline(s, tok, ',')) {
      if (tok == "adam")
        opt.optimizers.push_back(OptimizerKind::adam);
      else if (tok == "sgd")
        opt.optimizers.push_back(OptimizerKind::sgd);
      else
        throw CLI::ValidationError("--optimizers entries must be sgd or adam");
    }
  }
  if (!variants_csv.empty()) {
    std::istringstream s(variants_csv);
    std::string tok;
    while (std::getline(s, tok, ',')) opt.variants.push_back(tok);
  }

  fs::create_directories(out_dir);
  write_text(out_dir + "/config.resolved", resolved_snapshot(cfg));
  auto results = run_sweep(cfg, opt, &std::cout);
  const std::string summary = out_dir + "/sweep_summary.csv";
  write_sweep_csv(summary, cfg.env.n(), results);

  std::cout << "\nlabel            optimizer hidden layers  throughput  "
               "convergence  speedup\n";
  char buf[160];
  for (const auto& r : results) {
    const std::string conv =
        std::isnan(r.mean_convergence_episode)
            ? "none"
            : std::to_string(
                  static_cast<long>(r.mean_convergence_episode + 0.5));
    char sp[16];
    if (std::isnan(r.speedup))
      std::snprintf(sp, sizeof sp, "na");
    else
      std::snprintf(sp, sizeof sp, "%.2fx", r.speedup);
    std::snprintf(buf, sizeof buf, "%-16s %-9s %6d %6d %11.1f  %11s  %7s\n",
                  r.label.c_str(), r.optimizer.c_str(), r.hidden, r.layers,
                  r.mean_throughput, conv.c_str(), sp);
    std::cout << buf;
  }
  std::cout << "wrote " << summary << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RF-powered backscatter CRN gateway scheduling with DQN"};
  app.require_subcommand(1);

  std::string config_path, out_dir, model_path, agent, optimizer;
  std::string hidden_csv, optimizers_csv, variants_csv, baseline, solve_out;
  std::uint64_t seed = 1;
  int hidden = 0, layers = 0, episodes = 100, seeds = 10, threads = 0;
  long steps = 0;
  double tol = 1e-6, gamma = -1.0;

  auto* train = app.add_subcommand("train", "train a DQN gateway scheduler");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--seed", seed, "run seed");
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--agent", agent, "dqn|double|duel|doubleduel");
  train->add_option("--optimizer", optimizer, "sgd|adam");
  train->add_option("--hidden", hidden, "hidden neurons per layer");
  train->add_option("--layers", layers, "hidden layer count");
  train->add_option("--steps", steps, "override training iterations");

  auto* eval = app.add_subcommand("eval", "evaluate a saved model greedily");
  eval->add_option("--model", model_path, "weight file")->required();
  eval->add_option("--config", config_path, "config file")->required();
  eval->add_option("--episodes", episodes, "evaluation episodes");
  eval->add_option("--seed", seed, "evaluation seed");

  auto* solve =
      app.add_subcommand("solve", "exact value iteration on a small instance");
  solve->add_option("--config", config_path, "config file")->required();
  solve->add_option("--tol", tol, "sup-norm Bellman residual tolerance");
  solve->add_option("--gamma", gamma, "discount override");
  solve->add_option("--out", solve_out, "V/pi csv path")->default_val("vpi.csv");

  auto* sweep =
      app.add_subcommand("sweep", "optimizer/variant comparison grids");
  sweep->add_option("--config", config_path, "config file")->required();
  sweep->add_option("--hidden", hidden_csv, "comma list of hidden widths");
  sweep->add_option("--optimizers", optimizers_csv, "comma list: sgd,adam");
  sweep->add_option("--variants", variants_csv,
                    "dqn-sgd32,dqn-adam128,doubledqn,dueldqn,doubledueldqn");
  sweep->add_option("--seeds", seeds, "runs per cell");
  sweep->add_option("--baseline", baseline, "baseline optimizer or cell label");
  sweep->add_option("--out", out_dir, "output directory")->default_val("sweep_out");
  sweep->add_option("--threads", threads, "worker pool width (BSDQN_THREADS)");
  sweep->add_option("--steps", steps, "override training iterations");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed())
      return cmd_train(config_path, seed, out_dir, agent, optimizer, hidden,
                       layers, steps);
    if (eval->parsed()) return cmd_eval(model_path, config_path, episodes, seed);
    if (solve->parsed()) return cmd_solve(config_path, tol, gamma, solve_out);
    if (sweep->parsed())
      return cmd_sweep(config_path, hidden_csv, optimizers_csv, variants_csv,
                       seeds, baseline, out_dir, threads, steps);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 1;
}
