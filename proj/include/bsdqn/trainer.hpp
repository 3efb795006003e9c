#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bsdqn/agent.hpp"
#include "bsdqn/env.hpp"

namespace bsdqn {

struct HarnessConfig {
  long training_iterations = 1'000'000;  // total environment steps
  int convergence_window = 100;
  double convergence_rel_tol = 0.05;
  int convergence_grace = 100;  // extra episodes once converged
  int eval_episodes = 30;
  bool stop_on_convergence = true;

  void validate() const {
    if (training_iterations < 0)
      throw std::invalid_argument("training_iterations must be >= 0");
    if (convergence_window < 1)
      throw std::invalid_argument("convergence_window must be >= 1");
    if (convergence_rel_tol < 0.0)
      throw std::invalid_argument("convergence_rel_tol must be >= 0");
    if (convergence_grace < 0)
      throw std::invalid_argument("convergence_grace must be >= 0");
    if (eval_episodes < 1)
      throw std::invalid_argument("eval_episodes must be >= 1");
  }
};

struct EpisodeRecord {
  int episode = 0;  // 1-based
  int steps = 0;
  double reward_pkts = 0.0;
  double mean_loss = 0.0;
  double epsilon = 0.0;  // at episode end
  double wall_ms = 0.0;
};

struct EvalSummary {
  double mean = 0.0;
  double stderr_ = 0.0;
  int episodes = 0;
};

struct RunSummary {
  std::vector<EpisodeRecord> records;
  std::optional<int> convergence_episode;
  double converged_mean_throughput = 0.0;  // post-convergence packets/episode
  double final_window_mean = 0.0;          // mean over the trailing window
  EvalSummary final_eval;
  std::uint64_t seed = 0;
  long total_steps = 0;
  std::string config_snapshot;
};

// Earliest episode e whose trailing window satisfies
// (max - min) <= rel_tol * mean with mean > 0; episodes are 1-based.
inline std::optional<int> detect_convergence(
    std::span<const EpisodeRecord> records, int window = 100,
    double rel_tol = 0.05) {
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  for (std::size_t i = static_cast<std::size_t>(window) - 1; i < records.size();
       ++i) {
    double lo = records[i].reward_pkts, hi = lo, sum = 0.0;
    for (std::size_t j = i + 1 - static_cast<std::size_t>(window); j <= i; ++j) {
      lo = std::min(lo, records[j].reward_pkts);
      hi = std::max(hi, records[j].reward_pkts);
      sum += records[j].reward_pkts;
    }
    const double mean = sum / static_cast<double>(window);
    if (mean > 0.0 && hi - lo <= rel_tol * mean) return records[i].episode;
  }
  return std::nullopt;
}

// Greedy episode rollouts of an arbitrary policy (state -> action index),
// mean packets per episode with standard error.
template <class PolicyFn>
EvalSummary evaluate_episodes(PolicyFn&& policy, const EnvConfig& cfg,
                              const ActionSpace& space, int episodes,
                              Rng& rng) {
  if (episodes < 1) throw std::invalid_argument("episodes must be >= 1");
  EvalSummary out;
  out.episodes = episodes;
  double mean = 0.0, m2 = 0.0;
  for (int e = 0; e < episodes; ++e) {
    NetworkState s = reset_state(cfg, rng);
    double total = 0.0;
    for (int t = 0; t < cfg.frames_per_episode; ++t) {
      StepOutcome step = step_frame(s, space[policy(s)], cfg, rng);
      total += step.reward;
      s = step.next;
    }
    const double d = total - mean;
    mean += d / static_cast<double>(e + 1);
    m2 += d * (total - mean);
  }
  out.mean = mean;
  if (episodes > 1)
    out.stderr_ = std::sqrt(m2 / static_cast<double>(episodes - 1) /
                            static_cast<double>(episodes));
  return out;
}

// Ratio of two run metrics, first over second.
inline double compute_speedup(double baseline, double candidate) {
  if (candidate <= 0.0)
    throw std::domain_error("compute_speedup: candidate metric must be > 0");
  return baseline / candidate;
}

// Orchestrates episodes: select -> step -> store -> learn -> sync, with
// independent rng streams for environment, agent, and evaluation so runs are
// reproducible per seed.
class Trainer {
 public:
  Trainer(EnvConfig env, AgentConfig agent_cfg, HarnessConfig harness,
          std::uint64_t seed)
      : env_(std::move(env)),
        space_(env_),
        harness_(harness),
        seed_(seed),
        agent_(env_, space_, std::move(agent_cfg), splitmix64(seed ^ 0x51f15eedULL)),
        env_rng_(make_rng(seed, 1)),
        agent_rng_(make_rng(seed, 2)),
        eval_rng_(make_rng(seed, 3)) {
    env_.validate();
    harness_.validate();
  }

  const EnvConfig& env() const { return env_; }
  const ActionSpace& space() const { return space_; }
  DqnAgent& agent() { return agent_; }
  const DqnAgent& agent() const { return agent_; }
  long global_step() const { return global_step_; }

  // One episode of frames_per_episode steps from the reset state (empty
  // queues, discharged storage, fresh channel). The terminal flag is set on
  // the last frame only.
  EpisodeRecord run_episode(bool learn) {
    const auto t0 = std::chrono::steady_clock::now();
    EpisodeRecord rec;
    rec.episode = ++episode_count_;
    rec.steps = env_.frames_per_episode;

    NetworkState s = reset_state(env_, env_rng_);
    std::vector<double> sv = encode_state(s, env_);
    double loss_sum = 0.0;
    long learn_count = 0;
    for (int t = 0; t < env_.frames_per_episode; ++t) {
      const double eps =
          learn ? agent_.config().epsilon.at(global_step_) : 0.0;
      const int action = agent_.act(sv, s.busy_slots, eps, agent_rng_);
      const StepOutcome out = step_frame(s, space_[action], env_, env_rng_);
      rec.reward_pkts += out.reward;
      std::vector<double> nv = encode_state(out.next, env_);
      Experience e;
      e.state = sv;
      e.action = action;
      e.reward = out.reward;
      e.next_state = nv;
      e.next_busy = out.next.busy_slots;
      e.terminal = t == env_.frames_per_episode - 1;
      agent_.remember(e);
      if (learn && agent_.ready()) {
        loss_sum += agent_.learn(agent_rng_);
        ++learn_count;
      }
      ++global_step_;
      agent_.maybe_sync(global_step_);
      s = out.next;
      sv = std::move(nv);
    }
    rec.mean_loss = learn_count > 0 ? loss_sum / static_cast<double>(learn_count)
                                    : 0.0;
    rec.epsilon = agent_.config().epsilon.at(global_step_);
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    return rec;
  }

  // Greedy evaluation with the dedicated evaluation stream.
  EvalSummary evaluate_greedy(int episodes) {
    auto policy = [&](const NetworkState& s) {
      return agent_.act(encode_state(s, env_), s.busy_slots, 0.0, eval_rng_);
    };
    return evaluate_episodes(policy, env_, space_, episodes, eval_rng_);
  }

  // Runs episodes until the step budget is exhausted or the reward trace
  // converges (plus a grace window), then evaluates the greedy policy.
  RunSummary train(
      const std::function<void(const EpisodeRecord&)>& on_episode = {}) {
    RunSummary rs;
    rs.seed = seed_;
    while (global_step_ < harness_.training_iterations) {
      rs.records.push_back(run_episode(true));
      if (on_episode) on_episode(rs.records.back());
      if (!rs.convergence_episode &&
          static_cast<int>(rs.records.size()) >= harness_.convergence_window) {
        rs.convergence_episode = detect_convergence(
            std::span<const EpisodeRecord>(rs.records)
                .last(static_cast<std::size_t>(harness_.convergence_window)),
            harness_.convergence_window, harness_.convergence_rel_tol);
      }
      if (rs.convergence_episode && harness_.stop_on_convergence &&
          static_cast<int>(rs.records.size()) >=
              *rs.convergence_episode + harness_.convergence_grace)
        break;
    }
    rs.total_steps = global_step_;

    const int window = std::min<int>(harness_.convergence_window,
                                     static_cast<int>(rs.records.size()));
    if (window > 0) {
      double sum = 0.0;
      for (std::size_t i = rs.records.size() - static_cast<std::size_t>(window);
           i < rs.records.size(); ++i)
        sum += rs.records[i].reward_pkts;
      rs.final_window_mean = sum / window;
    }
    if (rs.convergence_episode &&
        static_cast<int>(rs.records.size()) > *rs.convergence_episode) {
      double sum = 0.0;
      int count = 0;
      for (std::size_t i = static_cast<std::size_t>(*rs.convergence_episode);
           i < rs.records.size(); ++i, ++count)
        sum += rs.records[i].reward_pkts;
      rs.converged_mean_throughput = sum / count;
    } else {
      rs.converged_mean_throughput = rs.final_window_mean;
    }
    if (!rs.records.empty())
      rs.final_eval = evaluate_greedy(harness_.eval_episodes);
    return rs;
  }

 private:
  EnvConfig env_;
  ActionSpace space_;
  HarnessConfig harness_;
  std::uint64_t seed_;
  DqnAgent agent_;
  Rng env_rng_, agent_rng_, eval_rng_;
  long global_step_ = 0;
  int episode_count_ = 0;
};

// Tabular Q-learning on an exactly indexed instance: linear epsilon decay,
// visit-count learning-rate schedule.
inline TabularQ train_tabular(const EnvConfig& cfg, const StateSpace& states,
                              const ActionSpace& space, double gamma,
                              long steps, double eps_start, double eps_end,
                              long eps_decay, std::uint64_t seed) {
  TabularQ tab(states, space);
  EpsilonSchedule eps{eps_start, eps_end, eps_decay};
  eps.validate();
  Rng rng = make_rng(seed, 4);
  NetworkState s = reset_state(cfg, rng);
  std::int64_t si = states.index_of(s);
  for (long t = 0; t < steps; ++t) {
    const int a = tab.act(si, s.busy_slots, eps.at(t), rng);
    const StepOutcome out = step_frame(s, space[a], cfg, rng);
    const std::int64_t sn = states.index_of(out.next);
    tab.scheduled_update(si, a, out.reward, sn, out.next.busy_slots, gamma);
    s = out.next;
    si = sn;
  }
  return tab;
}

}  // namespace bsdqn
