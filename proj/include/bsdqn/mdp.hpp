#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsdqn/env.hpp"

namespace bsdqn {

// Bijective indexing of the finite state grid b-support x prod (q_n x c_n),
// mixed-radix with the busy-slot index as the most significant digit.
class StateSpace {
 public:
  explicit StateSpace(const EnvConfig& cfg, std::int64_t cap = 10'000'000)
      : cfg_(cfg), busy_values_(cfg.busy_support()) {
    std::int64_t size = static_cast<std::int64_t>(busy_values_.size());
    for (const auto& st : cfg.sts) {
      size *= st.queue_capacity + 1;
      size *= st.energy_capacity + 1;
      if (size > cap)
        throw std::length_error(
            "state space exceeds cap (" + std::to_string(cap) +
            "); shrink the instance for exact solving");
    }
    size_ = size;
    busy_index_.assign(static_cast<std::size_t>(cfg.slots_per_frame) + 1, -1);
    for (std::size_t i = 0; i < busy_values_.size(); ++i)
      busy_index_[static_cast<std::size_t>(busy_values_[i])] =
          static_cast<int>(i);
  }

  std::int64_t size() const { return size_; }
  const std::vector<int>& busy_values() const { return busy_values_; }
  const EnvConfig& config() const { return cfg_; }

  std::int64_t index_of(const NetworkState& s) const {
    const int bidx = busy_index_.at(static_cast<std::size_t>(s.busy_slots));
    if (bidx < 0)
      throw std::invalid_argument("busy count outside channel support");
    std::int64_t idx = bidx;
    for (int i = 0; i < cfg_.n(); ++i) {
      const std::size_t u = static_cast<std::size_t>(i);
      idx = idx * (cfg_.sts[u].queue_capacity + 1) + s.queue[u];
      idx = idx * (cfg_.sts[u].energy_capacity + 1) + s.energy[u];
    }
    return idx;
  }

  NetworkState state_at(std::int64_t idx) const {
    NetworkState s;
    const int n = cfg_.n();
    s.queue.resize(static_cast<std::size_t>(n));
    s.energy.resize(static_cast<std::size_t>(n));
    for (int i = n - 1; i >= 0; --i) {
      const std::size_t u = static_cast<std::size_t>(i);
      const std::int64_t cmod = cfg_.sts[u].energy_capacity + 1;
      s.energy[u] = static_cast<int>(idx % cmod);
      idx /= cmod;
      const std::int64_t qmod = cfg_.sts[u].queue_capacity + 1;
      s.queue[u] = static_cast<int>(idx % qmod);
      idx /= qmod;
    }
    s.busy_slots = busy_values_.at(static_cast<std::size_t>(idx));
    return s;
  }

 private:
  EnvConfig cfg_;
  std::vector<int> busy_values_;
  std::vector<int> busy_index_;
  std::int64_t size_ = 0;
};

struct Successor {
  std::int64_t state = 0;
  double prob = 0.0;
};

struct TransitionResult {
  std::vector<Successor> successors;
  double reward = 0.0;  // deterministic given (s, a); arrivals land afterwards
};

// Exact next-state distribution: the deterministic frame dynamics composed
// with the per-ST binomial arrival pmf (aggregated by the clipped queue) and
// the channel pmf.
inline TransitionResult transition_distribution(const NetworkState& s,
                                                const Action& a,
                                                const EnvConfig& cfg,
                                                const StateSpace& space) {
  if (!action_feasible(a, s.busy_slots, cfg))
    throw std::invalid_argument("transition_distribution: infeasible action");
  const int n = cfg.n();
  TransitionResult result;

  std::vector<int> q2(static_cast<std::size_t>(n));
  std::vector<int> c2(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    const STConfig& st = cfg.sts[u];
    const PhaseResult busy = busy_transition(s.queue[u], s.energy[u],
                                             a.backscatter[u], s.busy_slots, st);
    const PhaseResult idle =
        idle_transition(busy.queue, busy.energy, a.active[u], st);
    result.reward += busy.delivered + idle.delivered;
    q2[u] = idle.queue;
    c2[u] = idle.energy;
  }

  // Per-ST distribution over the post-arrival queue, mass at Q_n pooled.
  std::vector<std::vector<std::pair<int, double>>> qdist(
      static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    const STConfig& st = cfg.sts[u];
    const int k = cfg.slots_per_frame;
    double below = 0.0;
    for (int m = 0; m <= k; ++m) {
      const int v = std::min(st.queue_capacity, q2[u] + m);
      if (v < st.queue_capacity) {
        const double p = binomial_pmf(k, st.arrival_prob, m);
        if (p > 0.0) qdist[u].push_back({v, p});
        below += p;
      } else {
        const double tail = 1.0 - below;
        if (tail > 0.0) qdist[u].push_back({st.queue_capacity, tail});
        break;
      }
    }
  }

  // Channel pmf aggregated by busy count (duplicate beta atoms collapse).
  std::vector<std::pair<int, double>> bdist;
  for (const auto& atom : cfg.idle_slot_support) {
    const int b = cfg.slots_per_frame - atom.beta;
    bool merged = false;
    for (auto& e : bdist)
      if (e.first == b) {
        e.second += atom.prob;
        merged = true;
      }
    if (!merged) bdist.push_back({b, atom.prob});
  }
  std::erase_if(bdist, [](const auto& e) { return e.second <= 0.0; });

  NetworkState next;
  next.queue.resize(static_cast<std::size_t>(n));
  next.energy.assign(c2.begin(), c2.end());
  std::vector<std::size_t> pick(static_cast<std::size_t>(n), 0);
  while (true) {
    double pq = 1.0;
    for (int i = 0; i < n; ++i) {
      const std::size_t u = static_cast<std::size_t>(i);
      next.queue[u] = qdist[u][pick[u]].first;
      pq *= qdist[u][pick[u]].second;
    }
    for (const auto& [b, pb] : bdist) {
      next.busy_slots = b;
      result.successors.push_back({space.index_of(next), pq * pb});
    }
    int pos = n - 1;
    while (pos >= 0 && ++pick[static_cast<std::size_t>(pos)] ==
                           qdist[static_cast<std::size_t>(pos)].size()) {
      pick[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
  return result;
}

struct ValueTable {
  std::vector<double> value;     // V(s)
  std::vector<int> policy;       // greedy action index, ties to lowest index
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> residual_history;  // sup-norm residual per sweep
};

// Synchronous value iteration to sup-norm residual <= tol. Feasible actions
// only; greedy ties break to the lowest action index so the oracle policy is
// reproducible.
inline ValueTable value_iteration(const EnvConfig& cfg,
                                  const ActionSpace& space,
                                  const StateSpace& states, double gamma,
                                  double tol, int max_sweeps = 100000) {
  if (gamma < 0.0 || gamma >= 1.0)
    throw std::domain_error("value_iteration: gamma must lie in [0, 1)");
  if (tol <= 0.0) throw std::domain_error("value_iteration: tol must be > 0");

  const std::int64_t ns = states.size();
  // Precompute per-(state, feasible action) transitions.
  struct Entry {
    int action;
    double reward;
    std::uint32_t first, count;  // slice into flat successor storage
  };
  std::vector<std::vector<Entry>> table(static_cast<std::size_t>(ns));
  std::vector<Successor> flat;
  for (std::int64_t si = 0; si < ns; ++si) {
    const NetworkState s = states.state_at(si);
    for (int ai : space.feasible_indices(s.busy_slots)) {
      TransitionResult tr = transition_distribution(s, space[ai], cfg, states);
      Entry e;
      e.action = ai;
      e.reward = tr.reward;
      e.first = static_cast<std::uint32_t>(flat.size());
      e.count = static_cast<std::uint32_t>(tr.successors.size());
      flat.insert(flat.end(), tr.successors.begin(), tr.successors.end());
      table[static_cast<std::size_t>(si)].push_back(e);
    }
  }

  ValueTable out;
  out.value.assign(static_cast<std::size_t>(ns), 0.0);
  out.policy.assign(static_cast<std::size_t>(ns), 0);
  std::vector<double> next(static_cast<std::size_t>(ns), 0.0);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double residual = 0.0;
    for (std::int64_t si = 0; si < ns; ++si) {
      double best = -std::numeric_limits<double>::infinity();
      int best_a = 0;
      for (const Entry& e : table[static_cast<std::size_t>(si)]) {
        double ev = 0.0;
        for (std::uint32_t j = e.first; j < e.first + e.count; ++j)
          ev += flat[j].prob * out.value[static_cast<std::size_t>(flat[j].state)];
        const double q = e.reward + gamma * ev;
        if (q > best) {
          best = q;
          best_a = e.action;
        }
      }
      next[static_cast<std::size_t>(si)] = best;
      out.policy[static_cast<std::size_t>(si)] = best_a;
      residual = std::max(residual,
                          std::abs(best - out.value[static_cast<std::size_t>(si)]));
    }
    out.value.swap(next);
    out.iterations = sweep + 1;
    out.residual = residual;
    out.residual_history.push_back(residual);
    if (residual <= tol) break;
  }
  return out;
}

struct EvalStats {
  double mean = 0.0;
  double stderr_ = 0.0;
  long frames = 0;
};

// Mean packets per frame of a policy (state -> action index), measured by
// running the simulator from the reset state. Welford accumulation.
template <class PolicyFn>
EvalStats evaluate_policy(PolicyFn&& policy, const EnvConfig& cfg,
                          const ActionSpace& space, long frames, Rng& rng) {
  if (frames < 1) throw std::invalid_argument("evaluate_policy: frames >= 1");
  NetworkState s = reset_state(cfg, rng);
  double mean = 0.0, m2 = 0.0;
  for (long t = 0; t < frames; ++t) {
    const int ai = policy(s);
    StepOutcome out = step_frame(s, space[ai], cfg, rng);
    const double x = static_cast<double>(out.reward);
    const double d = x - mean;
    mean += d / static_cast<double>(t + 1);
    m2 += d * (x - mean);
    s = out.next;
  }
  EvalStats st;
  st.mean = mean;
  st.frames = frames;
  if (frames > 1)
    st.stderr_ = std::sqrt(m2 / static_cast<double>(frames - 1) /
                           static_cast<double>(frames));
  return st;
}

// Greedy policy lookup bound to a solved table.
inline int greedy_action(const ValueTable& vt, const StateSpace& states,
                         const NetworkState& s) {
  return vt.policy[static_cast<std::size_t>(states.index_of(s))];
}

// CSV export of V and the greedy policy: one row per state with the raw
// state fields and the action tuple.
inline void write_value_csv(const std::string& path, const EnvConfig& cfg,
                            const StateSpace& states, const ActionSpace& space,
                            const ValueTable& vt) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "b";
  for (int i = 1; i <= cfg.n(); ++i) f << ",q_" << i << ",c_" << i;
  f << ",value";
  for (int i = 1; i <= cfg.n(); ++i) f << ",alpha_" << i;
  for (int i = 1; i <= cfg.n(); ++i) f << ",eta_" << i;
  f << "\n";
  char buf[64];
  for (std::int64_t si = 0; si < states.size(); ++si) {
    const NetworkState s = states.state_at(si);
    const Action& a = space[vt.policy[static_cast<std::size_t>(si)]];
    f << s.busy_slots;
    for (int i = 0; i < cfg.n(); ++i)
      f << ',' << s.queue[static_cast<std::size_t>(i)] << ','
        << s.energy[static_cast<std::size_t>(i)];
    std::snprintf(buf, sizeof buf, "%.10g",
                  vt.value[static_cast<std::size_t>(si)]);
    f << ',' << buf;
    for (int v : a.backscatter) f << ',' << v;
    for (int v : a.active) f << ',' << v;
    f << "\n";
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace bsdqn
