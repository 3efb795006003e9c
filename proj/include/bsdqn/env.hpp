#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "bsdqn/config.hpp"
#include "bsdqn/rng.hpp"

namespace bsdqn {

// Observed MDP state: busy slots in the current frame plus per-ST queue and
// energy levels.
struct NetworkState {
  int busy_slots = 0;       // b = K - beta
  std::vector<int> queue;   // q_n
  std::vector<int> energy;  // c_n
};

// Slot allocation for one frame. Harvest time is derived: every busy slot an
// ST does not spend backscattering, it harvests.
struct Action {
  std::vector<int> backscatter;  // alpha_n
  std::vector<int> active;       // eta_n

  int total_backscatter() const {
    return std::accumulate(backscatter.begin(), backscatter.end(), 0);
  }
  int total_active() const {
    return std::accumulate(active.begin(), active.end(), 0);
  }
};

// Probability of m successes in `trials` Bernoulli(prob) draws.
inline double binomial_pmf(int trials, double prob, int m) {
  if (m < 0 || m > trials) throw std::domain_error("binomial_pmf: m out of range");
  if (prob < 0.0 || prob > 1.0)
    throw std::domain_error("binomial_pmf: prob must lie in [0, 1]");
  if (prob == 0.0) return m == 0 ? 1.0 : 0.0;
  if (prob == 1.0) return m == trials ? 1.0 : 0.0;
  double comb = 1.0;
  for (int i = 1; i <= m; ++i)
    comb = comb * static_cast<double>(trials - m + i) / static_cast<double>(i);
  return comb * std::pow(prob, m) * std::pow(1.0 - prob, trials - m);
}

// All slot allocations with total <= K, in lexicographic order over the
// 2N-tuple (alpha_1..alpha_N, eta_1..eta_N). Feasibility against a concrete
// busy-slot count is a runtime mask on top of this fixed ordering, so the
// Q-network output layer can stay one-fixed-slot-per-action.
class ActionSpace {
 public:
  explicit ActionSpace(const EnvConfig& cfg)
      : k_(cfg.slots_per_frame), n_(cfg.n()) {
    std::vector<int> tuple(static_cast<std::size_t>(2 * n_), 0);
    build(tuple, 0, k_);
    for (std::size_t i = 0; i < actions_.size(); ++i)
      index_[key(actions_[i])] = static_cast<int>(i);
    masks_.resize(static_cast<std::size_t>(k_) + 1);
    feasible_.resize(static_cast<std::size_t>(k_) + 1);
    for (int b = 0; b <= k_; ++b) {
      auto& mask = masks_[static_cast<std::size_t>(b)];
      auto& idx = feasible_[static_cast<std::size_t>(b)];
      mask.resize(actions_.size(), 0);
      for (std::size_t i = 0; i < actions_.size(); ++i) {
        const Action& a = actions_[i];
        if (a.total_backscatter() <= b && a.total_active() <= k_ - b) {
          mask[i] = 1;
          idx.push_back(static_cast<int>(i));
        }
      }
    }
  }

  int size() const { return static_cast<int>(actions_.size()); }
  const Action& operator[](int i) const {
    return actions_[static_cast<std::size_t>(i)];
  }
  int index_of(const Action& a) const {
    auto it = index_.find(key(a));
    if (it == index_.end()) throw std::invalid_argument("action not in space");
    return it->second;
  }

  // mask[i] != 0 iff action i is feasible when b slots are busy
  const std::vector<std::uint8_t>& feasible_mask(int b) const {
    return masks_.at(static_cast<std::size_t>(b));
  }
  const std::vector<int>& feasible_indices(int b) const {
    return feasible_.at(static_cast<std::size_t>(b));
  }

 private:
  static std::vector<int> key(const Action& a) {
    std::vector<int> k(a.backscatter);
    k.insert(k.end(), a.active.begin(), a.active.end());
    return k;
  }

  void build(std::vector<int>& tuple, int pos, int budget) {
    if (pos == 2 * n_) {
      Action a;
      a.backscatter.assign(tuple.begin(), tuple.begin() + n_);
      a.active.assign(tuple.begin() + n_, tuple.end());
      actions_.push_back(std::move(a));
      return;
    }
    for (int v = 0; v <= budget; ++v) {
      tuple[static_cast<std::size_t>(pos)] = v;
      build(tuple, pos + 1, budget - v);
    }
    tuple[static_cast<std::size_t>(pos)] = 0;
  }

  int k_;
  int n_;
  std::vector<Action> actions_;
  std::map<std::vector<int>, int> index_;
  std::vector<std::vector<std::uint8_t>> masks_;
  std::vector<std::vector<int>> feasible_;
};

inline bool action_feasible(const Action& a, int b, const EnvConfig& cfg) {
  return a.total_backscatter() <= b &&
         a.total_active() <= cfg.slots_per_frame - b;
}

// Per-ST packet arrivals for one frame: K independent Bernoulli(lambda_n)
// draws per ST. Always consumes exactly N*K engine draws.
inline std::vector<int> sample_arrivals(const EnvConfig& cfg, Rng& rng) {
  std::vector<int> m(static_cast<std::size_t>(cfg.n()), 0);
  for (int i = 0; i < cfg.n(); ++i) {
    const double lam = cfg.sts[static_cast<std::size_t>(i)].arrival_prob;
    int cnt = 0;
    for (int k = 0; k < cfg.slots_per_frame; ++k)
      if (uniform01(rng) < lam) ++cnt;
    m[static_cast<std::size_t>(i)] = cnt;
  }
  return m;
}

// Draws beta from the idle-slot support and returns b = K - beta.
inline int sample_channel(const EnvConfig& cfg, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (const auto& atom : cfg.idle_slot_support) {
    acc += atom.prob;
    if (u < acc) return cfg.slots_per_frame - atom.beta;
  }
  return cfg.slots_per_frame - cfg.idle_slot_support.back().beta;
}

struct PhaseResult {
  int queue = 0;
  int energy = 0;
  int delivered = 0;
};

// Busy period: alpha backscatter slots deliver packets at d_b each, the
// remaining b - alpha slots harvest e_h each. Backscatter costs no energy.
inline PhaseResult busy_transition(int q, int c, int alpha, int b,
                                   const STConfig& st) {
  PhaseResult r;
  r.energy = std::min(c + (b - alpha) * st.harvest_rate, st.energy_capacity);
  r.queue = std::max(0, q - alpha * st.backscatter_rate);
  r.delivered = q - r.queue;
  return r;
}

// Idle period: an ST occupies t = min(eta, ceil(q1/d_a), floor(c1/e_a)) slots,
// delivering d_a packets and spending e_a energy units per slot. A partially
// filled final slot still costs a whole slot of energy.
inline PhaseResult idle_transition(int q1, int c1, int eta, const STConfig& st) {
  int t = eta;
  if (st.active_rate <= 0) {
    t = 0;
  } else {
    const int data_slots = (q1 + st.active_rate - 1) / st.active_rate;
    t = std::min(t, data_slots);
    if (st.active_cost > 0) t = std::min(t, c1 / st.active_cost);
  }
  PhaseResult r;
  r.delivered = std::min(q1, t * st.active_rate);
  r.queue = q1 - r.delivered;
  r.energy = c1 - t * st.active_cost;
  return r;
}

struct StepOutcome {
  NetworkState next;
  int reward = 0;                       // total packets delivered this frame
  std::vector<int> backscatter_packets;  // per ST
  std::vector<int> active_packets;       // per ST
  std::vector<int> arrivals;             // per ST
  std::vector<int> dropped;              // per ST, clipped at queue capacity
};

// One frame: busy phase, then idle phase, then arrivals, then a fresh channel
// draw. Arrivals land after transmission and are clipped at Q_n with explicit
// drop accounting. rng order: arrivals (N*K draws), then channel (1+ draws).
inline StepOutcome step_frame(const NetworkState& s, const Action& a,
                              const EnvConfig& cfg, Rng& rng) {
  if (!action_feasible(a, s.busy_slots, cfg))
    throw std::invalid_argument("step_frame: infeasible action");
  const int n = cfg.n();
  StepOutcome out;
  out.backscatter_packets.resize(static_cast<std::size_t>(n));
  out.active_packets.resize(static_cast<std::size_t>(n));
  out.dropped.resize(static_cast<std::size_t>(n));
  out.next.queue.resize(static_cast<std::size_t>(n));
  out.next.energy.resize(static_cast<std::size_t>(n));

  std::vector<int> q2(static_cast<std::size_t>(n));
  std::vector<int> c2(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    const STConfig& st = cfg.sts[u];
    const PhaseResult busy = busy_transition(s.queue[u], s.energy[u],
                                             a.backscatter[u], s.busy_slots, st);
    const PhaseResult idle =
        idle_transition(busy.queue, busy.energy, a.active[u], st);
    out.backscatter_packets[u] = busy.delivered;
    out.active_packets[u] = idle.delivered;
    out.reward += busy.delivered + idle.delivered;
    q2[u] = idle.queue;
    c2[u] = idle.energy;
  }

  out.arrivals = sample_arrivals(cfg, rng);
  for (int i = 0; i < n; ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    const int want = q2[u] + out.arrivals[u];
    out.next.queue[u] = std::min(cfg.sts[u].queue_capacity, want);
    out.dropped[u] = want - out.next.queue[u];
    out.next.energy[u] = c2[u];
  }
  out.next.busy_slots = sample_channel(cfg, rng);
  return out;
}

// Normalized observation vector [b/K, q_1/Q_1, c_1/C_1, ...], length 1 + 2N.
inline std::vector<double> encode_state(const NetworkState& s,
                                        const EnvConfig& cfg) {
  std::vector<double> x;
  x.reserve(static_cast<std::size_t>(1 + 2 * cfg.n()));
  x.push_back(static_cast<double>(s.busy_slots) /
              static_cast<double>(cfg.slots_per_frame));
  for (int i = 0; i < cfg.n(); ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    x.push_back(static_cast<double>(s.queue[u]) /
                static_cast<double>(cfg.sts[u].queue_capacity));
    x.push_back(static_cast<double>(s.energy[u]) /
                static_cast<double>(cfg.sts[u].energy_capacity));
  }
  return x;
}

// Empty queues, discharged storage, fresh channel draw.
inline NetworkState reset_state(const EnvConfig& cfg, Rng& rng) {
  NetworkState s;
  s.queue.assign(static_cast<std::size_t>(cfg.n()), 0);
  s.energy.assign(static_cast<std::size_t>(cfg.n()), 0);
  s.busy_slots = sample_channel(cfg, rng);
  return s;
}

}  // namespace bsdqn
