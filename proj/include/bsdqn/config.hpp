#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace bsdqn {

// Per-transmitter physical parameters. Packets and energy are integer units.
struct STConfig {
  int queue_capacity = 10;    // Q_n, packets the data queue can hold
  int energy_capacity = 10;   // C_n, energy units the storage can hold
  int backscatter_rate = 1;   // d_b, packets reflected per backscatter slot
  int harvest_rate = 1;       // e_h, energy units gained per harvest slot
  int active_rate = 2;        // d_a, packets sent per active slot
  int active_cost = 1;        // e_a, energy units spent per active slot
  double arrival_prob = 0.5;  // lambda_n, per-slot packet arrival probability
};

struct BetaAtom {
  int beta = 1;       // idle slots in the frame
  double prob = 1.0;  // probability of drawing this beta
};

// uniform over beta = 1 .. k-1
inline std::vector<BetaAtom> uniform_idle_support(int k) {
  std::vector<BetaAtom> s;
  s.reserve(static_cast<std::size_t>(k - 1));
  for (int beta = 1; beta < k; ++beta)
    s.push_back({beta, 1.0 / static_cast<double>(k - 1)});
  return s;
}

struct EnvConfig {
  int slots_per_frame = 10;  // K
  std::vector<STConfig> sts;
  std::vector<BetaAtom> idle_slot_support;  // channel idle-slot distribution
  int frames_per_episode = 200;             // horizon T

  int n() const { return static_cast<int>(sts.size()); }

  int min_beta() const {
    int m = slots_per_frame;
    for (const auto& a : idle_slot_support) m = std::min(m, a.beta);
    return m;
  }
  int max_beta() const {
    int m = 0;
    for (const auto& a : idle_slot_support) m = std::max(m, a.beta);
    return m;
  }
  int min_busy() const { return slots_per_frame - max_beta(); }
  int max_busy() const { return slots_per_frame - min_beta(); }

  // Distinct busy-slot counts, ascending. Duplicate beta atoms collapse.
  std::vector<int> busy_support() const {
    std::vector<int> bs;
    for (const auto& a : idle_slot_support) {
      int b = slots_per_frame - a.beta;
      bool seen = false;
      for (int x : bs) seen = seen || (x == b);
      if (!seen) bs.push_back(b);
    }
    std::sort(bs.begin(), bs.end());
    return bs;
  }

  void validate() const {
    if (slots_per_frame < 2)
      throw std::invalid_argument("slots_per_frame must be at least 2");
    if (sts.empty()) throw std::invalid_argument("need at least one ST");
    if (frames_per_episode < 1)
      throw std::invalid_argument("frames_per_episode must be positive");
    if (idle_slot_support.empty())
      throw std::invalid_argument("idle_slot_support must be non-empty");
    double psum = 0.0;
    for (const auto& a : idle_slot_support) {
      if (a.beta < 1 || a.beta > slots_per_frame - 1)
        throw std::invalid_argument("idle slots must lie in [1, K-1]");
      if (a.prob < 0.0) throw std::invalid_argument("negative channel probability");
      psum += a.prob;
    }
    if (std::abs(psum - 1.0) > 1e-12)
      throw std::invalid_argument("channel probabilities must sum to 1");
    for (std::size_t i = 0; i < sts.size(); ++i) {
      const auto& st = sts[i];
      const std::string tag = "st." + std::to_string(i + 1) + ".";
      if (st.queue_capacity < 1)
        throw std::invalid_argument(tag + "queue_capacity must be >= 1");
      if (st.energy_capacity < 1)
        throw std::invalid_argument(tag + "energy_capacity must be >= 1");
      if (st.backscatter_rate < 0 || st.harvest_rate < 0 || st.active_rate < 0 ||
          st.active_cost < 0)
        throw std::invalid_argument(tag + "rates must be non-negative");
      if (st.arrival_prob < 0.0 || st.arrival_prob > 1.0)
        throw std::invalid_argument(tag + "lambda must lie in [0, 1]");
    }
  }

  // Stock simulation setting: K=10, beta uniform on [1,9], arrival
  // probabilities spread evenly across [0.1, 0.9].
  static EnvConfig defaults(int n_st) {
    EnvConfig cfg;
    cfg.slots_per_frame = 10;
    cfg.idle_slot_support = uniform_idle_support(10);
    cfg.frames_per_episode = 200;
    cfg.sts.resize(static_cast<std::size_t>(n_st));
    for (int i = 0; i < n_st; ++i) {
      double lam = n_st == 1 ? 0.5
                             : 0.1 + 0.8 * static_cast<double>(i) /
                                         static_cast<double>(n_st - 1);
      cfg.sts[static_cast<std::size_t>(i)].arrival_prob = lam;
    }
    return cfg;
  }
};

}  // namespace bsdqn
