#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsdqn/env.hpp"
#include "bsdqn/mdp.hpp"
#include "bsdqn/nn.hpp"

namespace bsdqn {

// One replay tuple. next_busy carries the successor's busy-slot count so TD
// targets can mask infeasible actions.
struct Experience {
  std::vector<double> state;
  int action = 0;
  double reward = 0.0;
  std::vector<double> next_state;
  int next_busy = 0;
  bool terminal = false;
};

// Ring storage, oldest entries overwritten first. Stored column-wise so a
// sampled batch assembles straight into matrices.
class ReplayBuffer {
 public:
  ReplayBuffer(int state_dim, std::size_t capacity = 500'000)
      : dim_(state_dim), capacity_(capacity) {
    if (state_dim < 1 || capacity < 1)
      throw std::invalid_argument("ReplayBuffer: bad dimensions");
    states_.resize(static_cast<Eigen::Index>(dim_),
                   static_cast<Eigen::Index>(capacity_));
    next_states_.resize(static_cast<Eigen::Index>(dim_),
                        static_cast<Eigen::Index>(capacity_));
    actions_.resize(capacity_);
    rewards_.resize(capacity_);
    next_busy_.resize(capacity_);
    terminal_.resize(capacity_);
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return fill_; }

  void push(const Experience& e) {
    if (static_cast<int>(e.state.size()) != dim_ ||
        static_cast<int>(e.next_state.size()) != dim_)
      throw std::invalid_argument("ReplayBuffer: state dimension mismatch");
    const Eigen::Index col = static_cast<Eigen::Index>(cursor_);
    for (int i = 0; i < dim_; ++i) {
      states_(i, col) = e.state[static_cast<std::size_t>(i)];
      next_states_(i, col) = e.next_state[static_cast<std::size_t>(i)];
    }
    actions_[cursor_] = e.action;
    rewards_[cursor_] = e.reward;
    next_busy_[cursor_] = e.next_busy;
    terminal_[cursor_] = e.terminal ? 1 : 0;
    cursor_ = (cursor_ + 1) % capacity_;
    if (fill_ < capacity_) ++fill_;
  }

  Experience at_slot(std::size_t slot) const {
    Experience e;
    const Eigen::Index col = static_cast<Eigen::Index>(slot);
    e.state.resize(static_cast<std::size_t>(dim_));
    e.next_state.resize(static_cast<std::size_t>(dim_));
    for (int i = 0; i < dim_; ++i) {
      e.state[static_cast<std::size_t>(i)] = states_(i, col);
      e.next_state[static_cast<std::size_t>(i)] = next_states_(i, col);
    }
    e.action = actions_[slot];
    e.reward = rewards_[slot];
    e.next_busy = next_busy_[slot];
    e.terminal = terminal_[slot] != 0;
    return e;
  }

  struct Batch {
    Eigen::MatrixXd states, next_states;
    std::vector<int> actions;
    Eigen::VectorXd rewards;
    std::vector<int> next_busy;
    std::vector<std::uint8_t> terminal;
    std::vector<std::size_t> slots;
  };

  // Uniform over filled slots, without replacement within the call.
  Batch sample(int batch, Rng& rng) const {
    if (batch < 1 || static_cast<std::size_t>(batch) > fill_)
      throw std::logic_error("ReplayBuffer: not enough experiences to sample");
    Batch b;
    b.slots.reserve(static_cast<std::size_t>(batch));
    while (static_cast<int>(b.slots.size()) < batch) {
      const std::size_t slot = static_cast<std::size_t>(
          uniform_int(rng, 0, static_cast<int>(fill_) - 1));
      bool dup = false;
      for (std::size_t s : b.slots) dup = dup || s == slot;
      if (!dup) b.slots.push_back(slot);
    }
    b.states.resize(static_cast<Eigen::Index>(dim_), batch);
    b.next_states.resize(static_cast<Eigen::Index>(dim_), batch);
    b.rewards.resize(batch);
    for (int j = 0; j < batch; ++j) {
      const Eigen::Index col = static_cast<Eigen::Index>(b.slots[static_cast<std::size_t>(j)]);
      b.states.col(j) = states_.col(col);
      b.next_states.col(j) = next_states_.col(col);
      b.rewards(j) = rewards_[static_cast<std::size_t>(col)];
      b.actions.push_back(actions_[static_cast<std::size_t>(col)]);
      b.next_busy.push_back(next_busy_[static_cast<std::size_t>(col)]);
      b.terminal.push_back(terminal_[static_cast<std::size_t>(col)]);
    }
    return b;
  }

 private:
  int dim_;
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::size_t fill_ = 0;
  Eigen::MatrixXd states_, next_states_;
  std::vector<int> actions_;
  std::vector<double> rewards_;
  std::vector<int> next_busy_;
  std::vector<std::uint8_t> terminal_;
};

// Linear decay, clamped to [end, start].
struct EpsilonSchedule {
  double start = 0.9;
  double end = 0.0;
  long decay_steps = 400'000;

  double at(long step) const {
    if (step <= 0) return start;
    if (step >= decay_steps) return end;
    return start + (end - start) * static_cast<double>(step) /
                       static_cast<double>(decay_steps);
  }
  void validate() const {
    if (start < end || end < 0.0 || start > 1.0)
      throw std::invalid_argument("epsilon schedule needs 0 <= end <= start <= 1");
    if (decay_steps < 1)
      throw std::invalid_argument("epsilon decay steps must be positive");
  }
};

enum class Variant { dqn, double_dqn, duel, double_duel };

inline bool variant_uses_double(Variant v) {
  return v == Variant::double_dqn || v == Variant::double_duel;
}
inline bool variant_uses_duel(Variant v) {
  return v == Variant::duel || v == Variant::double_duel;
}
inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::dqn: return "dqn";
    case Variant::double_dqn: return "double";
    case Variant::duel: return "duel";
    case Variant::double_duel: return "doubleduel";
  }
  return "dqn";
}
inline Variant parse_variant(const std::string& s) {
  if (s == "dqn") return Variant::dqn;
  if (s == "double") return Variant::double_dqn;
  if (s == "duel") return Variant::duel;
  if (s == "doubleduel") return Variant::double_duel;
  throw std::invalid_argument("unknown agent variant '" + s + "'");
}

enum class SyncMode { hard, soft };

struct AgentConfig {
  Variant variant = Variant::dqn;
  double gamma = 0.9;
  int batch_size = 32;
  SyncMode sync = SyncMode::hard;
  long sync_interval = 10'000;  // hard copies every L- steps
  double soft_tau = 1e-4;
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 0.0;  // 0 binds by optimizer: adam 1e-4, sgd 1e-3
  std::vector<int> hidden{32};
  std::size_t replay_capacity = 500'000;
  EpsilonSchedule epsilon;
  long learn_start = 1000;

  double resolved_lr() const {
    if (learning_rate > 0.0) return learning_rate;
    return optimizer == OptimizerKind::adam ? 1e-4 : 1e-3;
  }
  void validate() const {
    if (gamma < 0.0 || gamma >= 1.0)
      throw std::invalid_argument("gamma must lie in [0, 1)");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (sync_interval < 1)
      throw std::invalid_argument("target_sync_interval must be >= 1");
    if (soft_tau <= 0.0 || soft_tau > 1.0)
      throw std::invalid_argument("target_soft_tau must lie in (0, 1]");
    if (learning_rate < 0.0)
      throw std::invalid_argument("learning_rate must be positive");
    if (hidden.empty()) throw std::invalid_argument("need a hidden layer");
    for (int h : hidden)
      if (h < 1) throw std::invalid_argument("hidden width must be >= 1");
    epsilon.validate();
  }
};

// Epsilon-greedy over the feasible actions for busy count b. Greedy masks
// infeasible actions to -inf; argmax ties break to the lowest index.
inline int select_action(const QNetwork& net, const ActionSpace& space,
                         const Eigen::VectorXd& x, int b, double eps,
                         Rng& rng) {
  const auto& feasible = space.feasible_indices(b);
  if (eps > 0.0 && uniform01(rng) < eps)
    return feasible[static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<int>(feasible.size()) - 1))];
  const Eigen::VectorXd q = net.forward(x);
  int best = feasible.front();
  double best_q = -std::numeric_limits<double>::infinity();
  for (int ai : feasible)
    if (q(ai) > best_q) {
      best_q = q(ai);
      best = ai;
    }
  return best;
}

// TD targets: terminal samples take y = r; vanilla values the feasible
// argmax of the target net; double selects with the online net and values
// with the target net.
inline Eigen::VectorXd compute_targets(Variant variant, const QNetwork& online,
                                       const QNetwork& target,
                                       const ReplayBuffer::Batch& batch,
                                       double gamma, const ActionSpace& space) {
  const Eigen::Index n = batch.rewards.size();
  Eigen::VectorXd y(n);
  const Eigen::MatrixXd tq = target.forward_batch(batch.next_states);
  Eigen::MatrixXd oq;
  if (variant_uses_double(variant)) oq = online.forward_batch(batch.next_states);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (batch.terminal[static_cast<std::size_t>(i)]) {
      y(i) = batch.rewards(i);
      continue;
    }
    const auto& feasible =
        space.feasible_indices(batch.next_busy[static_cast<std::size_t>(i)]);
    double value;
    if (variant_uses_double(variant)) {
      int best = feasible.front();
      double best_q = -std::numeric_limits<double>::infinity();
      for (int ai : feasible)
        if (oq(ai, i) > best_q) {
          best_q = oq(ai, i);
          best = ai;
        }
      value = tq(best, i);
    } else {
      value = -std::numeric_limits<double>::infinity();
      for (int ai : feasible) value = std::max(value, tq(ai, i));
    }
    y(i) = batch.rewards(i) + gamma * value;
  }
  return y;
}

inline void hard_sync(QNetwork& target, const QNetwork& online) {
  target.params() = online.params();
}
inline void soft_sync(QNetwork& target, const QNetwork& online, double tau) {
  target.params() = tau * online.params() + (1.0 - tau) * target.params();
}

// The learning agent: online/target networks, optimizer, replay memory.
// A single logical actor; selection, storage and learning are serialized.
class DqnAgent {
 public:
  DqnAgent(const EnvConfig& env, const ActionSpace& space, AgentConfig cfg,
           std::uint64_t seed)
      : space_(&space),
        cfg_(std::move(cfg)),
        replay_(1 + 2 * env.n(), cfg_.replay_capacity) {
    cfg_.validate();
    std::vector<int> dims;
    dims.push_back(1 + 2 * env.n());
    for (int h : cfg_.hidden) dims.push_back(h);
    dims.push_back(space.size());
    online_ = QNetwork::init(dims, variant_uses_duel(cfg_.variant),
                             splitmix64(seed));
    target_ = online_;
    opt_ = cfg_.optimizer == OptimizerKind::adam
               ? OptimizerState::adam(cfg_.resolved_lr(), online_.param_count())
               : OptimizerState::sgd(cfg_.resolved_lr());
  }

  const AgentConfig& config() const { return cfg_; }
  const ActionSpace& space() const { return *space_; }
  const QNetwork& online() const { return online_; }
  const QNetwork& target() const { return target_; }
  QNetwork& online_mut() { return online_; }
  QNetwork& target_mut() { return target_; }
  OptimizerState& optimizer() { return opt_; }
  ReplayBuffer& replay() { return replay_; }
  const ReplayBuffer& replay() const { return replay_; }

  int act(const std::vector<double>& state, int b, double eps, Rng& rng) const {
    const Eigen::VectorXd x =
        Eigen::Map<const Eigen::VectorXd>(state.data(),
                                          static_cast<Eigen::Index>(state.size()));
    return select_action(online_, *space_, x, b, eps, rng);
  }

  void remember(const Experience& e) {
    if (e.action < 0 || e.action >= space_->size())
      throw std::invalid_argument("experience action out of range");
    replay_.push(e);
  }

  bool ready() const {
    return replay_.size() >=
           static_cast<std::size_t>(
               std::max<long>(cfg_.batch_size, cfg_.learn_start));
  }

  // One mini-batch update of the online network. The target network is
  // untouched here; sync happens via maybe_sync.
  double learn(Rng& rng) {
    const ReplayBuffer::Batch batch = replay_.sample(cfg_.batch_size, rng);
    return learn_batch(batch);
  }

  double learn_batch(const ReplayBuffer::Batch& batch) {
    const Eigen::VectorXd y = compute_targets(cfg_.variant, online_, target_,
                                              batch, cfg_.gamma, *space_);
    const Eigen::Index n = y.size();
    double loss = 0.0;
    Eigen::VectorXd grad;
    QNetwork::Trace trace;
    if (!online_.dueling()) {
      online_.forward_hidden(batch.states, trace);
      const Eigen::VectorXd q = online_.selected_q(trace.acts.back(), batch.actions);
      Eigen::VectorXd dq(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double err = y(i) - q(i);
        loss += err * err;
        dq(i) = -2.0 * err / static_cast<double>(n);
      }
      loss /= static_cast<double>(n);
      grad = online_.backward_selected(trace, batch.actions, dq);
    } else {
      const Eigen::MatrixXd pred = online_.forward_batch(batch.states, trace);
      TdLoss tl = td_loss(pred, batch.actions, y);
      loss = tl.loss;
      grad = online_.backward(trace, tl.grad);
    }
    apply_gradient(online_, grad, opt_);
    return loss;
  }

  // Hard mode copies the online weights whenever step is a multiple of the
  // sync interval; soft mode blends every step.
  void maybe_sync(long global_step) {
    if (cfg_.sync == SyncMode::hard) {
      if (global_step % cfg_.sync_interval == 0) hard_sync(target_, online_);
    } else {
      soft_sync(target_, online_, cfg_.soft_tau);
    }
  }

 private:
  const ActionSpace* space_;
  AgentConfig cfg_;
  QNetwork online_, target_;
  OptimizerState opt_;
  ReplayBuffer replay_;
};

// Tabular Q-learning baseline on an exactly indexed instance.
class TabularQ {
 public:
  TabularQ(const StateSpace& states, const ActionSpace& space)
      : space_(&space),
        na_(space.size()),
        q_(static_cast<std::size_t>(states.size() * space.size()), 0.0),
        visits_(static_cast<std::size_t>(states.size() * space.size()), 0) {}

  double q(std::int64_t s, int a) const {
    return q_[static_cast<std::size_t>(s * na_ + a)];
  }
  std::uint32_t visits(std::int64_t s, int a) const {
    return visits_[static_cast<std::size_t>(s * na_ + a)];
  }

  int greedy(std::int64_t s, int b) const {
    int best = -1;
    double best_q = -std::numeric_limits<double>::infinity();
    for (int ai : space_->feasible_indices(b))
      if (q(s, ai) > best_q) {
        best_q = q(s, ai);
        best = ai;
      }
    return best;
  }

  int act(std::int64_t s, int b, double eps, Rng& rng) const {
    const auto& feasible = space_->feasible_indices(b);
    if (eps > 0.0 && uniform01(rng) < eps)
      return feasible[static_cast<std::size_t>(
          uniform_int(rng, 0, static_cast<int>(feasible.size()) - 1))];
    return greedy(s, b);
  }

  double max_feasible(std::int64_t s, int b) const {
    double best = -std::numeric_limits<double>::infinity();
    for (int ai : space_->feasible_indices(b)) best = std::max(best, q(s, ai));
    return best;
  }

  // Bellman update with explicit learning rate.
  void update(std::int64_t s, int a, double r, std::int64_t snext, int next_b,
              double alpha, double gamma) {
    const std::size_t idx = static_cast<std::size_t>(s * na_ + a);
    q_[idx] = (1.0 - alpha) * q_[idx] +
              alpha * (r + gamma * max_feasible(snext, next_b));
  }

  // Visit-count decayed learning rate alpha = 1 / (1 + 0.01 * visits(s,a)).
  double scheduled_update(std::int64_t s, int a, double r, std::int64_t snext,
                          int next_b, double gamma) {
    const std::size_t idx = static_cast<std::size_t>(s * na_ + a);
    const double alpha = 1.0 / (1.0 + 0.01 * static_cast<double>(visits_[idx]));
    update(s, a, r, snext, next_b, alpha, gamma);
    ++visits_[idx];
    return alpha;
  }

 private:
  const ActionSpace* space_;
  int na_;
  std::vector<double> q_;
  std::vector<std::uint32_t> visits_;
};

}  // namespace bsdqn
