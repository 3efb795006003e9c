#pragma once

#include <cctype>
#include <climits>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bsdqn/agent.hpp"
#include "bsdqn/trainer.hpp"

namespace bsdqn {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& msg, const std::string& key, int line)
      : std::runtime_error(line > 0 ? msg + " (key '" + key + "', line " +
                                          std::to_string(line) + ")"
                                    : msg + " (key '" + key + "')"),
        key_(key),
        line_(line) {}
  const std::string& key() const { return key_; }
  int line() const { return line_; }

 private:
  std::string key_;
  int line_;
};

// Everything one run needs: environment, agent, harness, seed, output.
struct RunConfig {
  EnvConfig env = EnvConfig::defaults(2);
  AgentConfig agent;
  HarnessConfig harness;
  std::uint64_t seed = 1;
  std::string out_dir;

  void validate() const {
    env.validate();
    agent.validate();
    harness.validate();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

struct RawEntry {
  std::string value;
  int line = 0;
};

inline long parse_long(const std::string& v, const std::string& key, int line) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);  // accepts 5e5 style counts
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    const long l = static_cast<long>(d);
    if (static_cast<double>(l) != d)
      throw std::invalid_argument("not an integer");
    return l;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse integer '" + v + "'", key, line);
  }
}

inline double parse_double(const std::string& v, const std::string& key,
                           int line) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse number '" + v + "'", key, line);
  }
}

// shortest representation that parses back to the same double
inline std::string fmt_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// Plain-text "key = value" configuration with '#' comments. Unknown keys are
// rejected with their line number; missing keys take the published defaults.
inline RunConfig parse_config_text(const std::string& text) {
  std::map<std::string, detail::RawEntry> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected 'key = value'", line, lineno);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("expected 'key = value'", key, lineno);
    kv[key] = {value, lineno};
  }

  RunConfig cfg;
  auto take = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) return std::optional<detail::RawEntry>{};
    auto entry = std::optional<detail::RawEntry>{it->second};
    kv.erase(it);
    return entry;
  };
  auto take_long = [&](const std::string& key, long def, long lo = LONG_MIN,
                       long hi = LONG_MAX) {
    auto e = take(key);
    const long v = e ? detail::parse_long(e->value, key, e->line) : def;
    if (v < lo || v > hi)
      throw ConfigError("value " + std::to_string(v) + " outside [" +
                            std::to_string(lo) + ", " + std::to_string(hi) + "]",
                        key, e ? e->line : 0);
    return v;
  };
  auto take_double = [&](const std::string& key, double def, double lo = -1e300,
                         double hi = 1e300) {
    auto e = take(key);
    const double v = e ? detail::parse_double(e->value, key, e->line) : def;
    if (v < lo || v > hi)
      throw ConfigError("value " + detail::fmt_double(v) + " outside [" +
                            detail::fmt_double(lo) + ", " +
                            detail::fmt_double(hi) + "]",
                        key, e ? e->line : 0);
    return v;
  };

  // environment
  const long n_st = take_long("n_st", 2);
  if (n_st < 1) throw ConfigError("n_st must be >= 1", "n_st", 0);
  cfg.env = EnvConfig::defaults(static_cast<int>(n_st));
  cfg.env.slots_per_frame = static_cast<int>(take_long("k", 10, 2, 64));
  const long idle_min = take_long("idle_min", 1);
  const long idle_max =
      take_long("idle_max", cfg.env.slots_per_frame - 1);
  if (idle_min > idle_max || idle_min < 1 ||
      idle_max > cfg.env.slots_per_frame - 1)
    throw ConfigError("idle range must satisfy 1 <= idle_min <= idle_max <= k-1",
                      "idle_min", 0);
  cfg.env.idle_slot_support.clear();
  for (long beta = idle_min; beta <= idle_max; ++beta)
    cfg.env.idle_slot_support.push_back(
        {static_cast<int>(beta), 1.0 / static_cast<double>(idle_max - idle_min + 1)});
  cfg.env.frames_per_episode =
      static_cast<int>(take_long("frames_per_episode", 200, 1, 1000000));

  for (int i = 1; i <= n_st; ++i) {
    STConfig& st = cfg.env.sts[static_cast<std::size_t>(i - 1)];
    const std::string p = "st." + std::to_string(i) + ".";
    st.arrival_prob = take_double(p + "lambda", st.arrival_prob, 0.0, 1.0);
    st.queue_capacity = static_cast<int>(
        take_long(p + "queue_capacity", st.queue_capacity, 1, 1000));
    st.energy_capacity = static_cast<int>(
        take_long(p + "energy_capacity", st.energy_capacity, 1, 1000));
    st.backscatter_rate = static_cast<int>(
        take_long(p + "backscatter_rate", st.backscatter_rate, 0, 1000));
    st.harvest_rate = static_cast<int>(
        take_long(p + "harvest_rate", st.harvest_rate, 0, 1000));
    st.active_rate = static_cast<int>(
        take_long(p + "active_rate", st.active_rate, 0, 1000));
    st.active_cost = static_cast<int>(
        take_long(p + "active_cost", st.active_cost, 0, 1000));
  }

  // agent
  if (auto e = take("variant")) {
    try {
      cfg.agent.variant = parse_variant(e->value);
    } catch (const std::exception& ex) {
      throw ConfigError(ex.what(), "variant", e->line);
    }
  }
  cfg.agent.gamma = take_double("gamma", 0.9, 0.0, 1.0 - 1e-12);
  cfg.agent.batch_size = static_cast<int>(take_long("batch_size", 32, 1, 100000));
  cfg.agent.replay_capacity = static_cast<std::size_t>(
      take_long("replay_capacity", 500'000, 1, 100'000'000));
  cfg.agent.epsilon.start = take_double("epsilon_start", 0.9, 0.0, 1.0);
  cfg.agent.epsilon.end = take_double("epsilon_end", 0.0, 0.0, 1.0);
  cfg.agent.epsilon.decay_steps =
      take_long("epsilon_decay_steps", 400'000, 1, LONG_MAX);
  if (auto e = take("target_sync")) {
    if (e->value == "hard")
      cfg.agent.sync = SyncMode::hard;
    else if (e->value == "soft")
      cfg.agent.sync = SyncMode::soft;
    else
      throw ConfigError("target_sync must be 'hard' or 'soft'", "target_sync",
                        e->line);
  }
  cfg.agent.sync_interval = take_long("target_sync_interval", 10'000, 1, LONG_MAX);
  cfg.agent.soft_tau = take_double("target_soft_tau", 1e-4, 1e-300, 1.0);
  if (auto e = take("optimizer")) {
    if (e->value == "adam")
      cfg.agent.optimizer = OptimizerKind::adam;
    else if (e->value == "sgd")
      cfg.agent.optimizer = OptimizerKind::sgd;
    else
      throw ConfigError("optimizer must be 'adam' or 'sgd'", "optimizer",
                        e->line);
  }
  cfg.agent.learning_rate = take_double("learning_rate", 0.0, 0.0, 1e6);
  const int hidden = static_cast<int>(take_long("hidden_neurons", 32));
  const int layers = static_cast<int>(take_long("hidden_layers", 1));
  if (hidden < 1 || layers < 1)
    throw ConfigError("hidden_neurons and hidden_layers must be >= 1",
                      "hidden_neurons", 0);
  cfg.agent.hidden.assign(static_cast<std::size_t>(layers), hidden);
  cfg.agent.learn_start = take_long("learn_start", 1000, 0, LONG_MAX);

  // harness
  cfg.harness.training_iterations =
      take_long("training_iterations", 1'000'000, 0, LONG_MAX);
  cfg.harness.convergence_window =
      static_cast<int>(take_long("convergence_window", 100, 1, 1000000));
  cfg.harness.convergence_rel_tol =
      take_double("convergence_rel_tol", 0.05, 0.0, 1e6);
  cfg.harness.convergence_grace =
      static_cast<int>(take_long("convergence_grace", 100, 0, 1000000));
  cfg.harness.eval_episodes =
      static_cast<int>(take_long("eval_episodes", 30, 1, 1000000));
  cfg.harness.stop_on_convergence = take_long("stop_on_convergence", 1) != 0;
  cfg.seed = static_cast<std::uint64_t>(take_long("seed", 1));

  if (!kv.empty()) {
    const auto& [key, entry] = *kv.begin();
    throw ConfigError("unknown key", key, entry.line);
  }

  try {
    cfg.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what(), "<validation>", 0);
  }
  return cfg;
}

inline RunConfig parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config file: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str());
}

// Full key = value dump; reparsing reproduces the run bit-exactly with the
// same seed.
inline std::string resolved_snapshot(const RunConfig& cfg) {
  using detail::fmt_double;
  std::ostringstream o;
  o << "# resolved run configuration\n";
  o << "seed = " << cfg.seed << "\n";
  o << "n_st = " << cfg.env.n() << "\n";
  o << "k = " << cfg.env.slots_per_frame << "\n";
  o << "idle_min = " << cfg.env.min_beta() << "\n";
  o << "idle_max = " << cfg.env.max_beta() << "\n";
  o << "frames_per_episode = " << cfg.env.frames_per_episode << "\n";
  for (int i = 1; i <= cfg.env.n(); ++i) {
    const STConfig& st = cfg.env.sts[static_cast<std::size_t>(i - 1)];
    const std::string p = "st." + std::to_string(i) + ".";
    o << p << "lambda = " << fmt_double(st.arrival_prob) << "\n";
    o << p << "queue_capacity = " << st.queue_capacity << "\n";
    o << p << "energy_capacity = " << st.energy_capacity << "\n";
    o << p << "backscatter_rate = " << st.backscatter_rate << "\n";
    o << p << "harvest_rate = " << st.harvest_rate << "\n";
    o << p << "active_rate = " << st.active_rate << "\n";
    o << p << "active_cost = " << st.active_cost << "\n";
  }
  o << "variant = " << variant_name(cfg.agent.variant) << "\n";
  o << "gamma = " << fmt_double(cfg.agent.gamma) << "\n";
  o << "batch_size = " << cfg.agent.batch_size << "\n";
  o << "replay_capacity = " << cfg.agent.replay_capacity << "\n";
  o << "epsilon_start = " << fmt_double(cfg.agent.epsilon.start) << "\n";
  o << "epsilon_end = " << fmt_double(cfg.agent.epsilon.end) << "\n";
  o << "epsilon_decay_steps = " << cfg.agent.epsilon.decay_steps << "\n";
  o << "target_sync = "
    << (cfg.agent.sync == SyncMode::hard ? "hard" : "soft") << "\n";
  o << "target_sync_interval = " << cfg.agent.sync_interval << "\n";
  o << "target_soft_tau = " << fmt_double(cfg.agent.soft_tau) << "\n";
  o << "optimizer = "
    << (cfg.agent.optimizer == OptimizerKind::adam ? "adam" : "sgd") << "\n";
  o << "learning_rate = " << fmt_double(cfg.agent.resolved_lr()) << "\n";
  o << "hidden_neurons = " << cfg.agent.hidden.front() << "\n";
  o << "hidden_layers = " << cfg.agent.hidden.size() << "\n";
  o << "learn_start = " << cfg.agent.learn_start << "\n";
  o << "training_iterations = " << cfg.harness.training_iterations << "\n";
  o << "convergence_window = " << cfg.harness.convergence_window << "\n";
  o << "convergence_rel_tol = " << fmt_double(cfg.harness.convergence_rel_tol) << "\n";
  o << "convergence_grace = " << cfg.harness.convergence_grace << "\n";
  o << "eval_episodes = " << cfg.harness.eval_episodes << "\n";
  o << "stop_on_convergence = " << (cfg.harness.stop_on_convergence ? 1 : 0)
    << "\n";
  return o.str();
}

}  // namespace bsdqn
