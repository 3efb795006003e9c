#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "bsdqn/trainer.hpp"

namespace bsdqn {

// Per-episode training metrics, one row per episode. Floats carry 6
// significant digits; rewards are integer-valued so the reward column
// reparses exactly.
inline void write_metrics_csv(const std::string& path,
                              const std::vector<EpisodeRecord>& records) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open metrics file: " + path);
  f << "episode,steps,reward_pkts,mean_loss,epsilon,wall_ms\n";
  char buf[160];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.6g,%.6g,%.6g,%.6g\n", r.episode,
                  r.steps, r.reward_pkts, r.mean_loss, r.epsilon, r.wall_ms);
    f << buf;
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace bsdqn
