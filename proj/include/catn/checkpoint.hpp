#pragma once

#include <string>

#include "catn/harness.hpp"

namespace catn::checkpoint {

/// Text container: embedded scenario, layer sizes, every parameter and
/// optimizer moment in hexfloat, agent RNG states, epsilon, nu and the slot
/// counter. Replay memories and trajectory buffers are not stored, and the
/// slot counter is only recorded: a loaded simulation starts at slot 0.
std::string serialize(Simulation& sim);

/// Loads agent state into a simulation built for the same scenario and
/// scheme. Throws on any shape or scheme mismatch.
void deserialize(Simulation& sim, const std::string& text);

void save(Simulation& sim, const std::string& path, bool force);
void load(Simulation& sim, const std::string& path);

/// Scenario and scheme recorded in a checkpoint file.
struct Header {
  Scenario scenario;
  SchemeSpec scheme;
  std::uint64_t seed = 0;
  int slot = 0;
};
Header read_header(const std::string& path);

}  // namespace catn::checkpoint
