#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "catn/channel.hpp"
#include "catn/encoding.hpp"
#include "catn/learners.hpp"

namespace catn {

struct Scenario {
  std::string name = "reference";

  // network
  int numBs = 7;
  int numTu = 21;
  int numAu = 2;
  int mh = 4;
  int mv = 4;

  // radio, all powers in watts
  double carrierHz = 2e9;
  double bandwidthHz = 10e6;
  double noiseW = 3.98e-14;
  double pMaxW = 20.0;
  double iMaxW = 1.6e-13;
  double alpha = 0.64;
  double kappaDb = 15.0;
  double zetaR = 0.4;
  double slotSeconds = 0.02;
  int slots = 6000;

  // geometry
  double bsHeight = 30.0;
  double tuHeight = 1.5;
  double auHeight = 10000.0;
  double auSpeed = 250.0;
  double interSiteDistance = 500.0;
  double tuSpeed = 1.5;
  double tuMinRadius = 60.0;
  double tuMaxRadius = 240.0;
  double auLateralOffset = 2000.0;
  std::uint64_t topologySeed = 1;

  // encoding
  int codebookSize = 128;
  int compression = 4;
  encoding::SetSizes sets;
  encoding::ActionScales scales;

  // agents
  std::vector<int> bsHidden{512, 128, 64};
  std::vector<int> tuHidden{64, 32};
  int bsMemory = 50;
  learners::CupHyper cup;
  learners::D3qnHyper d3qn;
  double penaltyZeta = 1.0;

  int numAntennas() const { return mh * mv; }
  channel::ChannelParams channel_params() const;
  encoding::EncodingConfig encoding_config() const;
  void validate() const;
};

/// Reference defaults overridden by the keys present in an INI text. Unknown
/// sections or keys are rejected.
Scenario parse_scenario(const std::string& iniText);
Scenario load_scenario(const std::string& path);

/// Writes every key, so the output reloads to an identical scenario.
std::string scenario_to_ini(const Scenario& s);

/// Hexagonal BS layout, TUs walking small circles near a home BS, AUs flying
/// straight east-west lines across the area centered on the middle of the run.
channel::Topology build_topology(const Scenario& s);

}  // namespace catn
