#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "catn/baselines.hpp"
#include "catn/encoding.hpp"
#include "catn/learners.hpp"
#include "catn/scenario.hpp"

namespace catn {

struct SchemeSpec {
  enum class Ua { kD3qn, kDcd, kSc, kRand };
  enum class Bf { kCup, kPpo, kWmmse, kRand };

  Ua ua = Ua::kD3qn;
  Bf bf = Bf::kCup;

  /// "<ua>-<bf>", e.g. "d3qn-cup", "dcd-wmmse", "rand-rand".
  static SchemeSpec parse(const std::string& text);
  std::string name() const;
  bool learns_bs() const { return bf == Bf::kCup || bf == Bf::kPpo; }
  bool learns_tu() const { return ua == Ua::kD3qn; }
  bool learns() const { return learns_bs() || learns_tu(); }
};

struct SlotRecord {
  int slot = 0;
  double sumRate = 0.0;
  Vec rate;                  // per TU, bit/s/Hz
  Vec rho;                   // per AU, W
  Vec bsReward;              // per BS, as defined for the scheme (before any penalty)
  Vec cost;                  // shared cost vector
  std::vector<int> serving;  // per TU
  std::vector<int> handover; // per TU, 0/1
};

struct PhaseTiming {
  int slot = 0;
  double tuMs = 0.0;
  double bsMs = 0.0;
  double transmitMs = 0.0;
  double totalMs = 0.0;
};

/// One full system: channel model, encoders, agents or optimizers, and the
/// previous slot's exchanged information. step() runs one slot in the order
/// measurement, TU store/update, TU act, BS CSI + exchange, BS store/update,
/// BS act, transmit, rewards/costs.
class Simulation {
 public:
  Simulation(const Scenario& scenario, const SchemeSpec& scheme, std::uint64_t seed);

  /// learn = false freezes all parameters and uses greedy / mean actions.
  SlotRecord step(bool learn);

  int slot() const { return slot_; }
  const Scenario& scenario() const { return sc_; }
  const SchemeSpec& scheme() const { return scheme_; }
  std::uint64_t seed() const { return seed_; }

  std::vector<learners::CupAgent>& bs_agents() { return bsAgents_; }
  std::vector<learners::D3qnAgent>& tu_agents() { return tuAgents_; }

  /// Phase names are appended here as they execute (tests only).
  void set_event_log(std::vector<std::string>* log) { events_ = log; }
  void set_timing(std::vector<PhaseTiming>* timing) { timing_ = timing; }
  /// Statistics of every BS agent update, in agent order.
  void set_update_log(std::vector<learners::UpdateStats>* log) { updates_ = log; }

  /// Last slot's channels and beamformers (tests only).
  const channel::ChannelSet& last_channels() const { return lastChannels_; }
  const phy::BeamformerSet& last_beamformers() const { return lastBf_; }
  const encoding::SlotInfo* last_info() const { return prev_ ? &*prev_ : nullptr; }

 private:
  void log(const char* phase);
  phy::AssociationMap choose_association(const channel::ChannelSet& ch, const Mat& strengths,
                                         bool learn, std::vector<Vec>& tuObs);
  phy::BeamformerSet choose_beamformers(const channel::ChannelSet& ch,
                                        const phy::AssociationMap& assoc,
                                        const std::vector<Vec>& bsObs, bool learn);

  Scenario sc_;
  SchemeSpec scheme_;
  std::uint64_t seed_;
  int slot_ = 0;
  channel::ChannelModel model_;
  encoding::EncodingConfig enc_;
  encoding::Codebook codebook_;
  Vec noise_;

  std::vector<learners::CupAgent> bsAgents_;
  std::vector<learners::D3qnAgent> tuAgents_;
  std::vector<std::vector<learners::Transition>> bsBuffers_;
  Rng baselineRng_;

  // carried between slots
  std::optional<encoding::SlotInfo> prev_;
  std::vector<Vec> prevTuObs_;
  std::vector<double> prevTuReward_;
  std::vector<Vec> prevBsObs_;
  std::vector<Vec> prevBsAction_;
  std::vector<double> prevBsReward_;
  Vec prevCost_;

  channel::ChannelSet lastChannels_;
  phy::BeamformerSet lastBf_;
  std::vector<std::string>* events_ = nullptr;
  std::vector<PhaseTiming>* timing_ = nullptr;
  std::vector<learners::UpdateStats>* updates_ = nullptr;
};

struct RunOptions {
  int slots = 0;            // 0: scenario default
  bool learn = true;
  std::function<void(const SlotRecord&)> onSlot;
  std::vector<PhaseTiming>* timing = nullptr;
};

std::vector<SlotRecord> run(Simulation& sim, const RunOptions& opts);

}  // namespace catn
