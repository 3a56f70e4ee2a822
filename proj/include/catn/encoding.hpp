#pragma once

#include <string>
#include <vector>

#include "catn/phy.hpp"

namespace catn::encoding {

using phy::AssociationMap;
using phy::BeamformerSet;
using phy::PhySnapshot;

// --- Codebook compression --------------------------------------------------

/// DFT codebook F = [f_0, ..., f_{C-1}], f_c[m] = e^{j 2 pi m c / C} / sqrt(M).
class Codebook {
 public:
  Codebook(int numAntennas, int size, int compression);

  int size() const { return size_; }
  int compression() const { return compression_; }
  const CMat& matrix() const { return f_; }

 private:
  int size_;
  int compression_;
  CMat f_;
};

/// Top-N_c codebook projections, |d| descending, ties to the lower index.
struct CompressedChannel {
  std::vector<int> index;
  std::vector<Complex> coeff;
};

CompressedChannel compress_channel(const CVec& h, const Codebook& cb);

// --- Interferer / victim sets -----------------------------------------------

struct SetSizes {
  int bIn = 4;       // interferer BSs per TU
  int bInPri = 5;    // interferer BSs per AU
  int kIn = 3;       // severely interfered TUs per BS
  int kOut = 3;      // victim TUs per BS = kOut * bIn
};

struct InterfererSets {
  std::vector<std::vector<int>> tuInterferers;  // per TU k: B_k^in
  std::vector<std::vector<int>> bsSevere;       // per BS n: U_n^in
  std::vector<std::vector<int>> auInterferers;  // per AU l: B_l^{in,pri}
  std::vector<std::vector<int>> bsVictims;      // per BS n: U_n^out
};

/// Indices of the `count` largest values, descending, ties to the lower index.
std::vector<int> top_indices(const Vec& values, int count);

/// tuStrengths is N x K (||h||^2), auStrengths N x L (||g||^2); both are only
/// consulted when the interference-based ranking is all zero.
InterfererSets select_interferer_sets(const PhySnapshot& snap, const AssociationMap& assoc,
                                      const Mat& tuStrengths, const Mat& auStrengths,
                                      const SetSizes& sizes);

// --- Observations ----------------------------------------------------------

struct ObsField {
  std::string name;
  int offset = 0;
  int length = 0;
};

struct ObsLayout {
  std::vector<ObsField> fields;
  int size = 0;

  const ObsField& field(const std::string& name) const;
};

struct EncodingConfig {
  int numBs = 0;
  int numTu = 0;
  int numAu = 0;
  int codebookSize = 128;
  int compression = 4;
  SetSizes sets;
  double pMax = 20.0;
  double iMax = 1.6e-13;
  double noiseRef = 3.98e-14;
};

/// Everything one slot leaves behind for the next slot's observations.
struct SlotInfo {
  AssociationMap assoc;
  PhySnapshot phy;
  std::vector<CompressedChannel> compressed;     // N * K, index n * K + k
  std::vector<channel::AuLinkStats> auStats;     // N * L
  InterfererSets sets;
};

ObsLayout bs_observation_layout(const EncodingConfig& cfg);
ObsLayout tu_observation_layout(const EncodingConfig& cfg);

/// Observation of BS n at slot t. `now` carries the slot-t association,
/// compressed CSI and AU statistics; all t-1 blocks are read from `prev`
/// (zeros when prev is null).
Vec build_bs_observation(const EncodingConfig& cfg, int n, const AssociationMap& assocNow,
                         const std::vector<CompressedChannel>& compressedNow,
                         const std::vector<channel::AuLinkStats>& auStatsNow,
                         const SlotInfo* prev);

/// Observation of TU k at slot t; strengthsNow are ||h_{n,k}(t)||^2 for all n.
Vec build_tu_observation(const EncodingConfig& cfg, int k, const Vec& strengthsNow,
                         const SlotInfo* prev);

// --- Actions ---------------------------------------------------------------

struct ActionScales {
  double alphaMax = 10.0;
  double muMax = 10.0;
  double etaMax = 1.0;
  double etaFloor = 1e-9;
  double minFraction = 1e-6;  // lower clip for q_total and the q shares
};

struct DecodedAction {
  double qTotal = 0.0;
  Vec share;  // q_{n,k} renormalized over associated TUs (zero elsewhere)
  Vec alpha;
  double eta = 0.0;
  Vec mu;
};

inline int bs_action_dim(int numTu, int numAu) { return 2 * numTu + numAu + 2; }

DecodedAction parse_bs_action(const Vec& raw, int n, const AssociationMap& assoc, int numAu,
                              const ActionScales& scales);

/// Writes w_k for every k in K_n into bf. D~ is assembled from unit-norm
/// channel directions, so alpha and mu weight directions, not gains.
DecodedAction decode_bs_action(const Vec& raw, int n, const AssociationMap& assoc,
                               const phy::ChannelSet& ch, double pMax, const ActionScales& scales,
                               BeamformerSet& bf);

// --- Rewards and costs -----------------------------------------------------

double bs_reward(const PhySnapshot& snap, const AssociationMap& assoc, int n,
                 const std::vector<int>& victims);

Vec bs_cost(const PhySnapshot& snap, double iMax);

double penalty_reward(double reward, const Vec& cost, double zeta);

/// victimsOfServing is U^out of TU k's serving BS.
double tu_reward(const PhySnapshot& snap, int k, bool handover, double zetaR,
                 const std::vector<int>& victimsOfServing);

}  // namespace catn::encoding
