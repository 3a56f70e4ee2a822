#pragma once

#include <vector>

#include "catn/channel.hpp"
#include "catn/types.hpp"

namespace catn::phy {

using channel::ChannelSet;

/// Denominator floor (W) for degenerate all-zero-power states.
inline constexpr double kPowerFloor = 1e-30;

/// Serving BS per TU; every TU is served by exactly one BS.
class AssociationMap {
 public:
  AssociationMap() = default;
  AssociationMap(int numBs, std::vector<int> serving);
  static AssociationMap all_to(int numBs, int numTu, int bs);

  int numBs() const { return numBs_; }
  int numTu() const { return static_cast<int>(serving_.size()); }
  int serving(int k) const { return serving_[static_cast<size_t>(k)]; }
  const std::vector<int>& serving() const { return serving_; }
  int chi(int n, int k) const { return serving(k) == n ? 1 : 0; }

  /// K_n: TUs served by BS n, ascending.
  std::vector<int> users(int n) const;
  std::vector<int> loads() const;

  bool operator==(const AssociationMap&) const = default;

 private:
  int numBs_ = 0;
  std::vector<int> serving_;
};

/// Per-TU beamformers w_k (owned by the serving BS).
struct BeamformerSet {
  std::vector<CVec> w;

  static BeamformerSet zeros(int numTu, int numAntennas);
  double power(int k) const { return w[static_cast<size_t>(k)].squaredNorm(); }
  /// Unit-norm direction; zero vector when the beamformer is zero.
  CVec direction(int k) const;
  /// Sum of ||w_k||^2 over K_n.
  double bsPower(const AssociationMap& assoc, int n) const;
};

/// Received-power bookkeeping of one slot.
struct PhySnapshot {
  /// leak(i, k) = |h_{rho_k, i}^H w_k|^2: power of TU k's beam received at TU i.
  Mat leak;
  Mat betaFrom;   // N x K, beta_{j,k}
  Vec noise;      // sigma_k^2
  Vec pr;         // p_k^r
  Vec beta;       // interference plus noise
  Vec gamma;
  Vec rate;
  Vec power;      // p_k
  Vec rho;        // L, total AU interference
  Mat rhoFrom;    // N x L, LoS-inferred per-BS interference

  int numTu() const { return static_cast<int>(pr.size()); }
  int numAu() const { return static_cast<int>(rho.size()); }
  double sumRate() const { return rate.sum(); }
};

struct InterferenceDecomposition {
  Mat betaFrom;
  Vec beta;
  Vec pr;
};

struct AuInterference {
  Vec rho;
  Mat rhoFrom;
};

/// Cross-gain table leak(i, k) for the current association and beamformers.
Mat leakage_matrix(const ChannelSet& ch, const AssociationMap& assoc, const BeamformerSet& bf);

InterferenceDecomposition decompose_interference(const ChannelSet& ch, const AssociationMap& assoc,
                                                 const BeamformerSet& bf, const Vec& noise);

Vec compute_sinr(const ChannelSet& ch, const AssociationMap& assoc, const BeamformerSet& bf,
                 const Vec& noise);

Vec compute_rate(const Vec& gamma);

AuInterference au_interference(const ChannelSet& ch, const AssociationMap& assoc,
                               const BeamformerSet& bf);

/// Everything above in one pass.
PhySnapshot evaluate(const ChannelSet& ch, const AssociationMap& assoc, const BeamformerSet& bf,
                     const Vec& noise);

struct ConstraintReport {
  std::vector<bool> powerOk;      // per BS
  Vec powerMargin;                // P_max - sum p
  std::vector<bool> interferenceOk;  // per AU
  Vec interferenceMargin;         // I_max - rho_l

  bool feasible() const;
};

ConstraintReport check_constraints(const BeamformerSet& bf, const AssociationMap& assoc,
                                   const Vec& rho, double iMax, double pMax);

Vec uniform_noise(int numTu, double sigma2);

}  // namespace catn::phy
