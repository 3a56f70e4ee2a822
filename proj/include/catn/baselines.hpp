#pragma once

#include <optional>
#include <vector>

#include "catn/phy.hpp"

namespace catn::baselines {

using phy::AssociationMap;
using phy::BeamformerSet;

/// Strongest-channel association. strengths is N x K (||h_{n,k}||^2);
/// ties go to the lower BS index.
AssociationMap sc_associate(const Mat& strengths);

// --- Dual coordinate descent association -----------------------------------

struct DcdOptions {
  double tolerance = 1e-6;  // relative change of the dual objective
  int maxIterations = 200;
};

struct DcdResult {
  AssociationMap assoc;
  Mat utility;  // N x K
  Vec mu;
  double nu = 0.0;
  std::vector<double> dualHistory;
  int iterations = 0;
  bool converged = false;
};

/// u_{n,k} = log(M log2(1 + SINR_{n,k})) with SINR from per-BS powers q.
/// Throws std::domain_error naming the link if any SINR is zero.
Mat dcd_utilities(const Vec& q, const Mat& strengths, const Vec& noise, int numAntennas);

/// g(mu, nu) = sum_k max_n(u_{n,k} - mu_n) + sum_n e^{mu_n - nu - 1} + nu K.
double dcd_dual_objective(const Mat& utility, const Vec& mu, double nu);

/// Dual objective with the max over n replaced by a fixed assignment.
double dcd_assignment_value(const Mat& utility, const Vec& mu, double nu,
                            const std::vector<int>& serving);

DcdResult dcd_associate(const Vec& q, const Mat& strengths, const Vec& noise, int numAntennas,
                        const DcdOptions& opts = {});

// --- Stage 1: association + per-BS power control ---------------------------

struct Stage1Options {
  bool fixedPower = false;
  int maxRounds = 20;
  int maxNewtonSteps = 30;
  double minPowerFraction = 1e-4;
  DcdOptions dcd;
};

struct Stage1Result {
  AssociationMap assoc;
  Vec q;
  double utility = 0.0;
  int rounds = 0;
  bool newtonFallback = false;
};

/// Load-aware sum utility sum_k [u_{rho_k,k}(q) - log |K_{rho_k}|].
double stage1_utility(const Vec& q, const Mat& strengths, const Vec& noise, int numAntennas,
                      const AssociationMap& assoc);

/// Damped Newton ascent on stage1_utility over log-powers, projected to
/// [minPowerFraction * P_max, P_max]. Falls back to P_max on divergence.
Vec newton_power_update(const Vec& q0, const Mat& strengths, const Vec& noise, int numAntennas,
                        const AssociationMap& assoc, double pMax, const Stage1Options& opts,
                        bool* fellBack = nullptr);

Stage1Result stage1_ua_power(const Mat& strengths, const Vec& noise, int numAntennas, double pMax,
                             const Stage1Options& opts = {});

// --- WMMSE-based coordinated beamforming ------------------------------------

struct WmmseOptions {
  double tolerance = 1e-5;  // relative change of the sum rate
  int maxIterations = 200;
  int maxDualSweeps = 50;
  double etaFloor = 1e-12;
};

struct WmmseResult {
  BeamformerSet bf;
  std::vector<double> objective;     // sum rate of the initial point and every iterate
  std::vector<double> maxPowerExcess;  // max_n (P_n - P_max) per iterate
  std::vector<Vec> rhoHistory;         // AU interference (W) per iterate
  Vec mu;                              // interference duals (normalized units)
  Vec eta;
  int iterations = 0;
  bool converged = false;
  bool muActivated = false;
};

/// Full-power MRT with equal per-user power split inside each cell.
BeamformerSet mrt_beamformers(const phy::ChannelSet& ch, const AssociationMap& assoc, double pMax);

/// Scales every beamformer by one common factor so that rho_l <= I_max.
BeamformerSet truncate_to_interference(const phy::ChannelSet& ch, const AssociationMap& assoc,
                                       const BeamformerSet& bf, double iMax);

WmmseResult wmmse_cbf(const phy::ChannelSet& ch, const AssociationMap& assoc, const Vec& noise,
                      double pMax, double iMax, const std::optional<BeamformerSet>& init = std::nullopt,
                      const WmmseOptions& opts = {});

}  // namespace catn::baselines
