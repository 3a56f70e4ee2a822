#pragma once

#include <cstdint>
#include <vector>

#include "catn/rng.hpp"
#include "catn/types.hpp"

namespace catn::channel {

struct Position3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;  // height above ground, meters
};

double distance(const Position3D& a, const Position3D& b);
double horizontal_distance(const Position3D& a, const Position3D& b);

/// Uniform rectangular array. Element (mh, mv) lives at vector index
/// mv * Mh + mh, i.e. the horizontal index runs fastest.
struct ArrayGeometry {
  int mh = 4;
  int mv = 4;
  double spacing = 0.075;     // meters
  double wavelength = 0.15;   // meters

  int size() const { return mh * mv; }
  void validate() const;
};

/// URA response toward zenith angle theta and azimuth phi, unit l2 norm.
CVec steering_vector(double theta, double phi, const ArrayGeometry& geom);

/// Free-space path loss as a linear power ratio (>= 1 for d >= c / (4 pi fc)).
double fsp_path_loss(double d, double fc);

/// UMa LoS probability for a ground terminal (hUT <= 13 m branch).
double uma_los_probability(double d2d, double hUt);

/// UMa path loss (linear) without shadow fading. Distances outside
/// [10 m, 5 km] are clamped with a one-time warning.
double uma_path_loss(double d2d, double hBs, double hUt, double fc, bool losBlocked);

/// Gauss-Markov step: alpha * prev + sqrt(1 - alpha^2) * e, e ~ CN(0, I).
CVec evolve_nlos(const CVec& prev, double alpha, Rng& rng);

/// Rayleigh BS->TU channel from its NLoS state.
CVec tu_channel(double pathLossLinear, const CVec& nlos);

/// e^{-j 2 pi d / lambda} a(theta, phi).
CVec au_los_component(double dist, double theta, double phi, const ArrayGeometry& geom);

/// Rician BS->AU channel. kappa is linear; kappa = +inf yields the pure LoS path.
CVec au_channel(double pathLossLinear, double kappa, const CVec& los, const CVec& nlos);

struct LinkAngles {
  double theta = 0.0;  // from the array's vertical axis
  double phi = 0.0;    // azimuth in the ground plane
};

LinkAngles angles_from(const Position3D& origin, const Position3D& target);

/// Piecewise-linear trajectory through timed waypoints; holds the endpoints
/// outside the covered interval.
class Trajectory {
 public:
  struct Waypoint {
    double time = 0.0;
    Position3D pos;
  };

  Trajectory() = default;
  explicit Trajectory(std::vector<Waypoint> waypoints);

  static Trajectory stationary(const Position3D& p);
  static Trajectory straight(const Position3D& start, double speed, double heading,
                             double duration);
  static Trajectory circular_arc(const Position3D& center, double radius, double startAngle,
                                 double speed, double duration, int segments = 64);

  Position3D at(double time) const;
  const std::vector<Waypoint>& waypoints() const { return waypoints_; }

 private:
  std::vector<Waypoint> waypoints_;
};

struct AuLinkStats {
  double theta = 0.0;
  double phi = 0.0;
  double invPathLoss = 0.0;
  double distance = 0.0;
};

/// All channels of one slot. Index layout: TU links n * K + k, AU links n * L + l.
struct ChannelSet {
  int numBs = 0;
  int numTu = 0;
  int numAu = 0;
  int numAntennas = 0;
  std::vector<CVec> tu;
  std::vector<CVec> au;
  std::vector<CVec> auLos;  // sqrt(1/L_FSP) * g^LoS
  std::vector<AuLinkStats> auStats;

  const CVec& h(int n, int k) const { return tu[static_cast<size_t>(n * numTu + k)]; }
  const CVec& g(int n, int l) const { return au[static_cast<size_t>(n * numAu + l)]; }
  const CVec& gLos(int n, int l) const { return auLos[static_cast<size_t>(n * numAu + l)]; }
  const AuLinkStats& stats(int n, int l) const {
    return auStats[static_cast<size_t>(n * numAu + l)];
  }

  /// N x K matrix of ||h_{n,k}||^2.
  Mat strengths() const;
};

struct ChannelParams {
  double carrierHz = 2e9;
  double alpha = 0.64;
  double kappaDb = 15.0;
  ArrayGeometry array;
  double slotSeconds = 0.02;
};

struct Topology {
  std::vector<Position3D> bs;
  std::vector<Trajectory> tu;
  std::vector<Trajectory> au;
};

/// Owns the per-link fading state and advances it one slot at a time. The
/// channel sequence is a pure function of (params, topology, seed, slot).
class ChannelModel {
 public:
  ChannelModel(ChannelParams params, Topology topology, std::uint64_t seed);

  int slot() const { return slot_; }
  int numBs() const { return static_cast<int>(topology_.bs.size()); }
  int numTu() const { return static_cast<int>(topology_.tu.size()); }
  int numAu() const { return static_cast<int>(topology_.au.size()); }

  void reset();
  void advance();
  ChannelSet realize() const;

  bool losBlocked(int n, int k) const {
    return losBlocked_[static_cast<size_t>(n * numTu() + k)] != 0;
  }
  const CVec& tuNlos(int n, int k) const { return tuNlos_[static_cast<size_t>(n * numTu() + k)]; }
  Position3D tuPosition(int k) const;
  Position3D auPosition(int l) const;
  const ChannelParams& params() const { return params_; }
  const Topology& topology() const { return topology_; }

 private:
  ChannelParams params_;
  Topology topology_;
  std::uint64_t seed_;
  int slot_ = 0;
  std::vector<CVec> tuNlos_;
  std::vector<CVec> auNlos_;
  std::vector<char> losBlocked_;
};

}  // namespace catn::channel
