#include "catn/channel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace catn::channel {

double distance(const Position3D& a, const Position3D& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) +
                   (a.z - b.z) * (a.z - b.z));
}

double horizontal_distance(const Position3D& a, const Position3D& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

void ArrayGeometry::validate() const {
  if (mh < 1 || mv < 1) throw std::invalid_argument("array: Mh and Mv must be >= 1");
  if (!(spacing > 0.0)) throw std::invalid_argument("array: antenna spacing must be > 0");
  if (!(wavelength > 0.0)) throw std::invalid_argument("array: wavelength must be > 0");
}

CVec steering_vector(double theta, double phi, const ArrayGeometry& geom) {
  const int m = geom.size();
  const double k = 2.0 * kPi / geom.wavelength * geom.spacing;
  const double hPhase = std::sin(theta) * std::sin(phi);
  const double vPhase = std::cos(theta);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  CVec a(m);
  for (int mv = 0; mv < geom.mv; ++mv) {
    for (int mh = 0; mh < geom.mh; ++mh) {
      const double phase = k * (mh * hPhase + mv * vPhase);
      a[mv * geom.mh + mh] = std::polar(scale, phase);
    }
  }
  return a;
}

double fsp_path_loss(double d, double fc) {
  if (!(d > 0.0)) throw std::invalid_argument("fsp_path_loss: distance must be > 0");
  if (!(fc > 0.0)) throw std::invalid_argument("fsp_path_loss: carrier must be > 0");
  const double ratio = 4.0 * kPi * d * fc / kSpeedOfLight;
  return ratio * ratio;
}

double uma_los_probability(double d2d, double hUt) {
  (void)hUt;  // C'(hUT) = 0 for ground terminals below 13 m
  if (d2d <= 18.0) return 1.0;
  return 18.0 / d2d + std::exp(-d2d / 63.0) * (1.0 - 18.0 / d2d);
}

namespace {

std::atomic<bool> g_umaClampWarned{false};

constexpr double kUmaMinDistance = 10.0;
constexpr double kUmaMaxDistance = 5000.0;

}  // namespace

double uma_path_loss(double d2d, double hBs, double hUt, double fc, bool losBlocked) {
  if (!(d2d > 0.0)) throw std::invalid_argument("uma_path_loss: distance must be > 0");
  if (d2d < kUmaMinDistance || d2d > kUmaMaxDistance) {
    if (!g_umaClampWarned.exchange(true)) {
      spdlog::warn("uma_path_loss: 2D distance {:.2f} m outside [10 m, 5 km]; clamping", d2d);
    }
    d2d = std::clamp(d2d, kUmaMinDistance, kUmaMaxDistance);
  }
  const double fcGHz = fc / 1e9;
  const double dh = hBs - hUt;
  const double d3d = std::sqrt(d2d * d2d + dh * dh);
  const double breakpoint =
      std::max(4.0 * (hBs - 1.0) * (hUt - 1.0) * fc / kSpeedOfLight, 1e-9);

  double losDb = 0.0;
  if (d2d <= breakpoint) {
    losDb = 28.0 + 22.0 * std::log10(d3d) + 20.0 * std::log10(fcGHz);
  } else {
    losDb = 28.0 + 40.0 * std::log10(d3d) + 20.0 * std::log10(fcGHz) -
            9.0 * std::log10(breakpoint * breakpoint + dh * dh);
  }
  double db = losDb;
  if (losBlocked) {
    const double nlosDb =
        13.54 + 39.08 * std::log10(d3d) + 20.0 * std::log10(fcGHz) - 0.6 * (hUt - 1.5);
    db = std::max(losDb, nlosDb);
  }
  return db_to_linear(db);
}

CVec evolve_nlos(const CVec& prev, double alpha, Rng& rng) {
  const double innovation = std::sqrt(std::max(0.0, 1.0 - alpha * alpha));
  CVec next(prev.size());
  for (Eigen::Index i = 0; i < prev.size(); ++i) {
    next[i] = alpha * prev[i] + innovation * complex_normal(rng);
  }
  return next;
}

CVec tu_channel(double pathLossLinear, const CVec& nlos) {
  return std::sqrt(1.0 / pathLossLinear) * nlos;
}

CVec au_los_component(double dist, double theta, double phi, const ArrayGeometry& geom) {
  const Complex phase = std::polar(1.0, -2.0 * kPi * dist / geom.wavelength);
  return phase * steering_vector(theta, phi, geom);
}

CVec au_channel(double pathLossLinear, double kappa, const CVec& los, const CVec& nlos) {
  const double amp = std::sqrt(1.0 / pathLossLinear);
  if (std::isinf(kappa)) return amp * los;
  const double losW = std::sqrt(kappa / (kappa + 1.0));
  const double nlosW = std::sqrt(1.0 / (kappa + 1.0));
  return amp * (losW * los + nlosW * nlos);
}

LinkAngles angles_from(const Position3D& origin, const Position3D& target) {
  const double dx = target.x - origin.x;
  const double dy = target.y - origin.y;
  const double dz = target.z - origin.z;
  const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
  LinkAngles out;
  out.theta = d > 0.0 ? std::acos(std::clamp(dz / d, -1.0, 1.0)) : 0.0;
  out.phi = std::atan2(dy, dx);
  return out;
}

Trajectory::Trajectory(std::vector<Waypoint> waypoints) : waypoints_(std::move(waypoints)) {
  if (waypoints_.empty()) throw std::invalid_argument("trajectory: needs at least one waypoint");
  if (!std::is_sorted(waypoints_.begin(), waypoints_.end(),
                      [](const Waypoint& a, const Waypoint& b) { return a.time < b.time; })) {
    throw std::invalid_argument("trajectory: waypoint times must be non-decreasing");
  }
  for (const auto& w : waypoints_) {
    if (w.pos.z < 0.0) throw std::invalid_argument("trajectory: height must be >= 0");
  }
}

Trajectory Trajectory::stationary(const Position3D& p) { return Trajectory({{0.0, p}}); }

Trajectory Trajectory::straight(const Position3D& start, double speed, double heading,
                                double duration) {
  Position3D end = start;
  end.x += speed * duration * std::cos(heading);
  end.y += speed * duration * std::sin(heading);
  return Trajectory({{0.0, start}, {duration, end}});
}

Trajectory Trajectory::circular_arc(const Position3D& center, double radius, double startAngle,
                                    double speed, double duration, int segments) {
  if (radius <= 0.0 || speed == 0.0) {
    Position3D p{center.x + radius * std::cos(startAngle), center.y + radius * std::sin(startAngle),
                 center.z};
    return stationary(p);
  }
  std::vector<Waypoint> pts;
  pts.reserve(static_cast<size_t>(segments) + 1);
  const double sweep = speed * duration / radius;
  for (int i = 0; i <= segments; ++i) {
    const double f = static_cast<double>(i) / segments;
    const double ang = startAngle + f * sweep;
    pts.push_back({f * duration,
                   {center.x + radius * std::cos(ang), center.y + radius * std::sin(ang), center.z}});
  }
  return Trajectory(std::move(pts));
}

Position3D Trajectory::at(double time) const {
  if (time <= waypoints_.front().time) return waypoints_.front().pos;
  if (time >= waypoints_.back().time) return waypoints_.back().pos;
  auto hi = std::upper_bound(waypoints_.begin(), waypoints_.end(), time,
                             [](double t, const Waypoint& w) { return t < w.time; });
  auto lo = hi - 1;
  const double span = hi->time - lo->time;
  const double f = span > 0.0 ? (time - lo->time) / span : 0.0;
  return {lo->pos.x + f * (hi->pos.x - lo->pos.x), lo->pos.y + f * (hi->pos.y - lo->pos.y),
          lo->pos.z + f * (hi->pos.z - lo->pos.z)};
}

Mat ChannelSet::strengths() const {
  Mat s(numBs, numTu);
  for (int n = 0; n < numBs; ++n)
    for (int k = 0; k < numTu; ++k) s(n, k) = h(n, k).squaredNorm();
  return s;
}

ChannelModel::ChannelModel(ChannelParams params, Topology topology, std::uint64_t seed)
    : params_(std::move(params)), topology_(std::move(topology)), seed_(seed) {
  params_.array.validate();
  if (!(params_.alpha >= 0.0 && params_.alpha <= 1.0))
    throw std::invalid_argument("channel: alpha must lie in [0, 1]");
  if (topology_.bs.empty()) throw std::invalid_argument("channel: need at least one BS");
  for (const auto& p : topology_.bs)
    if (p.z < 0.0) throw std::invalid_argument("channel: BS height must be >= 0");
  reset();
}

Position3D ChannelModel::tuPosition(int k) const {
  return topology_.tu[static_cast<size_t>(k)].at(slot_ * params_.slotSeconds);
}

Position3D ChannelModel::auPosition(int l) const {
  return topology_.au[static_cast<size_t>(l)].at(slot_ * params_.slotSeconds);
}

void ChannelModel::reset() {
  slot_ = 0;
  const int n = numBs();
  const int k = numTu();
  const int l = numAu();
  const int m = params_.array.size();
  tuNlos_.assign(static_cast<size_t>(n * k), CVec());
  auNlos_.assign(static_cast<size_t>(n * l), CVec());
  losBlocked_.assign(static_cast<size_t>(n * k), 0);
  for (int b = 0; b < n; ++b) {
    for (int u = 0; u < k; ++u) {
      const auto link = static_cast<std::uint64_t>(b * k + u);
      Rng rng = make_rng(seed_, Stream::kTuFading, link, 0);
      tuNlos_[link] = complex_normal_vector(rng, m);
      Rng losRng = make_rng(seed_, Stream::kLosState, link);
      const double d2d = std::max(
          horizontal_distance(topology_.bs[static_cast<size_t>(b)], topology_.tu[u].at(0.0)), 1e-3);
      losBlocked_[link] = uniform01(losRng) >= uma_los_probability(d2d, topology_.tu[u].at(0.0).z);
    }
    for (int a = 0; a < l; ++a) {
      const auto link = static_cast<std::uint64_t>(b * l + a);
      Rng rng = make_rng(seed_, Stream::kAuFading, link, 0);
      auNlos_[link] = complex_normal_vector(rng, m);
    }
  }
}

void ChannelModel::advance() {
  ++slot_;
  const auto s = static_cast<std::uint64_t>(slot_);
  for (size_t i = 0; i < tuNlos_.size(); ++i) {
    Rng rng = make_rng(seed_, Stream::kTuFading, i, s);
    tuNlos_[i] = evolve_nlos(tuNlos_[i], params_.alpha, rng);
  }
  for (size_t i = 0; i < auNlos_.size(); ++i) {
    Rng rng = make_rng(seed_, Stream::kAuFading, i, s);
    auNlos_[i] = evolve_nlos(auNlos_[i], params_.alpha, rng);
  }
}

ChannelSet ChannelModel::realize() const {
  ChannelSet cs;
  cs.numBs = numBs();
  cs.numTu = numTu();
  cs.numAu = numAu();
  cs.numAntennas = params_.array.size();
  cs.tu.resize(tuNlos_.size());
  cs.au.resize(auNlos_.size());
  cs.auLos.resize(auNlos_.size());
  cs.auStats.resize(auNlos_.size());
  const double kappa = db_to_linear(params_.kappaDb);

  std::vector<Position3D> tuPos(static_cast<size_t>(cs.numTu));
  for (int k = 0; k < cs.numTu; ++k) tuPos[static_cast<size_t>(k)] = tuPosition(k);
  std::vector<Position3D> auPos(static_cast<size_t>(cs.numAu));
  for (int l = 0; l < cs.numAu; ++l) auPos[static_cast<size_t>(l)] = auPosition(l);

  for (int n = 0; n < cs.numBs; ++n) {
    const Position3D& bs = topology_.bs[static_cast<size_t>(n)];
    for (int k = 0; k < cs.numTu; ++k) {
      const auto idx = static_cast<size_t>(n * cs.numTu + k);
      const Position3D& tu = tuPos[static_cast<size_t>(k)];
      const double d2d = std::max(horizontal_distance(bs, tu), 1e-3);
      const double pl = uma_path_loss(d2d, bs.z, tu.z, params_.carrierHz, losBlocked_[idx] != 0);
      cs.tu[idx] = tu_channel(pl, tuNlos_[idx]);
    }
    for (int l = 0; l < cs.numAu; ++l) {
      const auto idx = static_cast<size_t>(n * cs.numAu + l);
      const Position3D& au = auPos[static_cast<size_t>(l)];
      const double d = distance(bs, au);
      const double pl = fsp_path_loss(d, params_.carrierHz);
      const LinkAngles ang = angles_from(bs, au);
      const CVec los = au_los_component(d, ang.theta, ang.phi, params_.array);
      cs.au[idx] = au_channel(pl, kappa, los, auNlos_[idx]);
      cs.auLos[idx] = std::sqrt(1.0 / pl) * los;
      cs.auStats[idx] = {ang.theta, ang.phi, 1.0 / pl, d};
    }
  }
  return cs;
}

}  // namespace catn::channel
