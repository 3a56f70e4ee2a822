#pragma once

// Random instances and brute-force reference evaluations shared by the unit
// tests and the acceptance runner. The references are written directly from
// the scalar formulas with plain loops and never call into catn::phy.

#include <cmath>
#include <vector>

#include "catn/channel.hpp"
#include "catn/phy.hpp"
#include "catn/rng.hpp"

namespace catn::testing {

// Relative to the larger magnitude; exact zeros must match exactly.
inline bool rel_close(double got, double want, double tol) {
  return std::abs(got - want) <= tol * std::max(std::abs(got), std::abs(want));
}

struct Instance {
  channel::ChannelSet ch;
  phy::AssociationMap assoc;
  phy::BeamformerSet bf;
  Vec noise;
};

inline CVec random_cvec(Rng& rng, int m, double scale) {
  CVec v(m);
  for (int i = 0; i < m; ++i) v[i] = scale * complex_normal(rng);
  return v;
}

/// Channel gains spread over a few decades around realistic magnitudes,
/// random association and beamformers with per-BS power at most pMax.
inline Instance random_instance(Rng& rng, int N, int K, int L, int M, double pMax = 20.0) {
  Instance in;
  auto& ch = in.ch;
  ch.numBs = N;
  ch.numTu = K;
  ch.numAu = L;
  ch.numAntennas = M;
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k)
      ch.tu.push_back(random_cvec(rng, M, std::pow(10.0, -5.0 - 2.0 * uniform01(rng))));
  for (int n = 0; n < N; ++n)
    for (int l = 0; l < L; ++l) {
      const double s = std::pow(10.0, -7.0 - uniform01(rng));
      ch.au.push_back(random_cvec(rng, M, s));
      ch.auLos.push_back(random_cvec(rng, M, s));
      ch.auStats.push_back({uniform01(rng) * kPi, uniform01(rng) * 2 * kPi, s * s, 1e4});
    }
  std::vector<int> serving(static_cast<size_t>(K));
  for (auto& s : serving) s = uniform_index(rng, N);
  in.assoc = phy::AssociationMap(N, serving);
  in.bf = phy::BeamformerSet::zeros(K, M);
  for (int n = 0; n < N; ++n) {
    const auto users = in.assoc.users(n);
    if (users.empty()) continue;
    const double budget = pMax * (0.2 + 0.8 * uniform01(rng));
    Vec share(static_cast<Eigen::Index>(users.size()));
    for (auto& s : share) s = 0.05 + uniform01(rng);
    share /= share.sum();
    for (size_t j = 0; j < users.size(); ++j) {
      CVec d = random_cvec(rng, M, 1.0);
      d /= d.norm();
      in.bf.w[static_cast<size_t>(users[j])] = d * std::sqrt(budget * share[static_cast<Eigen::Index>(j)]);
    }
  }
  in.noise = Vec::Constant(K, 3.98e-14);
  return in;
}

inline double gain(const CVec& h, const CVec& w) {
  Complex acc = 0.0;
  for (Eigen::Index m = 0; m < h.size(); ++m) acc += std::conj(h[m]) * w[m];
  return std::norm(acc);
}

/// |h_{serving(i), k}^H w_i|^2: power of TU i's beam arriving at TU k.
inline double cross(const Instance& in, int i, int k) {
  return gain(in.ch.h(in.assoc.serving(i), k), in.bf.w[static_cast<size_t>(i)]);
}

inline double ref_signal(const Instance& in, int k) { return cross(in, k, k); }

inline double ref_interference_from(const Instance& in, int j, int k) {
  double s = 0.0;
  for (int i = 0; i < in.ch.numTu; ++i)
    if (i != k && in.assoc.serving(i) == j) s += cross(in, i, k);
  return s;
}

inline double ref_beta(const Instance& in, int k) {
  double s = in.noise[k];
  for (int i = 0; i < in.ch.numTu; ++i)
    if (i != k) s += cross(in, i, k);
  return s;
}

inline double ref_sinr(const Instance& in, int k) { return ref_signal(in, k) / ref_beta(in, k); }

inline double ref_rate(const Instance& in, int k) { return std::log2(1.0 + ref_sinr(in, k)); }

inline double ref_rho(const Instance& in, int l) {
  double s = 0.0;
  for (int k = 0; k < in.ch.numTu; ++k) {
    const CVec& w = in.bf.w[static_cast<size_t>(k)];
    const double p = w.squaredNorm();
    if (p == 0.0) continue;
    s += p * gain(in.ch.g(in.assoc.serving(k), l), w / std::sqrt(p));
  }
  return s;
}

inline double ref_rho_from(const Instance& in, int n, int l) {
  double s = 0.0;
  for (int k = 0; k < in.ch.numTu; ++k)
    if (in.assoc.serving(k) == n) s += gain(in.ch.gLos(n, l), in.bf.w[static_cast<size_t>(k)]);
  return s;
}

inline double ref_bs_reward(const Instance& in, int n, const std::vector<int>& victims) {
  double r = 0.0;
  for (int k = 0; k < in.ch.numTu; ++k)
    if (in.assoc.serving(k) == n) r += ref_rate(in, k);
  for (int i : victims) {
    const double rest = std::max(ref_beta(in, i) - ref_interference_from(in, n, i), in.noise[i]);
    r -= std::log2(1.0 + ref_signal(in, i) / rest) - ref_rate(in, i);
  }
  return r;
}

inline double ref_tu_reward(const Instance& in, int k, bool handover, double zetaR,
                            const std::vector<int>& victims) {
  double r = (handover ? zetaR : 1.0) * ref_rate(in, k);
  for (int i : victims) {
    if (i == k) continue;
    const double rest = std::max(ref_beta(in, i) - cross(in, k, i), in.noise[i]);
    r -= std::log2(1.0 + ref_signal(in, i) / rest) - ref_rate(in, i);
  }
  return r;
}

inline std::vector<int> random_subset(Rng& rng, int K, int maxSize) {
  std::vector<int> all(static_cast<size_t>(K));
  for (int k = 0; k < K; ++k) all[static_cast<size_t>(k)] = k;
  for (int i = K - 1; i > 0; --i) std::swap(all[static_cast<size_t>(i)], all[static_cast<size_t>(uniform_index(rng, i + 1))]);
  all.resize(static_cast<size_t>(uniform_index(rng, std::min(K, maxSize) + 1)));
  return all;
}

}  // namespace catn::testing
