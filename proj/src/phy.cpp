#include "catn/phy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace catn::phy {

AssociationMap::AssociationMap(int numBs, std::vector<int> serving)
    : numBs_(numBs), serving_(std::move(serving)) {
  if (numBs_ < 1) throw std::invalid_argument("association: need at least one BS");
  for (size_t k = 0; k < serving_.size(); ++k) {
    if (serving_[k] < 0 || serving_[k] >= numBs_) {
      throw std::invalid_argument("association: TU " + std::to_string(k) +
                                  " mapped to invalid BS " + std::to_string(serving_[k]));
    }
  }
}

AssociationMap AssociationMap::all_to(int numBs, int numTu, int bs) {
  return AssociationMap(numBs, std::vector<int>(static_cast<size_t>(numTu), bs));
}

std::vector<int> AssociationMap::users(int n) const {
  std::vector<int> out;
  for (int k = 0; k < numTu(); ++k)
    if (serving(k) == n) out.push_back(k);
  return out;
}

std::vector<int> AssociationMap::loads() const {
  std::vector<int> out(static_cast<size_t>(numBs_), 0);
  for (int s : serving_) ++out[static_cast<size_t>(s)];
  return out;
}

BeamformerSet BeamformerSet::zeros(int numTu, int numAntennas) {
  BeamformerSet bf;
  bf.w.assign(static_cast<size_t>(numTu), CVec::Zero(numAntennas));
  return bf;
}

CVec BeamformerSet::direction(int k) const {
  const CVec& v = w[static_cast<size_t>(k)];
  const double nrm = v.norm();
  if (nrm == 0.0) return CVec::Zero(v.size());
  return v / nrm;
}

double BeamformerSet::bsPower(const AssociationMap& assoc, int n) const {
  double p = 0.0;
  for (int k = 0; k < assoc.numTu(); ++k)
    if (assoc.serving(k) == n) p += power(k);
  return p;
}

Mat leakage_matrix(const ChannelSet& ch, const AssociationMap& assoc, const BeamformerSet& bf) {
  const int numTu = assoc.numTu();
  Mat leak(numTu, numTu);
  for (int k = 0; k < numTu; ++k) {
    const int n = assoc.serving(k);
    const CVec& wk = bf.w[static_cast<size_t>(k)];
    for (int i = 0; i < numTu; ++i) {
      leak(i, k) = std::norm(ch.h(n, i).dot(wk));  // dot() conjugates the left operand
    }
  }
  return leak;
}

namespace {

void check_noise(const Vec& noise) {
  for (Eigen::Index k = 0; k < noise.size(); ++k) {
    if (!(noise[k] > 0.0)) throw std::invalid_argument("noise power must be > 0");
  }
}

InterferenceDecomposition decompose_from_leak(const Mat& leak, const AssociationMap& assoc,
                                              const Vec& noise) {
  const int numTu = assoc.numTu();
  InterferenceDecomposition out;
  out.betaFrom = Mat::Zero(assoc.numBs(), numTu);
  out.beta.resize(numTu);
  out.pr.resize(numTu);
  for (int k = 0; k < numTu; ++k) {
    out.pr[k] = leak(k, k);
    for (int i = 0; i < numTu; ++i) {
      if (i == k) continue;
      out.betaFrom(assoc.serving(i), k) += leak(k, i);
    }
    out.beta[k] = out.betaFrom.col(k).sum() + noise[k];
  }
  return out;
}

}  // namespace

InterferenceDecomposition decompose_interference(const ChannelSet& ch, const AssociationMap& assoc,
                                                 const BeamformerSet& bf, const Vec& noise) {
  check_noise(noise);
  return decompose_from_leak(leakage_matrix(ch, assoc, bf), assoc, noise);
}

Vec compute_sinr(const ChannelSet& ch, const AssociationMap& assoc, const BeamformerSet& bf,
                 const Vec& noise) {
  const auto dec = decompose_interference(ch, assoc, bf, noise);
  Vec gamma(dec.pr.size());
  for (Eigen::Index k = 0; k < gamma.size(); ++k)
    gamma[k] = dec.pr[k] / std::max(dec.beta[k], kPowerFloor);
  return gamma;
}

Vec compute_rate(const Vec& gamma) {
  Vec r(gamma.size());
  for (Eigen::Index k = 0; k < gamma.size(); ++k) r[k] = std::log2(1.0 + gamma[k]);
  return r;
}

AuInterference au_interference(const ChannelSet& ch, const AssociationMap& assoc,
                               const BeamformerSet& bf) {
  AuInterference out;
  out.rho = Vec::Zero(ch.numAu);
  out.rhoFrom = Mat::Zero(ch.numBs, ch.numAu);
  for (int k = 0; k < assoc.numTu(); ++k) {
    const int n = assoc.serving(k);
    const CVec& wk = bf.w[static_cast<size_t>(k)];
    for (int l = 0; l < ch.numAu; ++l) {
      out.rho[l] += std::norm(ch.g(n, l).dot(wk));
      out.rhoFrom(n, l) += std::norm(ch.gLos(n, l).dot(wk));
    }
  }
  return out;
}

PhySnapshot evaluate(const ChannelSet& ch, const AssociationMap& assoc, const BeamformerSet& bf,
                     const Vec& noise) {
  check_noise(noise);
  PhySnapshot s;
  s.leak = leakage_matrix(ch, assoc, bf);
  auto dec = decompose_from_leak(s.leak, assoc, noise);
  s.betaFrom = std::move(dec.betaFrom);
  s.beta = std::move(dec.beta);
  s.pr = std::move(dec.pr);
  s.noise = noise;
  s.gamma.resize(s.pr.size());
  s.power.resize(s.pr.size());
  for (Eigen::Index k = 0; k < s.pr.size(); ++k) {
    s.gamma[k] = s.pr[k] / std::max(s.beta[k], kPowerFloor);
    s.power[k] = bf.power(static_cast<int>(k));
  }
  s.rate = compute_rate(s.gamma);
  auto au = au_interference(ch, assoc, bf);
  s.rho = std::move(au.rho);
  s.rhoFrom = std::move(au.rhoFrom);
  return s;
}

bool ConstraintReport::feasible() const {
  return std::all_of(powerOk.begin(), powerOk.end(), [](bool b) { return b; }) &&
         std::all_of(interferenceOk.begin(), interferenceOk.end(), [](bool b) { return b; });
}

ConstraintReport check_constraints(const BeamformerSet& bf, const AssociationMap& assoc,
                                   const Vec& rho, double iMax, double pMax) {
  ConstraintReport rep;
  rep.powerMargin.resize(assoc.numBs());
  for (int n = 0; n < assoc.numBs(); ++n) {
    rep.powerMargin[n] = pMax - bf.bsPower(assoc, n);
    rep.powerOk.push_back(rep.powerMargin[n] >= -1e-12 * pMax);
  }
  rep.interferenceMargin.resize(rho.size());
  for (Eigen::Index l = 0; l < rho.size(); ++l) {
    rep.interferenceMargin[l] = iMax - rho[l];
    rep.interferenceOk.push_back(rho[l] <= iMax);
  }
  return rep;
}

Vec uniform_noise(int numTu, double sigma2) { return Vec::Constant(numTu, sigma2); }

}  // namespace catn::phy
