#include "catn/encoding.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace catn::encoding {

Codebook::Codebook(int numAntennas, int size, int compression)
    : size_(size), compression_(compression), f_(numAntennas, size) {
  if (numAntennas < 1 || size < 1) throw std::invalid_argument("codebook: bad dimensions");
  if (compression < 1 || compression > size)
    throw std::invalid_argument("codebook: compression factor must be in [1, C]");
  const double scale = 1.0 / std::sqrt(static_cast<double>(numAntennas));
  for (int c = 0; c < size; ++c) {
    for (int m = 0; m < numAntennas; ++m) {
      const double ph = 2.0 * kPi * m * c / size;
      f_(m, c) = std::polar(scale, ph);
    }
  }
}

CompressedChannel compress_channel(const CVec& h, const Codebook& cb) {
  if (h.size() != cb.matrix().rows()) throw std::invalid_argument("compress_channel: size mismatch");
  const CVec d = cb.matrix().adjoint() * h;
  std::vector<int> order(static_cast<size_t>(d.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return std::abs(d[a]) > std::abs(d[b]); });
  CompressedChannel out;
  for (int i = 0; i < cb.compression(); ++i) {
    out.index.push_back(order[static_cast<size_t>(i)]);
    out.coeff.push_back(d[order[static_cast<size_t>(i)]]);
  }
  return out;
}

std::vector<int> top_indices(const Vec& values, int count) {
  std::vector<int> order(static_cast<size_t>(values.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return values[a] > values[b]; });
  order.resize(static_cast<size_t>(std::clamp(count, 0, static_cast<int>(values.size()))));
  return order;
}

namespace {

bool all_zero(const Vec& v) { return (v.array() == 0.0).all(); }

}  // namespace

InterfererSets select_interferer_sets(const PhySnapshot& snap, const AssociationMap& assoc,
                                      const Mat& tuStrengths, const Mat& auStrengths,
                                      const SetSizes& sizes) {
  const int numBs = assoc.numBs();
  const int numTu = assoc.numTu();
  const int numAu = static_cast<int>(auStrengths.cols());
  InterfererSets s;

  s.tuInterferers.resize(static_cast<size_t>(numTu));
  for (int k = 0; k < numTu; ++k) {
    Vec score = snap.betaFrom.size() ? Vec(snap.betaFrom.col(k)) : Vec::Zero(numBs);
    if (all_zero(score)) score = tuStrengths.col(k);
    s.tuInterferers[static_cast<size_t>(k)] = top_indices(score, sizes.bIn);
  }

  s.bsSevere.resize(static_cast<size_t>(numBs));
  s.bsVictims.resize(static_cast<size_t>(numBs));
  for (int n = 0; n < numBs; ++n) {
    const auto members = assoc.users(n);
    Vec score(static_cast<Eigen::Index>(members.size()));
    Vec fallback(score.size());
    for (size_t i = 0; i < members.size(); ++i) {
      const int k = members[i];
      score[static_cast<Eigen::Index>(i)] =
          snap.beta.size() ? snap.beta[k] - snap.noise[k] : 0.0;
      fallback[static_cast<Eigen::Index>(i)] = tuStrengths(n, k);
    }
    if (all_zero(score)) score = fallback;
    for (int i : top_indices(score, sizes.kIn))
      s.bsSevere[static_cast<size_t>(n)].push_back(members[static_cast<size_t>(i)]);

    Vec out = snap.betaFrom.size() ? Vec(snap.betaFrom.row(n).transpose()) : Vec::Zero(numTu);
    if (all_zero(out)) out = tuStrengths.row(n).transpose();
    s.bsVictims[static_cast<size_t>(n)] = top_indices(out, sizes.kOut * sizes.bIn);
  }

  s.auInterferers.resize(static_cast<size_t>(numAu));
  for (int l = 0; l < numAu; ++l) {
    Vec score = snap.rhoFrom.size() ? Vec(snap.rhoFrom.col(l)) : Vec::Zero(numBs);
    if (all_zero(score)) score = auStrengths.col(l);
    s.auInterferers[static_cast<size_t>(l)] = top_indices(score, sizes.bInPri);
  }
  return s;
}

// --- Observations ----------------------------------------------------------

const ObsField& ObsLayout::field(const std::string& name) const {
  for (const auto& f : fields)
    if (f.name == name) return f;
  throw std::out_of_range("observation layout has no field " + name);
}

namespace {

class LayoutBuilder {
 public:
  void add(const std::string& name, int length) {
    layout_.fields.push_back({name, layout_.size, length});
    layout_.size += length;
  }
  ObsLayout done() { return std::move(layout_); }

 private:
  ObsLayout layout_;
};

int in_block_dim(const EncodingConfig& c) {
  const int perBs = 1 + 3 * c.compression * c.numTu + c.numTu + 1;
  return (perBs * c.sets.bIn + 1) * c.sets.kIn;
}

// Received/interference powers relative to the noise reference, log-compressed.
double log_power(double x, double ref) { return std::log10(1.0 + std::max(x, 0.0) / ref); }

// Codebook coefficient: phase kept, magnitude log-compressed against sqrt(noise).
Complex log_coeff(Complex d, double ref) {
  const double mag = std::abs(d);
  if (mag == 0.0) return {0.0, 0.0};
  return d / mag * std::log10(1.0 + mag / std::sqrt(ref));
}

class Writer {
 public:
  explicit Writer(Vec& v) : v_(v) {}
  void put(double x) { v_[pos_++] = x; }
  void skip(int n) { pos_ += n; }
  int pos() const { return static_cast<int>(pos_); }
  void seek(int p) { pos_ = p; }

 private:
  Vec& v_;
  Eigen::Index pos_ = 0;
};

double index_feature(int i, int count) { return static_cast<double>(i + 1) / count; }

void put_compressed(Writer& w, const CompressedChannel& hc, const EncodingConfig& c) {
  for (size_t i = 0; i < hc.index.size(); ++i) {
    const Complex d = log_coeff(hc.coeff[i], c.noiseRef);
    w.put(index_feature(hc.index[i], c.codebookSize));
    w.put(d.real());
    w.put(d.imag());
  }
}

void put_au_stats(Writer& w, const channel::AuLinkStats& s) {
  w.put(s.theta);
  w.put(s.phi);
  w.put(s.invPathLoss > 0.0 ? std::log10(s.invPathLoss) / 10.0 : 0.0);
  w.put(s.distance / 1000.0);
}

}  // namespace

ObsLayout bs_observation_layout(const EncodingConfig& c) {
  const int K = c.numTu;
  const int L = c.numAu;
  LayoutBuilder b;
  b.add("loc.chi", K);
  b.add("loc.hc", 3 * c.compression * K);
  b.add("loc.p", K);
  b.add("loc.rate", K);
  b.add("loc.pr", K);
  b.add("loc.beta", K);
  b.add("loc_pri", 5 * L);
  b.add("in", in_block_dim(c));
  b.add("in_pri", (K + 6) * c.sets.bInPri * L);
  b.add("out", 4 * c.sets.kOut * c.sets.bIn);
  b.add("out_pri", 4 * L);
  return b.done();
}

ObsLayout tu_observation_layout(const EncodingConfig& c) {
  LayoutBuilder b;
  b.add("loads", c.numBs);
  b.add("chi", c.numBs);
  b.add("strength", c.numBs);
  b.add("p", 1);
  b.add("rate", 1);
  b.add("pr", 1);
  b.add("beta", 1);
  return b.done();
}

Vec build_bs_observation(const EncodingConfig& c, int n, const AssociationMap& assocNow,
                         const std::vector<CompressedChannel>& compressedNow,
                         const std::vector<channel::AuLinkStats>& auStatsNow,
                         const SlotInfo* prev) {
  const int K = c.numTu;
  const int L = c.numAu;
  const ObsLayout layout = bs_observation_layout(c);
  Vec o = Vec::Zero(layout.size);
  Writer w(o);

  // o_loc: chi(t), H^c(t) masked by chi(t), then t-1 quantities masked by chi(t).
  for (int k = 0; k < K; ++k) w.put(assocNow.chi(n, k));
  for (int k = 0; k < K; ++k) {
    if (assocNow.chi(n, k)) put_compressed(w, compressedNow[static_cast<size_t>(n * K + k)], c);
    else w.skip(3 * c.compression);
  }
  if (prev) {
    const PhySnapshot& s = prev->phy;
    for (int k = 0; k < K; ++k) w.put(assocNow.chi(n, k) * s.power[k] / c.pMax);
    for (int k = 0; k < K; ++k) w.put(assocNow.chi(n, k) * s.rate[k]);
    for (int k = 0; k < K; ++k) w.put(assocNow.chi(n, k) * log_power(s.pr[k], c.noiseRef));
    for (int k = 0; k < K; ++k)
      w.put(assocNow.chi(n, k) * log_power(s.betaFrom(n, k), c.noiseRef));
  } else {
    w.skip(4 * K);
  }

  // o_loc_pri: g^S(t), rho_{n,l}(t-1).
  for (int l = 0; l < L; ++l) {
    put_au_stats(w, auStatsNow[static_cast<size_t>(n * L + l)]);
    w.put(prev ? log_power(prev->phy.rhoFrom(n, l), c.iMax) : 0.0);
  }

  if (!prev) {
    assert(w.pos() == layout.field("in").offset);
    return o;
  }
  const PhySnapshot& s = prev->phy;
  const AssociationMap& a = prev->assoc;

  // o_in: severely interfered own TUs and their interferer BSs, all at t-1.
  const int perBs = 1 + 3 * c.compression * K + K + 1;
  const int perTu = perBs * c.sets.bIn + 1;
  const int inStart = layout.field("in").offset;
  const auto& severe = prev->sets.bsSevere[static_cast<size_t>(n)];
  for (size_t slot = 0; slot < severe.size() && static_cast<int>(slot) < c.sets.kIn; ++slot) {
    const int k = severe[slot];
    w.seek(inStart + static_cast<int>(slot) * perTu);
    w.put(index_feature(k, K));
    for (int j : prev->sets.tuInterferers[static_cast<size_t>(k)]) {
      w.put(index_feature(j, c.numBs));
      for (int i = 0; i < K; ++i) {
        if (a.chi(j, i)) put_compressed(w, prev->compressed[static_cast<size_t>(j * K + i)], c);
        else w.skip(3 * c.compression);
      }
      for (int i = 0; i < K; ++i) w.put(a.chi(j, i) * s.power[i] / c.pMax);
      w.put(log_power(s.betaFrom(j, k), c.noiseRef));
    }
  }

  // o_in_pri: interferer BSs of every AU.
  const int perAuBs = K + 6;
  const int inPriStart = layout.field("in_pri").offset;
  for (int l = 0; l < L; ++l) {
    const auto& bss = prev->sets.auInterferers[static_cast<size_t>(l)];
    w.seek(inPriStart + l * perAuBs * c.sets.bInPri);
    for (size_t slot = 0; slot < bss.size() && static_cast<int>(slot) < c.sets.bInPri; ++slot) {
      const int j = bss[slot];
      w.put(index_feature(j, c.numBs));
      put_au_stats(w, prev->auStats[static_cast<size_t>(j * L + l)]);
      for (int i = 0; i < K; ++i) w.put(a.chi(j, i) * s.power[i] / c.pMax);
      w.put(log_power(s.rhoFrom(j, l), c.iMax));
    }
  }

  // o_out: victims of BS n.
  w.seek(layout.field("out").offset);
  const auto& victims = prev->sets.bsVictims[static_cast<size_t>(n)];
  for (size_t slot = 0; slot < victims.size() && static_cast<int>(slot) < c.sets.kOut * c.sets.bIn;
       ++slot) {
    const int i = victims[slot];
    w.put(index_feature(i, K));
    w.put(s.rate[i]);
    w.put(log_power(s.betaFrom(n, i), c.noiseRef));
    w.put(s.betaFrom(n, i) / std::max(s.beta[i], phy::kPowerFloor));
  }

  // o_out_pri.
  w.seek(layout.field("out_pri").offset);
  for (int l = 0; l < L; ++l) {
    w.put(index_feature(l, L));
    w.put(s.rho[l] / c.iMax);
    w.put(log_power(s.rhoFrom(n, l), c.iMax));
    w.put(s.rho[l] > 0.0 ? s.rhoFrom(n, l) / s.rho[l] : 0.0);
  }
  assert(w.pos() == layout.size);
  return o;
}

Vec build_tu_observation(const EncodingConfig& c, int k, const Vec& strengthsNow,
                         const SlotInfo* prev) {
  const int N = c.numBs;
  Vec o = Vec::Zero(3 * N + 4);
  if (prev) {
    const auto loads = prev->assoc.loads();
    for (int n = 0; n < N; ++n) {
      o[n] = loads[static_cast<size_t>(n)];
      o[N + n] = prev->assoc.chi(n, k);
    }
  }
  for (int n = 0; n < N; ++n) o[2 * N + n] = log_power(strengthsNow[n] * c.pMax, c.noiseRef);
  if (prev) {
    const PhySnapshot& s = prev->phy;
    o[3 * N] = s.power[k] / c.pMax;
    o[3 * N + 1] = s.rate[k];
    o[3 * N + 2] = log_power(s.pr[k], c.noiseRef);
    o[3 * N + 3] = log_power(s.beta[k], c.noiseRef);
  }
  return o;
}

// --- Actions ---------------------------------------------------------------

DecodedAction parse_bs_action(const Vec& raw, int n, const AssociationMap& assoc, int numAu,
                              const ActionScales& sc) {
  const int K = assoc.numTu();
  if (raw.size() != bs_action_dim(K, numAu))
    throw std::invalid_argument("decode_bs_action: action has wrong dimension");
  auto clip01 = [](double x) { return std::clamp(x, 0.0, 1.0); };
  DecodedAction d;
  d.qTotal = std::max(clip01(raw[0]), sc.minFraction);
  d.share = Vec::Zero(K);
  d.alpha.resize(K);
  double total = 0.0;
  for (int k = 0; k < K; ++k) {
    if (assoc.chi(n, k)) {
      d.share[k] = std::max(clip01(raw[1 + k]), sc.minFraction);
      total += d.share[k];
    }
    d.alpha[k] = sc.alphaMax * clip01(raw[1 + K + k]);
  }
  if (total > 0.0) d.share /= total;
  d.eta = std::max(sc.etaMax * clip01(raw[1 + 2 * K]), sc.etaFloor);
  d.mu.resize(numAu);
  for (int l = 0; l < numAu; ++l) d.mu[l] = sc.muMax * clip01(raw[2 + 2 * K + l]);
  return d;
}

DecodedAction decode_bs_action(const Vec& raw, int n, const AssociationMap& assoc,
                               const phy::ChannelSet& ch, double pMax, const ActionScales& sc,
                               BeamformerSet& bf) {
  DecodedAction d = parse_bs_action(raw, n, assoc, ch.numAu, sc);
  const auto members = assoc.users(n);
  if (members.empty()) return d;

  const int M = ch.numAntennas;
  auto unit = [](const CVec& v) -> CVec {
    const double nrm = v.norm();
    return nrm > 0.0 ? CVec(v / nrm) : CVec(v);
  };
  CMat D = CMat::Identity(M, M) * d.eta;
  for (int i = 0; i < ch.numTu; ++i) {
    if (d.alpha[i] == 0.0) continue;
    const CVec h = unit(ch.h(n, i));
    D.noalias() += d.alpha[i] * h * h.adjoint();
  }
  for (int l = 0; l < ch.numAu; ++l) {
    if (d.mu[l] == 0.0) continue;
    const CVec g = unit(ch.g(n, l));
    D.noalias() += d.mu[l] * g * g.adjoint();
  }
  const Eigen::LLT<CMat> llt(D);
  for (int k : members) {
    CVec dir = llt.solve(ch.h(n, k));
    const double nrm = dir.norm();
    const double p = pMax * d.qTotal * d.share[k];
    if (nrm > 0.0 && std::isfinite(nrm)) bf.w[static_cast<size_t>(k)] = dir / nrm * std::sqrt(p);
    else bf.w[static_cast<size_t>(k)] = CVec::Zero(M);
  }
  return d;
}

// --- Rewards and costs -----------------------------------------------------

namespace {

double rate_without(const PhySnapshot& s, int i, double removed) {
  const double denom = std::max(s.beta[i] - removed, s.noise[i]);
  return std::log2(1.0 + s.pr[i] / denom);
}

}  // namespace

double bs_reward(const PhySnapshot& s, const AssociationMap& assoc, int n,
                 const std::vector<int>& victims) {
  double r = 0.0;
  for (int k : assoc.users(n)) r += s.rate[k];
  for (int i : victims) r -= rate_without(s, i, s.betaFrom(n, i)) - s.rate[i];
  return r;
}

Vec bs_cost(const PhySnapshot& s, double iMax) {
  if (!(iMax > 0.0)) throw std::invalid_argument("bs_cost: I_max must be > 0");
  return (s.rho.array() / iMax - 1.0).matrix();
}

double penalty_reward(double reward, const Vec& cost, double zeta) {
  return reward - zeta * cost.cwiseMax(0.0).sum();
}

double tu_reward(const PhySnapshot& s, int k, bool handover, double zetaR,
                 const std::vector<int>& victimsOfServing) {
  double r = (handover ? zetaR : 1.0) * s.rate[k];
  for (int i : victimsOfServing) {
    if (i == k) continue;
    r -= rate_without(s, i, s.leak(i, k)) - s.rate[i];
  }
  return r;
}

}  // namespace catn::encoding
