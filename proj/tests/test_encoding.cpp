#include <algorithm>
#include <cmath>
#include <utility>

#include "doctest.h"

#include "catn/encoding.hpp"
#include "support.hpp"

using namespace catn;
using namespace catn::encoding;
using catn::testing::rel_close;

namespace {

// Independent top-k: sort (value, index) pairs, larger value first, then lower index.
std::vector<int> sorted_top(const Vec& v, int count) {
  std::vector<std::pair<double, int>> p;
  for (Eigen::Index i = 0; i < v.size(); ++i) p.emplace_back(-v[i], static_cast<int>(i));
  std::sort(p.begin(), p.end());
  std::vector<int> out;
  for (int i = 0; i < std::min<int>(count, static_cast<int>(p.size())); ++i) out.push_back(p[static_cast<size_t>(i)].second);
  return out;
}

EncodingConfig config(int N, int K, int L) {
  EncodingConfig c;
  c.numBs = N;
  c.numTu = K;
  c.numAu = L;
  c.codebookSize = 16;
  c.compression = 2;
  c.sets = {2, 2, 2, 1};
  return c;
}

SlotInfo slot_info(const catn::testing::Instance& in, const EncodingConfig& c, const Codebook& cb) {
  SlotInfo s{in.assoc, phy::evaluate(in.ch, in.assoc, in.bf, in.noise), {}, in.ch.auStats, {}};
  for (int n = 0; n < c.numBs; ++n)
    for (int k = 0; k < c.numTu; ++k) s.compressed.push_back(compress_channel(in.ch.h(n, k), cb));
  Mat au(c.numBs, c.numAu);
  for (int n = 0; n < c.numBs; ++n)
    for (int l = 0; l < c.numAu; ++l) au(n, l) = in.ch.g(n, l).squaredNorm();
  s.sets = select_interferer_sets(s.phy, in.assoc, in.ch.strengths(), au, c.sets);
  return s;
}

}  // namespace

TEST_CASE("codebook columns are unit norm DFT vectors") {
  const Codebook cb(16, 128, 4);
  for (int c = 0; c < 128; ++c) CHECK(std::abs(cb.matrix().col(c).norm() - 1.0) < 1e-12);
  CHECK(std::abs(cb.matrix()(3, 5) - std::polar(0.25, 2 * kPi * 15 / 128.0)) < 1e-14);
  CHECK_THROWS(Codebook(4, 8, 9));
}

TEST_CASE("compressing a codeword returns it first with unit coefficient") {
  const Codebook cb(16, 128, 4);
  const auto hc = compress_channel(cb.matrix().col(37), cb);
  CHECK(hc.index[0] == 37);
  CHECK(std::abs(hc.coeff[0] - Complex(1.0, 0.0)) < 1e-12);
}

TEST_CASE("compressing zero keeps the lowest indices") {
  const Codebook cb(16, 128, 4);
  const auto hc = compress_channel(CVec::Zero(16), cb);
  CHECK(hc.index == std::vector<int>{0, 1, 2, 3});
  for (auto d : hc.coeff) CHECK(std::abs(d) == 0.0);
}

TEST_CASE("compression matches a full sort of the projections") {
  const Codebook cb(16, 128, 4);
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const CVec h = catn::testing::random_cvec(rng, 16, 1e-6);
    Vec mag(128);
    std::vector<Complex> d(128);
    for (int c = 0; c < 128; ++c) {
      Complex acc = 0.0;
      for (int m = 0; m < 16; ++m) acc += std::conj(cb.matrix()(m, c)) * h[m];
      d[static_cast<size_t>(c)] = acc;
      mag[c] = std::abs(acc);
    }
    const auto want = sorted_top(mag, 4);
    const auto hc = compress_channel(h, cb);
    CHECK(hc.index == want);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(hc.coeff[static_cast<size_t>(i)] - d[static_cast<size_t>(want[static_cast<size_t>(i)])]) < 1e-18);
    for (int i = 1; i < 4; ++i) CHECK(std::abs(hc.coeff[static_cast<size_t>(i)]) <= std::abs(hc.coeff[static_cast<size_t>(i - 1)]));
  }
}

TEST_CASE("top indices are stable") {
  const Vec v = (Vec(5) << 2, 7, 2, 7, 1).finished();
  CHECK(top_indices(v, 3) == std::vector<int>{1, 3, 0});
  CHECK(top_indices(v, 9).size() == 5);
}

TEST_CASE("interferer sets equal top-k of independently sorted lists") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const int N = 2 + uniform_index(rng, 3), K = 2 + uniform_index(rng, 6), L = 1 + uniform_index(rng, 2);
    const auto in = catn::testing::random_instance(rng, N, K, L, 4);
    const auto snap = phy::evaluate(in.ch, in.assoc, in.bf, in.noise);
    const SetSizes sz{2, 2, 2, 1};
    Mat au(N, L);
    for (int n = 0; n < N; ++n)
      for (int l = 0; l < L; ++l) au(n, l) = in.ch.g(n, l).squaredNorm();
    const auto s = select_interferer_sets(snap, in.assoc, in.ch.strengths(), au, sz);
    for (int k = 0; k < K; ++k) {
      const Vec score = snap.betaFrom.col(k);
      if (score.isZero(0.0)) continue;
      CHECK(s.tuInterferers[static_cast<size_t>(k)] == sorted_top(score, 2));
    }
    for (int n = 0; n < N; ++n) {
      const auto members = in.assoc.users(n);
      Vec sev(static_cast<Eigen::Index>(members.size()));
      for (size_t i = 0; i < members.size(); ++i) sev[static_cast<Eigen::Index>(i)] = snap.beta[members[i]] - snap.noise[members[i]];
      std::vector<int> want;
      for (int i : sorted_top(sev, 2)) want.push_back(members[static_cast<size_t>(i)]);
      if (!sev.isZero(0.0)) CHECK(s.bsSevere[static_cast<size_t>(n)] == want);
      CHECK(s.bsSevere[static_cast<size_t>(n)].size() == std::min<size_t>(2, members.size()));
      const Vec out = snap.betaFrom.row(n).transpose();
      if (!out.isZero(0.0)) CHECK(s.bsVictims[static_cast<size_t>(n)] == sorted_top(out, 2));
    }
    for (int l = 0; l < L; ++l) CHECK(s.auInterferers[static_cast<size_t>(l)] == sorted_top(snap.rhoFrom.col(l), 2));
  }
}

TEST_CASE("interferer sets without history fall back to channel strengths") {
  Rng rng(3);
  const auto in = catn::testing::random_instance(rng, 3, 4, 1, 4);
  const Mat st = in.ch.strengths();
  const Mat au = Mat::Constant(3, 1, 1.0);
  const auto s = select_interferer_sets(phy::PhySnapshot{}, in.assoc, st, au, {3, 2, 2, 1});
  for (int k = 0; k < 4; ++k) {
    CHECK(s.tuInterferers[static_cast<size_t>(k)] == sorted_top(st.col(k), 3));
    auto all = s.tuInterferers[static_cast<size_t>(k)];
    std::sort(all.begin(), all.end());
    CHECK(all == std::vector<int>{0, 1, 2});
  }
  CHECK(s.auInterferers[0] == std::vector<int>{0, 1});
}

TEST_CASE("observation dimensions follow the closed forms") {
  for (int K : {1, 4, 21})
    for (int kIn : {1, 3})
      for (int bIn : {1, 4}) {
        EncodingConfig c = config(7, K, 2);
        c.compression = 4;
        c.sets = {bIn, 5, kIn, 3};
        const auto layout = bs_observation_layout(c);
        CHECK(layout.field("in").length == ((1 + 3 * 4 * K + K + 1) * bIn + 1) * kIn);
        CHECK(layout.field("in_pri").length == (K + 6) * 5 * 2);
        CHECK(layout.field("loc.hc").length == 3 * 4 * K);
        int total = 0;
        for (const auto& f : layout.fields) {
          CHECK(f.offset == total);
          total += f.length;
        }
        CHECK(total == layout.size);
      }
  CHECK(tu_observation_layout(config(7, 21, 2)).size == 2 * 7 + 7 + 4);
  CHECK(bs_action_dim(21, 2) == 2 * 21 + 2 + 2);
}

TEST_CASE("observations at the first slot carry no history") {
  Rng rng(4);
  const auto c = config(3, 5, 1);
  const Codebook cb(4, c.codebookSize, c.compression);
  const auto in = catn::testing::random_instance(rng, 3, 5, 1, 4);
  const auto info = slot_info(in, c, cb);
  const auto layout = bs_observation_layout(c);
  const Vec o = build_bs_observation(c, 1, in.assoc, info.compressed, in.ch.auStats, nullptr);
  CHECK(o.size() == layout.size);
  for (const char* name : {"loc.p", "loc.rate", "loc.pr", "loc.beta", "in", "in_pri", "out", "out_pri"}) {
    const auto& f = layout.field(name);
    CHECK(o.segment(f.offset, f.length).isZero(0.0));
  }
  const Vec t = build_tu_observation(c, 2, in.ch.strengths().col(2), nullptr);
  CHECK(t.head(6).isZero(0.0));
  CHECK(t.tail(4).isZero(0.0));
}

TEST_CASE("a BS without users has masked local blocks") {
  Rng rng(5);
  const auto c = config(3, 5, 1);
  const Codebook cb(4, c.codebookSize, c.compression);
  auto in = catn::testing::random_instance(rng, 3, 5, 1, 4);
  in.assoc = phy::AssociationMap(3, {0, 0, 2, 2, 0});
  const auto info = slot_info(in, c, cb);
  const auto layout = bs_observation_layout(c);
  const Vec o = build_bs_observation(c, 1, in.assoc, info.compressed, in.ch.auStats, &info);
  for (const char* name : {"loc.chi", "loc.hc", "loc.p", "loc.rate", "loc.pr", "loc.beta"}) {
    const auto& f = layout.field(name);
    CHECK(o.segment(f.offset, f.length).isZero(0.0));
  }
}

TEST_CASE("delayed blocks never see current-slot data") {
  Rng rng(6);
  const auto c = config(3, 6, 1);
  const Codebook cb(4, c.codebookSize, c.compression);
  const auto before = catn::testing::random_instance(rng, 3, 6, 1, 4);
  const auto info = slot_info(before, c, cb);
  const auto now = catn::testing::random_instance(rng, 3, 6, 1, 4);
  auto tainted = now;
  for (auto& h : tainted.ch.tu) h *= 1e3;
  for (auto& s : tainted.ch.auStats) s = {9.0, 9.0, 9.0, 9.0};
  const auto layout = bs_observation_layout(c);
  for (int n = 0; n < 3; ++n) {
    std::vector<CompressedChannel> a, b;
    for (int m = 0; m < 3; ++m)
      for (int k = 0; k < 6; ++k) {
        a.push_back(compress_channel(now.ch.h(m, k), cb));
        b.push_back(compress_channel(tainted.ch.h(m, k), cb));
      }
    const Vec oa = build_bs_observation(c, n, now.assoc, a, now.ch.auStats, &info);
    const Vec ob = build_bs_observation(c, n, now.assoc, b, tainted.ch.auStats, &info);
    for (const char* name : {"loc.p", "loc.rate", "loc.pr", "loc.beta", "in", "in_pri", "out", "out_pri"}) {
      const auto& f = layout.field(name);
      CHECK(oa.segment(f.offset, f.length) == ob.segment(f.offset, f.length));
    }
    if (!now.assoc.users(n).empty()) {
      const auto& f = layout.field("loc.hc");
      CHECK(oa.segment(f.offset, f.length) != ob.segment(f.offset, f.length));
    }
  }
  const Vec ta = build_tu_observation(c, 0, now.ch.strengths().col(0), &info);
  const Vec tb = build_tu_observation(c, 0, tainted.ch.strengths().col(0), &info);
  CHECK(ta.head(6) == tb.head(6));
  CHECK(ta.tail(4) == tb.tail(4));
}

TEST_CASE("TU observation contents") {
  Rng rng(7);
  const auto c = config(3, 6, 1);
  const Codebook cb(4, c.codebookSize, c.compression);
  const auto in = catn::testing::random_instance(rng, 3, 6, 1, 4);
  const auto info = slot_info(in, c, cb);
  const Vec o = build_tu_observation(c, 4, in.ch.strengths().col(4), &info);
  CHECK(o.size() == 13);
  CHECK(o.head(3).sum() == 6.0);
  CHECK(o.segment(3, 3).sum() == 1.0);
  CHECK(o[3 + in.assoc.serving(4)] == 1.0);
  CHECK(o[9] == doctest::Approx(info.phy.power[4] / c.pMax));
  CHECK(o[10] == doctest::Approx(info.phy.rate[4]));
}

TEST_CASE("observation building is deterministic") {
  const auto c = config(3, 6, 1);
  const Codebook cb(4, c.codebookSize, c.compression);
  auto make = [&] {
    Rng rng(99);
    const auto in = catn::testing::random_instance(rng, 3, 6, 1, 4);
    const auto info = slot_info(in, c, cb);
    return build_bs_observation(c, 2, in.assoc, info.compressed, in.ch.auStats, &info);
  };
  const Vec a = make();
  const Vec b = make();
  CHECK(std::equal(a.data(), a.data() + a.size(), b.data()));
}

// --- actions ----------------------------------------------------------------

TEST_CASE("zero alpha and mu give matched filtering") {
  Rng rng(8);
  auto in = catn::testing::random_instance(rng, 2, 4, 1, 4);
  const int n = in.assoc.serving(0);
  Vec raw = Vec::Zero(bs_action_dim(4, 1));
  raw[0] = 1.0;
  raw.segment(1, 4).setConstant(0.5);
  raw[1 + 8] = 1.0;  // eta
  auto bf = phy::BeamformerSet::zeros(4, 4);
  decode_bs_action(raw, n, in.assoc, in.ch, 20.0, ActionScales{}, bf);
  double total = 0.0;
  for (int k : in.assoc.users(n)) {
    const CVec& h = in.ch.h(n, k);
    CHECK((bf.direction(k) - h / h.norm()).norm() < 1e-10);
    total += bf.power(k);
  }
  CHECK(total == doctest::Approx(20.0));
}

TEST_CASE("full power to a single user") {
  Rng rng(9);
  auto in = catn::testing::random_instance(rng, 2, 3, 1, 4);
  in.assoc = phy::AssociationMap(2, {1, 0, 0});
  Vec raw = Vec::Constant(bs_action_dim(3, 1), 0.3);
  raw[0] = 1.0;
  auto bf = phy::BeamformerSet::zeros(3, 4);
  decode_bs_action(raw, 1, in.assoc, in.ch, 20.0, ActionScales{}, bf);
  CHECK(bf.power(0) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(bf.power(1) == 0.0);
}

TEST_CASE("random actions decode to the regularized direction at the requested power") {
  Rng rng(10);
  const ActionScales sc;
  for (int trial = 0; trial < 100; ++trial) {
    const int N = 1 + uniform_index(rng, 3), K = 1 + uniform_index(rng, 6), L = 1 + uniform_index(rng, 2);
    auto in = catn::testing::random_instance(rng, N, K, L, 4);
    const int n = in.assoc.serving(0);
    Vec raw(bs_action_dim(K, L));
    for (auto& x : raw) x = uniform01(rng);
    auto bf = phy::BeamformerSet::zeros(K, 4);
    const auto d = decode_bs_action(raw, n, in.assoc, in.ch, 20.0, sc, bf);

    CMat D = CMat::Identity(4, 4) * std::max(sc.etaMax * raw[1 + 2 * K], sc.etaFloor);
    for (int i = 0; i < K; ++i) {
      const CVec u = in.ch.h(n, i) / in.ch.h(n, i).norm();
      D += sc.alphaMax * raw[1 + K + i] * u * u.adjoint();
    }
    for (int l = 0; l < L; ++l) {
      const CVec u = in.ch.g(n, l) / in.ch.g(n, l).norm();
      D += sc.muMax * raw[2 + 2 * K + l] * u * u.adjoint();
    }
    double total = 0.0, shares = 0.0;
    for (int k : in.assoc.users(n)) {
      const CVec x = D.fullPivLu().solve(in.ch.h(n, k));
      CHECK(std::abs(bf.direction(k).norm() - 1.0) < 1e-10);
      CHECK((bf.direction(k) - x / x.norm()).norm() < 1e-8);
      total += bf.power(k);
      shares += d.share[k];
    }
    CHECK(total == doctest::Approx(20.0 * std::max(raw[0], sc.minFraction)).epsilon(1e-10));
    CHECK(shares == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d.alpha.minCoeff() >= 0.0);
    CHECK(d.mu.minCoeff() >= 0.0);
    CHECK(d.eta > 0.0);
  }
}

TEST_CASE("jointly rescaling alpha, mu and eta keeps the direction") {
  Rng rng(11);
  auto in = catn::testing::random_instance(rng, 2, 4, 1, 4);
  const int n = in.assoc.serving(0);
  Vec raw(bs_action_dim(4, 1));
  for (auto& x : raw) x = 0.2 + 0.8 * uniform01(rng);
  Vec scaled = raw;
  scaled.segment(5, 4) *= 0.5;  // alpha
  scaled[9] *= 0.5;             // eta
  scaled[10] *= 0.5;            // mu
  auto a = phy::BeamformerSet::zeros(4, 4), b = a;
  decode_bs_action(raw, n, in.assoc, in.ch, 20.0, ActionScales{}, a);
  decode_bs_action(scaled, n, in.assoc, in.ch, 20.0, ActionScales{}, b);
  for (int k : in.assoc.users(n)) CHECK((a.direction(k) - b.direction(k)).norm() < 1e-10);
}

TEST_CASE("action values are clipped and shares renormalized") {
  const phy::AssociationMap assoc(2, {0, 1, 0});
  Vec raw = (Vec(bs_action_dim(3, 1)) << 1.7, 2.0, 0.4, 0.0, -1, 0.5, 3, 0.0, 0.0).finished();
  const auto d = parse_bs_action(raw, 0, assoc, 1, ActionScales{});
  CHECK(d.qTotal == 1.0);
  CHECK(d.share[0] + d.share[2] == doctest::Approx(1.0));
  CHECK(d.share[1] == 0.0);
  CHECK(d.alpha[0] == 0.0);
  CHECK(d.alpha[2] == 10.0);
  CHECK(d.eta == ActionScales{}.etaFloor);
  CHECK_THROWS(parse_bs_action(Vec::Zero(3), 0, assoc, 1, ActionScales{}));
}

// --- rewards and costs ------------------------------------------------------

TEST_CASE("rewards and costs agree with term-by-term evaluation") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const int N = 1 + uniform_index(rng, 4), K = 1 + uniform_index(rng, 8), L = 1 + uniform_index(rng, 2);
    const auto in = catn::testing::random_instance(rng, N, K, L, 1 + uniform_index(rng, 4));
    const auto snap = phy::evaluate(in.ch, in.assoc, in.bf, in.noise);
    for (int n = 0; n < N; ++n) {
      const auto victims = catn::testing::random_subset(rng, K, 4);
      CHECK(rel_close(bs_reward(snap, in.assoc, n, victims), catn::testing::ref_bs_reward(in, n, victims), 1e-10));
    }
    for (int k = 0; k < K; ++k) {
      const auto victims = catn::testing::random_subset(rng, K, 4);
      const bool ho = uniform01(rng) < 0.5;
      CHECK(rel_close(tu_reward(snap, k, ho, 0.4, victims), catn::testing::ref_tu_reward(in, k, ho, 0.4, victims), 1e-10));
    }
    const double iMax = 1e-13 * (0.1 + uniform01(rng));
    const Vec c = bs_cost(snap, iMax);
    for (int l = 0; l < L; ++l) CHECK(rel_close(c[l], catn::testing::ref_rho(in, l) / iMax - 1.0, 1e-10));
  }
}

TEST_CASE("reward degenerate cases") {
  Rng rng(13);
  auto in = catn::testing::random_instance(rng, 2, 4, 1, 4);
  in.assoc = phy::AssociationMap(2, {0, 0, 0, 0});
  const auto snap = phy::evaluate(in.ch, in.assoc, in.bf, in.noise);
  // BS 1 serves nobody and leaks nothing
  CHECK(bs_reward(snap, in.assoc, 1, {0, 1, 2}) == 0.0);
  // every victim term vanishes when beta_{n,i} is zero
  auto zeroed = snap;
  zeroed.betaFrom.setZero();
  CHECK(bs_reward(zeroed, in.assoc, 0, {0, 1, 2, 3}) == doctest::Approx(snap.rate.sum()));

  CHECK(tu_reward(snap, 2, false, 0.4, {}) == snap.rate[2]);
  CHECK(tu_reward(snap, 2, true, 0.4, {}) == doctest::Approx(0.4 * snap.rate[2]));
  CHECK(tu_reward(snap, 2, true, 0.4, {2}) == doctest::Approx(0.4 * snap.rate[2]));
}

TEST_CASE("cost and penalty arithmetic") {
  phy::PhySnapshot s;
  s.rho = (Vec(3) << 1.6e-13, 0.0, 3.2e-13).finished();
  const Vec c = bs_cost(s, 1.6e-13);
  CHECK(c[0] == doctest::Approx(0.0));
  CHECK(c[1] == -1.0);
  CHECK(c[2] == doctest::Approx(1.0));
  CHECK_THROWS(bs_cost(s, 0.0));

  CHECK(penalty_reward(2.0, (Vec(2) << 0.5, -1.0).finished(), 2.0) == doctest::Approx(1.0));
  CHECK(penalty_reward(2.0, (Vec(2) << -0.5, -1.0).finished(), 2.0) == 2.0);
  CHECK(penalty_reward(2.0, (Vec(2) << 0.5, 3.0).finished(), 0.0) == 2.0);
}

TEST_CASE("discounted cost is non-positive exactly when the discounted interference meets the limit") {
  Rng rng(14);
  const double iMax = 1.6e-13, gamma = 0.5;
  for (int trial = 0; trial < 200; ++trial) {
    double cost = 0.0, rho = 0.0, weight = 0.0, disc = 1.0;
    for (int t = 0; t < 30; ++t) {
      phy::PhySnapshot s;
      s.rho = Vec::Constant(1, iMax * 2.0 * uniform01(rng));
      cost += disc * bs_cost(s, iMax)[0];
      rho += disc * s.rho[0];
      weight += disc;
      disc *= gamma;
    }
    if (std::abs(rho / weight - iMax) < 1e-9 * iMax) continue;
    CHECK((cost <= 0.0) == (rho / weight <= iMax));
  }
}
