#include "catn/harness.hpp"

#include <chrono>
#include <sstream>
#include <stdexcept>

namespace catn {

namespace {

const std::pair<const char*, SchemeSpec::Ua> kUaNames[] = {
    {"d3qn", SchemeSpec::Ua::kD3qn},
    {"dcd", SchemeSpec::Ua::kDcd},
    {"sc", SchemeSpec::Ua::kSc},
    {"rand", SchemeSpec::Ua::kRand},
};

const std::pair<const char*, SchemeSpec::Bf> kBfNames[] = {
    {"cup", SchemeSpec::Bf::kCup},
    {"ppo", SchemeSpec::Bf::kPpo},
    {"wmmse", SchemeSpec::Bf::kWmmse},
    {"rand", SchemeSpec::Bf::kRand},
};

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

Vec uniform_action(int dim, Rng& rng) {
  Vec a(dim);
  for (int i = 0; i < dim; ++i) a[i] = uniform01(rng);
  return a;
}

}  // namespace

SchemeSpec SchemeSpec::parse(const std::string& text) {
  const auto dash = text.find('-');
  if (dash == std::string::npos) throw std::invalid_argument("scheme must look like <ua>-<bf>: " + text);
  const std::string ua = text.substr(0, dash);
  const std::string bf = text.substr(dash + 1);
  SchemeSpec s;
  bool okUa = false;
  bool okBf = false;
  for (const auto& [name, v] : kUaNames)
    if (ua == name) s.ua = v, okUa = true;
  for (const auto& [name, v] : kBfNames)
    if (bf == name) s.bf = v, okBf = true;
  if (!okUa) throw std::invalid_argument("unknown association scheme: " + ua);
  if (!okBf) throw std::invalid_argument("unknown beamforming scheme: " + bf);
  return s;
}

std::string SchemeSpec::name() const {
  std::string out;
  for (const auto& [n, v] : kUaNames)
    if (v == ua) out = n;
  for (const auto& [n, v] : kBfNames)
    if (v == bf) out += std::string("-") + n;
  return out;
}

Simulation::Simulation(const Scenario& scenario, const SchemeSpec& scheme, std::uint64_t seed)
    : sc_(scenario),
      scheme_(scheme),
      seed_(seed),
      model_(scenario.channel_params(), build_topology(scenario), seed),
      enc_(scenario.encoding_config()),
      codebook_(scenario.numAntennas(), scenario.codebookSize, scenario.compression),
      noise_(phy::uniform_noise(scenario.numTu, scenario.noiseW)),
      baselineRng_(make_rng(seed, Stream::kBaseline)) {
  sc_.validate();
  const int N = sc_.numBs;
  const int K = sc_.numTu;
  const int L = sc_.numAu;
  if (scheme_.learns_bs()) {
    const int obsDim = encoding::bs_observation_layout(enc_).size;
    const auto mode = scheme_.bf == SchemeSpec::Bf::kCup ? learners::CupAgent::Mode::kCup
                                                         : learners::CupAgent::Mode::kPpo;
    for (int n = 0; n < N; ++n) {
      bsAgents_.emplace_back(obsDim, encoding::bs_action_dim(K, L), L, sc_.bsHidden, sc_.cup,
                             derive_seed(seed, Stream::kBsAgent, static_cast<std::uint64_t>(n)),
                             mode);
    }
    bsBuffers_.resize(static_cast<size_t>(N));
  }
  if (scheme_.learns_tu()) {
    for (int k = 0; k < K; ++k) {
      tuAgents_.emplace_back(3 * N + 4, N, sc_.tuHidden, sc_.d3qn,
                             derive_seed(seed, Stream::kTuAgent, static_cast<std::uint64_t>(k)));
    }
  }
}

void Simulation::log(const char* phase) {
  if (events_) events_->emplace_back(phase);
}

phy::AssociationMap Simulation::choose_association(const channel::ChannelSet& ch,
                                                   const Mat& strengths, bool learn,
                                                   std::vector<Vec>& tuObs) {
  const int N = sc_.numBs;
  const int K = sc_.numTu;
  std::vector<int> serving(static_cast<size_t>(K), 0);

  switch (scheme_.ua) {
    case SchemeSpec::Ua::kD3qn: {
      const encoding::SlotInfo* prev = prev_ ? &*prev_ : nullptr;
      tuObs.resize(static_cast<size_t>(K));
      for (int k = 0; k < K; ++k)
        tuObs[static_cast<size_t>(k)] = encoding::build_tu_observation(enc_, k, strengths.col(k), prev);

      const bool warm = slot_ - 1 >= static_cast<int>(sc_.d3qn.batch);
      if (learn && slot_ > 0) {
        log("tu_store");
        for (int k = 0; k < K; ++k) {
          const auto ku = static_cast<size_t>(k);
          tuAgents_[ku].remember({prevTuObs_[ku], prev_->assoc.serving(k), prevTuReward_[ku],
                                  tuObs[ku]});
        }
        if (warm) {
          log("tu_update");
          for (auto& a : tuAgents_) {
            a.learn();
            a.maybe_sync();
          }
        }
      }
      log("tu_act");
      for (int k = 0; k < K; ++k) {
        auto& agent = tuAgents_[static_cast<size_t>(k)];
        int a;
        if (!learn) {
          a = agent.act(tuObs[static_cast<size_t>(k)], false);
        } else if (slot_ == 0 || !warm) {
          a = agent.random_action();
        } else {
          a = agent.act(tuObs[static_cast<size_t>(k)], true);
          agent.decay();
        }
        serving[static_cast<size_t>(k)] = a;
      }
      break;
    }
    case SchemeSpec::Ua::kDcd:
      log("tu_act");
      return baselines::stage1_ua_power(strengths, noise_, ch.numAntennas, sc_.pMaxW).assoc;
    case SchemeSpec::Ua::kSc:
      log("tu_act");
      return baselines::sc_associate(strengths);
    case SchemeSpec::Ua::kRand:
      log("tu_act");
      for (int k = 0; k < K; ++k) serving[static_cast<size_t>(k)] = uniform_index(baselineRng_, N);
      break;
  }
  return phy::AssociationMap(N, std::move(serving));
}

phy::BeamformerSet Simulation::choose_beamformers(const channel::ChannelSet& ch,
                                                  const phy::AssociationMap& assoc,
                                                  const std::vector<Vec>& bsObs, bool learn) {
  const int N = sc_.numBs;
  const int dim = encoding::bs_action_dim(sc_.numTu, sc_.numAu);
  auto bf = phy::BeamformerSet::zeros(sc_.numTu, ch.numAntennas);
  switch (scheme_.bf) {
    case SchemeSpec::Bf::kWmmse:
      return baselines::wmmse_cbf(ch, assoc, noise_, sc_.pMaxW, sc_.iMaxW).bf;
    case SchemeSpec::Bf::kRand:
      for (int n = 0; n < N; ++n) {
        encoding::decode_bs_action(uniform_action(dim, baselineRng_), n, assoc, ch, sc_.pMaxW,
                                   sc_.scales, bf);
      }
      return bf;
    case SchemeSpec::Bf::kCup:
    case SchemeSpec::Bf::kPpo:
      prevBsAction_.resize(static_cast<size_t>(N));
      for (int n = 0; n < N; ++n) {
        auto& agent = bsAgents_[static_cast<size_t>(n)];
        Vec raw = learn && slot_ == 0 ? uniform_action(dim, agent.rng())
                                      : agent.act(bsObs[static_cast<size_t>(n)], learn);
        encoding::decode_bs_action(raw, n, assoc, ch, sc_.pMaxW, sc_.scales, bf);
        prevBsAction_[static_cast<size_t>(n)] = std::move(raw);
      }
      return bf;
  }
  return bf;
}

SlotRecord Simulation::step(bool learn) {
  const int N = sc_.numBs;
  const int K = sc_.numTu;
  const int L = sc_.numAu;
  const auto t0 = Clock::now();
  PhaseTiming timing;
  timing.slot = slot_;

  if (slot_ > 0) model_.advance();
  log("measure");
  channel::ChannelSet ch = model_.realize();
  const Mat strengths = ch.strengths();

  std::vector<Vec> tuObs;
  const phy::AssociationMap assoc = choose_association(ch, strengths, learn, tuObs);
  timing.tuMs = ms_since(t0);
  const auto tBs = Clock::now();

  log("bs_csi");
  std::vector<encoding::CompressedChannel> compressed;
  std::vector<Vec> bsObs;
  if (scheme_.learns_bs()) {
    compressed.reserve(static_cast<size_t>(N * K));
    for (int n = 0; n < N; ++n)
      for (int k = 0; k < K; ++k) compressed.push_back(encoding::compress_channel(ch.h(n, k), codebook_));
  }
  log("bs_exchange");
  if (scheme_.learns_bs()) {
    const encoding::SlotInfo* prev = prev_ ? &*prev_ : nullptr;
    for (int n = 0; n < N; ++n)
      bsObs.push_back(encoding::build_bs_observation(enc_, n, assoc, compressed, ch.auStats, prev));

    if (learn && slot_ > 0) {
      log("bs_store");
      for (int n = 0; n < N; ++n) {
        const auto nu = static_cast<size_t>(n);
        bsBuffers_[nu].push_back({prevBsObs_[nu], prevBsAction_[nu], prevBsReward_[nu], bsObs[nu],
                                  prevCost_});
      }
      if (static_cast<int>(bsBuffers_.front().size()) >= sc_.bsMemory) {
        log("bs_update");
        for (int n = 0; n < N; ++n) {
          const auto st = bsAgents_[static_cast<size_t>(n)].update(bsBuffers_[static_cast<size_t>(n)]);
          if (updates_) updates_->push_back(st);
          bsBuffers_[static_cast<size_t>(n)].clear();
        }
      }
    }
  }

  log("bs_act");
  phy::BeamformerSet bf = choose_beamformers(ch, assoc, bsObs, learn);
  for (int n = 0; n < N; ++n) {
    const double p = bf.bsPower(assoc, n);
    if (!(p <= sc_.pMaxW * (1.0 + 1e-9))) {
      std::ostringstream msg;
      msg << "slot " << slot_ << ": BS " << n << " transmits " << p << " W > P_max " << sc_.pMaxW
          << " W (scheme " << scheme_.name() << ", users";
      for (int k : assoc.users(n)) msg << ' ' << k << ':' << bf.power(k);
      msg << ")";
      throw std::runtime_error(msg.str());
    }
  }
  timing.bsMs = ms_since(tBs);
  const auto tTx = Clock::now();

  log("transmit");
  phy::PhySnapshot snap = phy::evaluate(ch, assoc, bf, noise_);
  Mat auStrengths(N, L);
  for (int n = 0; n < N; ++n)
    for (int l = 0; l < L; ++l) auStrengths(n, l) = ch.g(n, l).squaredNorm();
  encoding::InterfererSets sets =
      encoding::select_interferer_sets(snap, assoc, strengths, auStrengths, sc_.sets);

  log("reward");
  SlotRecord rec;
  rec.slot = slot_;
  rec.rate = snap.rate;
  rec.sumRate = snap.sumRate();
  rec.rho = snap.rho;
  rec.cost = encoding::bs_cost(snap, sc_.iMaxW);
  rec.bsReward.resize(N);
  for (int n = 0; n < N; ++n)
    rec.bsReward[n] = encoding::bs_reward(snap, assoc, n, sets.bsVictims[static_cast<size_t>(n)]);
  rec.serving = assoc.serving();
  rec.handover.assign(static_cast<size_t>(K), 0);
  for (int k = 0; k < K; ++k)
    if (prev_ && prev_->assoc.serving(k) != assoc.serving(k)) rec.handover[static_cast<size_t>(k)] = 1;

  if (scheme_.learns_tu()) {
    prevTuReward_.resize(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k) {
      const auto& victims = sets.bsVictims[static_cast<size_t>(assoc.serving(k))];
      prevTuReward_[static_cast<size_t>(k)] = encoding::tu_reward(
          snap, k, rec.handover[static_cast<size_t>(k)] != 0, sc_.zetaR, victims);
    }
    prevTuObs_ = std::move(tuObs);
  }
  if (scheme_.learns_bs()) {
    prevBsReward_.resize(static_cast<size_t>(N));
    for (int n = 0; n < N; ++n) {
      double r = rec.bsReward[n];
      if (scheme_.bf == SchemeSpec::Bf::kPpo) r = encoding::penalty_reward(r, rec.cost, sc_.penaltyZeta);
      prevBsReward_[static_cast<size_t>(n)] = r;
    }
    prevBsObs_ = std::move(bsObs);
    prevCost_ = rec.cost;
  }

  prev_ = encoding::SlotInfo{assoc, std::move(snap), std::move(compressed), ch.auStats,
                             std::move(sets)};
  lastBf_ = std::move(bf);
  lastChannels_ = std::move(ch);
  ++slot_;

  if (timing_) {
    timing.transmitMs = ms_since(tTx);
    timing.totalMs = ms_since(t0);
    timing_->push_back(timing);
  }
  return rec;
}

std::vector<SlotRecord> run(Simulation& sim, const RunOptions& opts) {
  const int slots = opts.slots > 0 ? opts.slots : sim.scenario().slots;
  sim.set_timing(opts.timing);
  std::vector<SlotRecord> out;
  out.reserve(static_cast<size_t>(slots));
  for (int t = 0; t < slots; ++t) {
    out.push_back(sim.step(opts.learn));
    if (opts.onSlot) opts.onSlot(out.back());
  }
  sim.set_timing(nullptr);
  return out;
}

}  // namespace catn
