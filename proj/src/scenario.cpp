#include "catn/scenario.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace catn {

channel::ChannelParams Scenario::channel_params() const {
  channel::ChannelParams p;
  p.carrierHz = carrierHz;
  p.alpha = alpha;
  p.kappaDb = kappaDb;
  p.slotSeconds = slotSeconds;
  p.array.mh = mh;
  p.array.mv = mv;
  p.array.wavelength = kSpeedOfLight / carrierHz;
  p.array.spacing = p.array.wavelength / 2.0;
  return p;
}

encoding::EncodingConfig Scenario::encoding_config() const {
  encoding::EncodingConfig c;
  c.numBs = numBs;
  c.numTu = numTu;
  c.numAu = numAu;
  c.codebookSize = codebookSize;
  c.compression = compression;
  c.sets = sets;
  c.pMax = pMaxW;
  c.iMax = iMaxW;
  c.noiseRef = noiseW;
  return c;
}

void Scenario::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("scenario: ") + what);
  };
  need(numBs >= 1 && numTu >= 1 && numAu >= 1, "N, K and L must be >= 1");
  need(mh >= 1 && mv >= 1, "array dimensions must be >= 1");
  need(carrierHz > 0 && bandwidthHz > 0 && slotSeconds > 0, "frequencies and slot length must be > 0");
  need(noiseW > 0 && pMaxW > 0 && iMaxW > 0, "noise, P_max and I_max must be > 0");
  need(alpha >= 0 && alpha <= 1, "alpha must lie in [0, 1]");
  need(zetaR >= 0 && zetaR <= 1, "zeta_R must lie in [0, 1]");
  need(slots >= 0, "slots must be >= 0");
  need(codebookSize >= 1 && compression >= 1 && compression <= codebookSize,
       "codebook size / compression factor");
  need(sets.bIn >= 1 && sets.bInPri >= 1 && sets.kIn >= 1 && sets.kOut >= 1, "set sizes must be >= 1");
  need(bsMemory >= 1 && cup.minibatch >= 1 && cup.epochs >= 1, "BS buffer, minibatch and epochs");
  need(d3qn.batch >= 1 && d3qn.memory >= d3qn.batch, "TU replay memory must hold one batch");
  need(d3qn.targetPeriod >= 1, "target period must be >= 1");
  need(!bsHidden.empty() && !tuHidden.empty(), "hidden layer lists must be non-empty");
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::string to_text(const T& v) {
  if constexpr (std::is_same_v<T, double>) {
    return fmt_double(v);
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, std::vector<int>>) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
  } else {
    return std::to_string(v);
  }
}

template <class T>
T from_text(const std::string& key, const std::string& text) {
  try {
    size_t used = 0;
    if constexpr (std::is_same_v<T, double>) {
      const double v = std::stod(text, &used);
      if (used == text.size()) return v;
    } else if constexpr (std::is_same_v<T, std::string>) {
      return text;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
      std::vector<int> out;
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) out.push_back(from_text<int>(key, item));
      return out;
    } else if constexpr (std::is_same_v<T, int>) {
      const int v = std::stoi(text, &used);
      if (used == text.size()) return v;
    } else {
      const auto v = static_cast<T>(std::stoull(text, &used));
      if (used == text.size() && text.find('-') == std::string::npos) return v;
    }
  } catch (const std::logic_error&) {
  }
  throw std::invalid_argument("scenario: bad value for " + key + ": '" + text + "'");
}

struct Entry {
  std::string path;  // section.key
  std::function<std::string(const Scenario&)> get;
  std::function<void(Scenario&, const std::string&)> set;
};

template <class Ref>
Entry entry(std::string path, Ref ref) {
  using T = std::remove_reference_t<decltype(ref(std::declval<Scenario&>()))>;
  return {path, [ref](const Scenario& s) { return to_text(ref(const_cast<Scenario&>(s))); },
          [ref, path](Scenario& s, const std::string& v) { ref(s) = from_text<T>(path, v); }};
}

#define CATN_KEY(path, member) entry(path, [](Scenario& s) -> auto& { return s.member; })

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      CATN_KEY("scenario.name", name),
      CATN_KEY("network.bs", numBs),
      CATN_KEY("network.tu", numTu),
      CATN_KEY("network.au", numAu),
      CATN_KEY("network.array_h", mh),
      CATN_KEY("network.array_v", mv),
      CATN_KEY("radio.carrier_hz", carrierHz),
      CATN_KEY("radio.bandwidth_hz", bandwidthHz),
      CATN_KEY("radio.noise_w", noiseW),
      CATN_KEY("radio.p_max_w", pMaxW),
      CATN_KEY("radio.i_max_w", iMaxW),
      CATN_KEY("radio.alpha", alpha),
      CATN_KEY("radio.kappa_db", kappaDb),
      CATN_KEY("radio.zeta_r", zetaR),
      CATN_KEY("radio.slot_s", slotSeconds),
      CATN_KEY("radio.slots", slots),
      CATN_KEY("geometry.bs_height", bsHeight),
      CATN_KEY("geometry.tu_height", tuHeight),
      CATN_KEY("geometry.au_height", auHeight),
      CATN_KEY("geometry.au_speed", auSpeed),
      CATN_KEY("geometry.isd", interSiteDistance),
      CATN_KEY("geometry.tu_speed", tuSpeed),
      CATN_KEY("geometry.tu_min_radius", tuMinRadius),
      CATN_KEY("geometry.tu_max_radius", tuMaxRadius),
      CATN_KEY("geometry.au_lateral_offset", auLateralOffset),
      CATN_KEY("geometry.seed", topologySeed),
      CATN_KEY("encoding.codebook", codebookSize),
      CATN_KEY("encoding.compression", compression),
      CATN_KEY("encoding.b_in", sets.bIn),
      CATN_KEY("encoding.b_in_pri", sets.bInPri),
      CATN_KEY("encoding.k_in", sets.kIn),
      CATN_KEY("encoding.k_out", sets.kOut),
      CATN_KEY("encoding.alpha_max", scales.alphaMax),
      CATN_KEY("encoding.mu_max", scales.muMax),
      CATN_KEY("encoding.eta_max", scales.etaMax),
      CATN_KEY("encoding.eta_floor", scales.etaFloor),
      CATN_KEY("bs_agent.hidden", bsHidden),
      CATN_KEY("bs_agent.memory", bsMemory),
      CATN_KEY("bs_agent.gamma", cup.gamma),
      CATN_KEY("bs_agent.lambda", cup.lambda),
      CATN_KEY("bs_agent.lr_nu", cup.alphaNu),
      CATN_KEY("bs_agent.lr_value", cup.lrValue),
      CATN_KEY("bs_agent.lr_policy", cup.lrPolicy),
      CATN_KEY("bs_agent.nu_init", cup.nuInit),
      CATN_KEY("bs_agent.nu_max", cup.nuMax),
      CATN_KEY("bs_agent.cost_limit", cup.costLimit),
      CATN_KEY("bs_agent.kl_bound", cup.klBound),
      CATN_KEY("bs_agent.clip", cup.clipEps),
      CATN_KEY("bs_agent.minibatch", cup.minibatch),
      CATN_KEY("bs_agent.epochs", cup.epochs),
      CATN_KEY("bs_agent.grad_clip", cup.gradClip),
      CATN_KEY("bs_agent.log_std_init", cup.logStdInit),
      CATN_KEY("bs_agent.normalize_advantages", cup.normalizeAdvantages),
      CATN_KEY("bs_agent.penalty_zeta", penaltyZeta),
      CATN_KEY("tu_agent.hidden", tuHidden),
      CATN_KEY("tu_agent.gamma", d3qn.gamma),
      CATN_KEY("tu_agent.lr", d3qn.lr),
      CATN_KEY("tu_agent.eps0", d3qn.eps0),
      CATN_KEY("tu_agent.eps_min", d3qn.epsFloor),
      CATN_KEY("tu_agent.eps_decay", d3qn.epsDecay),
      CATN_KEY("tu_agent.memory", d3qn.memory),
      CATN_KEY("tu_agent.batch", d3qn.batch),
      CATN_KEY("tu_agent.target_period", d3qn.targetPeriod),
      CATN_KEY("tu_agent.grad_clip", d3qn.gradClip),
  };
  return table;
}

#undef CATN_KEY

}  // namespace

Scenario parse_scenario(const std::string& iniText) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(iniText);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("scenario: ") + e.message() + " at line " +
                                std::to_string(e.line()));
  }
  Scenario s;
  for (const auto& [section, keys] : tree) {
    if (keys.empty() && !keys.data().empty())
      throw std::invalid_argument("scenario: key outside a section: " + section);
    for (const auto& [key, value] : keys) {
      const std::string path = section + "." + key;
      bool known = false;
      for (const auto& e : entries()) {
        if (e.path == path) {
          e.set(s, value.get_value<std::string>());
          known = true;
          break;
        }
      }
      if (!known) throw std::invalid_argument("scenario: unknown key " + path);
    }
  }
  s.validate();
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::string scenario_to_ini(const Scenario& s) {
  std::string out;
  std::string current;
  for (const auto& e : entries()) {
    const auto dot = e.path.find('.');
    const std::string section = e.path.substr(0, dot);
    if (section != current) {
      out += (current.empty() ? "[" : "\n[") + section + "]\n";
      current = section;
    }
    out += e.path.substr(dot + 1) + " = " + e.get(s) + "\n";
  }
  return out;
}

namespace {

// Spiral order over a hexagonal grid: center, then ring 1, ring 2, ...
std::vector<channel::Position3D> hex_sites(int count, double isd, double height) {
  std::vector<channel::Position3D> sites{{0.0, 0.0, height}};
  const double dirs[6][2] = {{1, 0}, {0.5, std::sqrt(3.0) / 2}, {-0.5, std::sqrt(3.0) / 2},
                             {-1, 0}, {-0.5, -std::sqrt(3.0) / 2}, {0.5, -std::sqrt(3.0) / 2}};
  for (int ring = 1; static_cast<int>(sites.size()) < count; ++ring) {
    double x = ring * isd * dirs[4][0];
    double y = ring * isd * dirs[4][1];
    for (int side = 0; side < 6; ++side) {
      for (int step = 0; step < ring; ++step) {
        if (static_cast<int>(sites.size()) < count) sites.push_back({x, y, height});
        x += isd * dirs[side][0];
        y += isd * dirs[side][1];
      }
    }
  }
  sites.resize(static_cast<size_t>(count));
  return sites;
}

}  // namespace

channel::Topology build_topology(const Scenario& s) {
  channel::Topology topo;
  topo.bs = hex_sites(s.numBs, s.interSiteDistance, s.bsHeight);
  const double duration = std::max(1, s.slots) * s.slotSeconds;

  for (int k = 0; k < s.numTu; ++k) {
    Rng rng = make_rng(s.topologySeed, Stream::kTrajectory, 0, static_cast<std::uint64_t>(k));
    const auto& home = topo.bs[static_cast<size_t>(k % s.numBs)];
    const double bearing = 2.0 * kPi * uniform01(rng);
    const double r = s.tuMinRadius + (s.tuMaxRadius - s.tuMinRadius) * uniform01(rng);
    const double walk = 20.0 + 20.0 * uniform01(rng);
    const double start = 2.0 * kPi * uniform01(rng);
    channel::Position3D center{home.x + r * std::cos(bearing), home.y + r * std::sin(bearing),
                               s.tuHeight};
    topo.tu.push_back(channel::Trajectory::circular_arc(center, walk, start, s.tuSpeed, duration));
  }

  for (int l = 0; l < s.numAu; ++l) {
    const double y = s.auLateralOffset * (2.0 * l - s.numAu + 1);
    const double heading = l % 2 == 0 ? 0.0 : kPi;
    const double half = 0.5 * s.auSpeed * duration;
    channel::Position3D startPos{l % 2 == 0 ? -half : half, y, s.auHeight};
    topo.au.push_back(channel::Trajectory::straight(startPos, s.auSpeed, heading, duration));
  }
  return topo;
}

}  // namespace catn
