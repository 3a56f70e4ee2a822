#include "catn/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "catn/metrics.hpp"

namespace catn::checkpoint {

namespace {

constexpr const char* kMagic = "catn-checkpoint";
constexpr int kVersion = 1;

std::string hex(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

void put_vec(std::ostream& out, const std::string& name, const Vec& v) {
  out << "vec " << name << ' ' << v.size();
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << hex(v[i]);
  out << '\n';
}

void put_adam(std::ostream& out, const std::string& name, const nn::Adam& a) {
  out << "adam " << name << ' ' << a.steps() << '\n';
  put_vec(out, name + ".m", a.first_moment());
  put_vec(out, name + ".v", a.second_moment());
}

void put_sizes(std::ostream& out, const nn::Mlp& m) {
  out << "sizes";
  for (int s : m.sizes()) out << ' ' << s;
  out << '\n';
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) throw std::runtime_error("checkpoint: unexpected end of file");
    return w;
  }
  void expect(const std::string& w) {
    const std::string got = word();
    if (got != w) throw std::runtime_error("checkpoint: expected '" + w + "', found '" + got + "'");
  }
  long integer() {
    const std::string w = word();
    char* end = nullptr;
    const long v = std::strtol(w.c_str(), &end, 10);
    if (*end) throw std::runtime_error("checkpoint: bad integer '" + w + "'");
    return v;
  }
  unsigned long long unsigned_integer() {
    const std::string w = word();
    char* end = nullptr;
    const auto v = std::strtoull(w.c_str(), &end, 10);
    if (*end) throw std::runtime_error("checkpoint: bad integer '" + w + "'");
    return v;
  }
  double real() {
    const std::string w = word();
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (*end) throw std::runtime_error("checkpoint: bad number '" + w + "'");
    return v;
  }
  Vec vec(const std::string& name, Eigen::Index expected) {
    expect("vec");
    expect(name);
    const long n = integer();
    if (n != expected)
      throw std::runtime_error("checkpoint: " + name + " has " + std::to_string(n) +
                               " entries, expected " + std::to_string(expected));
    Vec v(n);
    for (long i = 0; i < n; ++i) v[i] = real();
    return v;
  }
  void adam(const std::string& name, nn::Adam& a) {
    expect("adam");
    expect(name);
    const long t = integer();
    Vec m = vec(name + ".m", a.first_moment().size());
    Vec v = vec(name + ".v", a.second_moment().size());
    a.restore(t, std::move(m), std::move(v));
  }
  void sizes(const nn::Mlp& m) {
    expect("sizes");
    for (int s : m.sizes())
      if (integer() != s) throw std::runtime_error("checkpoint: network shape mismatch");
  }
  void rng(Rng& r) {
    expect("rng");
    if (!(in_ >> r)) throw std::runtime_error("checkpoint: bad rng state");
  }
  std::istream& stream() { return in_; }

 private:
  std::istream& in_;
};

Header parse_header(Reader& rd) {
  rd.expect(kMagic);
  if (rd.integer() != kVersion) throw std::runtime_error("checkpoint: unsupported version");
  Header h;
  rd.expect("scheme");
  h.scheme = SchemeSpec::parse(rd.word());
  rd.expect("seed");
  h.seed = rd.unsigned_integer();
  rd.expect("slot");
  h.slot = static_cast<int>(rd.integer());
  rd.expect("scenario");
  const long lines = rd.integer();
  std::string rest;
  std::getline(rd.stream(), rest);
  std::string ini;
  for (long i = 0; i < lines; ++i) {
    std::string line;
    if (!std::getline(rd.stream(), line)) throw std::runtime_error("checkpoint: truncated scenario");
    ini += line + "\n";
  }
  h.scenario = parse_scenario(ini);
  return h;
}

}  // namespace

std::string serialize(Simulation& sim) {
  std::ostringstream out;
  const std::string ini = scenario_to_ini(sim.scenario());
  const long lines = static_cast<long>(std::count(ini.begin(), ini.end(), '\n'));
  out << kMagic << ' ' << kVersion << '\n';
  out << "scheme " << sim.scheme().name() << '\n';
  out << "seed " << sim.seed() << '\n';
  out << "slot " << sim.slot() << '\n';
  out << "scenario " << lines << '\n' << ini;

  out << "bs_agents " << sim.bs_agents().size() << '\n';
  for (size_t n = 0; n < sim.bs_agents().size(); ++n) {
    auto& a = sim.bs_agents()[n];
    out << "bs_agent " << n << '\n';
    put_sizes(out, a.policy().net());
    put_vec(out, "policy", a.policy().net().params());
    put_vec(out, "log_std", a.policy().log_std());
    put_vec(out, "value", a.value().params());
    put_vec(out, "cost_value", a.cost_value().params());
    put_vec(out, "nu", a.nu());
    put_adam(out, "policy_opt", a.policy_opt());
    put_adam(out, "value_opt", a.value_opt());
    put_adam(out, "cost_value_opt", a.cost_value_opt());
    out << "rng " << a.rng() << '\n';
  }
  out << "tu_agents " << sim.tu_agents().size() << '\n';
  for (size_t k = 0; k < sim.tu_agents().size(); ++k) {
    auto& a = sim.tu_agents()[k];
    out << "tu_agent " << k << '\n';
    put_sizes(out, a.online().net());
    put_vec(out, "online", a.online().net().params());
    put_vec(out, "target", a.target().net().params());
    put_adam(out, "opt", a.opt());
    out << "eps " << hex(a.eps()) << '\n';
    out << "sync " << a.sync().count() << '\n';
    out << "rng " << a.rng() << '\n';
  }
  out << "end\n";
  return out.str();
}

void deserialize(Simulation& sim, const std::string& text) {
  std::istringstream in(text);
  Reader rd(in);
  const Header h = parse_header(rd);
  if (h.scheme.name() != sim.scheme().name())
    throw std::runtime_error("checkpoint: scheme " + h.scheme.name() + " does not match " +
                             sim.scheme().name());

  rd.expect("bs_agents");
  if (rd.integer() != static_cast<long>(sim.bs_agents().size()))
    throw std::runtime_error("checkpoint: BS agent count mismatch");
  for (size_t n = 0; n < sim.bs_agents().size(); ++n) {
    auto& a = sim.bs_agents()[n];
    rd.expect("bs_agent");
    rd.integer();
    rd.sizes(a.policy().net());
    a.policy().net().params() = rd.vec("policy", a.policy().net().params().size());
    a.policy().log_std() = rd.vec("log_std", a.policy().log_std().size());
    a.value().params() = rd.vec("value", a.value().params().size());
    a.cost_value().params() = rd.vec("cost_value", a.cost_value().params().size());
    a.nu() = rd.vec("nu", a.nu().size());
    rd.adam("policy_opt", a.policy_opt());
    rd.adam("value_opt", a.value_opt());
    rd.adam("cost_value_opt", a.cost_value_opt());
    rd.rng(a.rng());
  }
  rd.expect("tu_agents");
  if (rd.integer() != static_cast<long>(sim.tu_agents().size()))
    throw std::runtime_error("checkpoint: TU agent count mismatch");
  for (size_t k = 0; k < sim.tu_agents().size(); ++k) {
    auto& a = sim.tu_agents()[k];
    rd.expect("tu_agent");
    rd.integer();
    rd.sizes(a.online().net());
    a.online().net().params() = rd.vec("online", a.online().net().params().size());
    a.target().net().params() = rd.vec("target", a.target().net().params().size());
    rd.adam("opt", a.opt());
    rd.expect("eps");
    a.eps() = rd.real();
    rd.expect("sync");
    a.sync().set_count(static_cast<int>(rd.integer()));
    rd.rng(a.rng());
  }
  rd.expect("end");
}

void save(Simulation& sim, const std::string& path, bool force) {
  metrics::ensure_writable(path, force);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << serialize(sim);
}

void load(Simulation& sim, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  deserialize(sim, buf.str());
}

Header read_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  Reader rd(in);
  return parse_header(rd);
}

}  // namespace catn::checkpoint
