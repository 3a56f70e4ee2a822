#include "catn/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace catn::metrics {

Vec moving_average(const Vec& x, int span) {
  if (span < 1) throw std::invalid_argument("moving_average: span must be >= 1");
  const Eigen::Index n = x.size();
  const Eigen::Index half = span / 2;
  Vec out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index h = std::min({half, i, n - 1 - i});
    out[i] = x.segment(i - h, 2 * h + 1).mean();
  }
  return out;
}

Summary summarize(const std::vector<SlotRecord>& records, double slotSeconds, double bandwidthHz,
                  double zetaR, double iMax) {
  Summary s;
  s.slots = static_cast<int>(records.size());
  if (records.empty()) return s;
  const Eigen::Index L = records.front().rho.size();
  s.meanRhoRatio = Vec::Zero(L);
  double bits = 0.0;
  long handovers = 0;
  long tuSlots = 0;
  for (const auto& r : records) {
    s.meanSumRate += r.sumRate;
    s.meanRhoRatio += r.rho / iMax;
    for (Eigen::Index k = 0; k < r.rate.size(); ++k) {
      const bool ho = r.handover[static_cast<size_t>(k)] != 0;
      bits += r.rate[k] * bandwidthHz * slotSeconds * (ho ? zetaR : 1.0);
      handovers += ho ? 1 : 0;
    }
    tuSlots += r.rate.size();
  }
  const double n = static_cast<double>(records.size());
  s.meanSumRate /= n;
  s.meanRhoRatio /= n;
  s.throughputBps = bits / (n * slotSeconds);
  s.handoverPercent = tuSlots ? 100.0 * static_cast<double>(handovers) / static_cast<double>(tuSlots) : 0.0;
  return s;
}

long learning_exchange_count(int numTu, int numAu, int compression, const encoding::SetSizes& s) {
  const long K = numTu;
  const long L = numAu;
  return (3L * compression * K + K + 2) * s.bIn * s.kIn + (K + 6) * s.bInPri * L +
         3L * s.kOut * s.bIn + 2 * L;
}

long optimizer_exchange_count(int numBs, int numTu, int numAu, int numAntennas) {
  const long base = 2L * numAntennas * (numBs - 1);
  return base * numTu + base * numAu;
}

long exchange_count(const Scenario& sc, const SchemeSpec& scheme) {
  if (scheme.learns_bs()) return learning_exchange_count(sc.numTu, sc.numAu, sc.compression, sc.sets);
  if (scheme.bf == SchemeSpec::Bf::kWmmse)
    return optimizer_exchange_count(sc.numBs, sc.numTu, sc.numAu, sc.numAntennas());
  return 0;
}

// --- Persistence --------------------------------------------------------------

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

int count_prefix(const std::vector<std::string>& cols, const std::string& prefix) {
  return static_cast<int>(std::count_if(cols.begin(), cols.end(), [&](const std::string& c) {
    return c.rfind(prefix, 0) == 0;
  }));
}

}  // namespace

std::string csv_header(int numBs, int numTu, int numAu) {
  std::string h = "slot,sum_rate";
  for (int k = 0; k < numTu; ++k) h += ",rate_" + std::to_string(k);
  for (int l = 0; l < numAu; ++l) h += ",rho_" + std::to_string(l);
  for (int l = 0; l < numAu; ++l) h += ",cost_" + std::to_string(l);
  for (int n = 0; n < numBs; ++n) h += ",reward_" + std::to_string(n);
  for (int k = 0; k < numTu; ++k) h += ",serving_" + std::to_string(k);
  for (int k = 0; k < numTu; ++k) h += ",handover_" + std::to_string(k);
  return h;
}

void ensure_writable(const std::string& path, bool force) {
  if (!force && std::filesystem::exists(path))
    throw std::runtime_error("refusing to overwrite " + path + " (use --force)");
}

void write_csv(const std::vector<SlotRecord>& records, int numBs, int numTu, int numAu,
               const std::string& path, bool force) {
  ensure_writable(path, force);
  auto out = open_out(path);
  out << csv_header(numBs, numTu, numAu) << '\n';
  for (const auto& r : records) {
    out << r.slot << ',' << num(r.sumRate);
    for (Eigen::Index k = 0; k < r.rate.size(); ++k) out << ',' << num(r.rate[k]);
    for (Eigen::Index l = 0; l < r.rho.size(); ++l) out << ',' << num(r.rho[l]);
    for (Eigen::Index l = 0; l < r.cost.size(); ++l) out << ',' << num(r.cost[l]);
    for (Eigen::Index n = 0; n < r.bsReward.size(); ++n) out << ',' << num(r.bsReward[n]);
    for (int s : r.serving) out << ',' << s;
    for (int h : r.handover) out << ',' << h;
    out << '\n';
  }
}

std::vector<SlotRecord> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": missing header");
  const auto cols = split(line, ',');
  if (cols.size() < 2 || cols[0] != "slot" || cols[1] != "sum_rate")
    throw std::runtime_error(path + ": not a metrics file");
  const int K = count_prefix(cols, "rate_");
  const int L = count_prefix(cols, "rho_");
  const int N = count_prefix(cols, "reward_");
  if (csv_header(N, K, L) != line) throw std::runtime_error(path + ": unexpected header");

  std::vector<SlotRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != cols.size()) throw std::runtime_error(path + ": ragged row");
    SlotRecord r;
    size_t i = 0;
    r.slot = std::stoi(f[i++]);
    r.sumRate = std::stod(f[i++]);
    r.rate.resize(K);
    for (int k = 0; k < K; ++k) r.rate[k] = std::stod(f[i++]);
    r.rho.resize(L);
    for (int l = 0; l < L; ++l) r.rho[l] = std::stod(f[i++]);
    r.cost.resize(L);
    for (int l = 0; l < L; ++l) r.cost[l] = std::stod(f[i++]);
    r.bsReward.resize(N);
    for (int n = 0; n < N; ++n) r.bsReward[n] = std::stod(f[i++]);
    for (int k = 0; k < K; ++k) r.serving.push_back(std::stoi(f[i++]));
    for (int k = 0; k < K; ++k) r.handover.push_back(std::stoi(f[i++]));
    out.push_back(std::move(r));
  }
  return out;
}

void write_timing_csv(const std::vector<PhaseTiming>& timing, const std::string& path) {
  auto out = open_out(path);
  out << "slot,tu_ms,bs_ms,transmit_ms,total_ms\n";
  for (const auto& t : timing)
    out << t.slot << ',' << num(t.tuMs) << ',' << num(t.bsMs) << ',' << num(t.transmitMs) << ','
        << num(t.totalMs) << '\n';
}

double mean_timing_ms(const std::string& path) {
  std::ifstream in(path);
  if (!in) return 0.0;
  std::string line;
  std::getline(in, line);
  double sum = 0.0;
  long n = 0;
  while (std::getline(in, line)) {
    const auto f = split(line, ',');
    if (f.size() == 5) {
      sum += std::stod(f[4]);
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

void write_plot_data(const Vec& series, int span, const std::string& header,
                     const std::string& path) {
  const Vec ma = moving_average(series, span);
  auto out = open_out(path);
  out << "slot," << header << '\n';
  for (Eigen::Index i = 0; i < ma.size(); ++i) out << i << ',' << num(ma[i]) << '\n';
}

std::string summary_json(const Summary& s, const Scenario& sc) {
  nlohmann::ordered_json j;
  j["scheme"] = s.scheme;
  j["scenario"] = sc.name;
  j["slots"] = s.slots;
  j["mean_sum_rate"] = s.meanSumRate;
  j["throughput_bps"] = s.throughputBps;
  j["mean_rho_ratio"] = std::vector<double>(s.meanRhoRatio.data(),
                                            s.meanRhoRatio.data() + s.meanRhoRatio.size());
  j["handover_percent"] = s.handoverPercent;
  j["mean_slot_ms"] = s.meanSlotMs;
  j["exchange_count"] = s.exchangeCount;
  return j.dump(2) + "\n";
}

Summary read_summary_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  const auto j = nlohmann::json::parse(in);
  Summary s;
  s.scheme = j.at("scheme").get<std::string>();
  s.slots = j.at("slots").get<int>();
  s.meanSumRate = j.at("mean_sum_rate").get<double>();
  s.throughputBps = j.at("throughput_bps").get<double>();
  const auto rho = j.at("mean_rho_ratio").get<std::vector<double>>();
  s.meanRhoRatio = Eigen::Map<const Vec>(rho.data(), static_cast<Eigen::Index>(rho.size()));
  s.handoverPercent = j.at("handover_percent").get<double>();
  s.meanSlotMs = j.at("mean_slot_ms").get<double>();
  s.exchangeCount = j.at("exchange_count").get<long>();
  return s;
}

std::string compare_table(const std::vector<Summary>& runs, const Scenario& sc) {
  std::ostringstream out;
  out << std::left << std::setw(14) << "scheme" << std::right << std::setw(8) << "slots"
      << std::setw(14) << "sum_rate" << std::setw(16) << "max_rho/I_max" << std::setw(12)
      << "handover%" << std::setw(12) << "slot_ms" << std::setw(12) << "exchanged" << '\n';
  out << std::fixed;
  for (const auto& r : runs) {
    const double rho = r.meanRhoRatio.size() ? r.meanRhoRatio.maxCoeff() : 0.0;
    out << std::left << std::setw(14) << r.scheme << std::right << std::setw(8) << r.slots
        << std::setw(14) << std::setprecision(4) << r.meanSumRate << std::setw(16)
        << std::setprecision(4) << rho << std::setw(12) << std::setprecision(3)
        << r.handoverPercent << std::setw(12) << std::setprecision(3) << r.meanSlotMs
        << std::setw(12) << r.exchangeCount << '\n';
  }
  out << "exchange_count learning=" << learning_exchange_count(sc.numTu, sc.numAu, sc.compression, sc.sets)
      << " optimizer=" << optimizer_exchange_count(sc.numBs, sc.numTu, sc.numAu, sc.numAntennas())
      << '\n';
  return out.str();
}

}  // namespace catn::metrics
