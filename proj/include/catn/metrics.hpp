#pragma once

#include <string>
#include <vector>

#include "catn/harness.hpp"

namespace catn::metrics {

/// Centered moving average; near the ends the window shrinks symmetrically.
Vec moving_average(const Vec& series, int span = 41);

struct Summary {
  std::string scheme;
  int slots = 0;
  double meanSumRate = 0.0;      // bit/s/Hz
  double throughputBps = 0.0;    // sum throughput per second, handover slots scaled by zeta_R
  Vec meanRhoRatio;              // mean rho_l / I_max
  double handoverPercent = 0.0;  // handover events / (K * slots) * 100
  double meanSlotMs = 0.0;       // 0 when timing was not recorded
  long exchangeCount = 0;
};

Summary summarize(const std::vector<SlotRecord>& records, double slotSeconds, double bandwidthHz,
                  double zetaR, double iMax);

/// Per-slot exchanged scalars of the learning schemes.
long learning_exchange_count(int numTu, int numAu, int compression, const encoding::SetSizes& s);
/// Per-slot exchanged scalars of the optimizer schemes.
long optimizer_exchange_count(int numBs, int numTu, int numAu, int numAntennas);
long exchange_count(const Scenario& sc, const SchemeSpec& scheme);

// --- Persistence --------------------------------------------------------------

std::string csv_header(int numBs, int numTu, int numAu);
/// Throws if the file exists and force is false.
void ensure_writable(const std::string& path, bool force);

void write_csv(const std::vector<SlotRecord>& records, int numBs, int numTu, int numAu,
               const std::string& path, bool force = false);
std::vector<SlotRecord> read_csv(const std::string& path);

void write_timing_csv(const std::vector<PhaseTiming>& timing, const std::string& path);
double mean_timing_ms(const std::string& path);

/// (slot, moving-average value) pairs.
void write_plot_data(const Vec& series, int span, const std::string& header,
                     const std::string& path);

std::string summary_json(const Summary& s, const Scenario& sc);
Summary read_summary_json(const std::string& path);

/// Fixed-width comparison table of several runs plus the analytic exchange
/// counts of the given scenario.
std::string compare_table(const std::vector<Summary>& runs, const Scenario& sc);

}  // namespace catn::metrics
