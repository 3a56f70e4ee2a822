#include <malloc.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "catn/checkpoint.hpp"
#include "catn/encoding.hpp"
#include "catn/harness.hpp"
#include "catn/metrics.hpp"
#include "catn/scenario.hpp"

namespace fs = std::filesystem;
using namespace catn;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kConfig = 3, kRuntime = 4 };

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string scenario;
  std::string scheme = "d3qn-cup";
  int slots = 0;
  std::uint64_t seed = 1;
  std::string out;
  std::string checkpoint;
  bool force = false;
  bool timing = false;
  std::vector<std::string> runs;
  int span = 41;
};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += (c == '\n') ? ' ' : c;
  }
  return out;
}

int fail(int code, const std::string& msg) {
  std::cerr << "error code=" << code << " msg=\"" << escape(msg) << "\"\n";
  return code;
}

Scenario scenario_from(const std::string& path) {
  try {
    return path.empty() ? Scenario{} : load_scenario(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

SchemeSpec scheme_from(const std::string& text) {
  try {
    return SchemeSpec::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

void prepare_dir(const std::string& dir) {
  if (dir.empty()) throw ConfigError("--out is required");
  fs::create_directories(dir);
}

std::string join(const std::string& dir, const std::string& file) {
  return (fs::path(dir) / file).string();
}

void write_text(const std::string& path, const std::string& text, bool force) {
  metrics::ensure_writable(path, force);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string obs_schema(const Scenario& sc) {
  const auto cfg = sc.encoding_config();
  auto layout_json = [](const encoding::ObsLayout& l) {
    nlohmann::ordered_json j;
    j["size"] = l.size;
    auto& fields = j["fields"] = nlohmann::ordered_json::array();
    for (const auto& f : l.fields)
      fields.push_back({{"name", f.name}, {"offset", f.offset}, {"length", f.length}});
    return j;
  };
  nlohmann::ordered_json j;
  j["bs"] = layout_json(encoding::bs_observation_layout(cfg));
  j["tu"] = layout_json(encoding::tu_observation_layout(cfg));
  j["bs_action"] = encoding::bs_action_dim(sc.numTu, sc.numAu);
  j["tu_action"] = sc.numBs;
  return j.dump(2) + "\n";
}

void write_plot_files(const std::vector<SlotRecord>& records, const Scenario& sc, int span,
                      const std::string& dir) {
  if (records.empty()) return;
  const Eigen::Index n = static_cast<Eigen::Index>(records.size());
  Vec sum(n);
  for (Eigen::Index t = 0; t < n; ++t) sum[t] = records[static_cast<size_t>(t)].sumRate;
  metrics::write_plot_data(sum, span, "sum_rate", join(dir, "plot_sum_rate.csv"));
  for (int l = 0; l < sc.numAu; ++l) {
    Vec rho(n);
    for (Eigen::Index t = 0; t < n; ++t) rho[t] = records[static_cast<size_t>(t)].rho[l] / sc.iMaxW;
    metrics::write_plot_data(rho, span, "rho_ratio",
                             join(dir, "plot_rho_ratio_" + std::to_string(l) + ".csv"));
  }
  Vec ho(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const auto& h = records[static_cast<size_t>(t)].handover;
    int c = 0;
    for (int v : h) c += v;
    ho[t] = 100.0 * c / static_cast<double>(h.size());
  }
  metrics::write_plot_data(ho, span, "handover_percent", join(dir, "plot_handover.csv"));
}

metrics::Summary finish_run(const std::vector<SlotRecord>& records, const Scenario& sc,
                            const SchemeSpec& scheme, const std::vector<PhaseTiming>& timing,
                            const Options& o) {
  metrics::write_csv(records, sc.numBs, sc.numTu, sc.numAu, join(o.out, "metrics.csv"), o.force);
  write_plot_files(records, sc, o.span, o.out);
  write_text(join(o.out, "obs_schema.json"), obs_schema(sc), o.force);

  auto s = metrics::summarize(records, sc.slotSeconds, sc.bandwidthHz, sc.zetaR, sc.iMaxW);
  s.scheme = scheme.name();
  s.exchangeCount = metrics::exchange_count(sc, scheme);
  if (o.timing) {
    const std::string path = join(o.out, "timing.csv");
    metrics::write_timing_csv(timing, path);
    s.meanSlotMs = metrics::mean_timing_ms(path);
  }
  write_text(join(o.out, "summary.json"), metrics::summary_json(s, sc), o.force);
  return s;
}

void print_summary(const metrics::Summary& s, const std::string& out) {
  std::printf("%s slots=%d sum_rate=%.4f max_rho_ratio=%.4f handover=%.3f%% out=%s\n",
              s.scheme.c_str(), s.slots, s.meanSumRate,
              s.meanRhoRatio.size() ? s.meanRhoRatio.maxCoeff() : 0.0, s.handoverPercent,
              out.c_str());
}

int cmd_train(const Options& o) {
  const Scenario sc = scenario_from(o.scenario);
  const SchemeSpec scheme = scheme_from(o.scheme);
  prepare_dir(o.out);
  const std::string ckpt = o.checkpoint.empty() ? join(o.out, "checkpoint.txt") : o.checkpoint;
  metrics::ensure_writable(join(o.out, "metrics.csv"), o.force);
  metrics::ensure_writable(ckpt, o.force);

  Simulation sim(sc, scheme, o.seed);
  std::vector<PhaseTiming> timing;
  RunOptions ro;
  ro.slots = o.slots;
  ro.learn = true;
  ro.timing = o.timing ? &timing : nullptr;
  const auto records = run(sim, ro);
  const auto s = finish_run(records, sc, scheme, timing, o);
  checkpoint::save(sim, ckpt, o.force);
  print_summary(s, o.out);
  return kOk;
}

int cmd_eval(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("eval requires --checkpoint");
  const auto header = checkpoint::read_header(o.checkpoint);
  const SchemeSpec scheme = o.scheme.empty() ? header.scheme : scheme_from(o.scheme);
  prepare_dir(o.out);
  metrics::ensure_writable(join(o.out, "metrics.csv"), o.force);

  Simulation sim(header.scenario, scheme, o.seed);
  checkpoint::load(sim, o.checkpoint);
  std::vector<PhaseTiming> timing;
  RunOptions ro;
  ro.slots = o.slots;
  ro.learn = false;
  ro.timing = o.timing ? &timing : nullptr;
  const auto records = run(sim, ro);
  print_summary(finish_run(records, header.scenario, scheme, timing, o), o.out);
  return kOk;
}

int cmd_compare(const Options& o) {
  const Scenario sc = scenario_from(o.scenario);
  std::vector<metrics::Summary> rows;
  for (const auto& dir : o.runs) rows.push_back(metrics::read_summary_json(join(dir, "summary.json")));
  std::cout << metrics::compare_table(rows, sc);
  return kOk;
}

// --- SVG line charts ----------------------------------------------------------

struct Series {
  std::string label;
  std::vector<double> y;
};

std::vector<double> read_plot_column(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  std::vector<double> y;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma != std::string::npos) y.push_back(std::stod(line.substr(comma + 1)));
  }
  return y;
}

std::string svg_chart(const std::string& title, const std::vector<Series>& series) {
  constexpr double W = 640, H = 400, L = 60, R = 20, T = 30, B = 40;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  double lo = INFINITY, hi = -INFINITY;
  size_t len = 1;
  for (const auto& s : series) {
    for (double v : s.y) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    len = std::max(len, s.y.size());
  }
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  if (hi - lo < 1e-12) hi = lo + 1;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << title
      << "</text>\n";
  svg << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\""
      << H - T - B << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    const double y = H - B - (H - T - B) * i / 4.0;
    svg << "<text x=\"" << L - 4 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << v << "</text>\n";
  }
  svg << "<text x=\"" << W - R << "\" y=\"" << H - B + 16 << "\" text-anchor=\"end\">" << len - 1
      << "</text>\n";
  svg << "<text x=\"" << L << "\" y=\"" << H - B + 16 << "\">0</text>\n";

  for (size_t i = 0; i < series.size(); ++i) {
    const char* color = colors[i % 6];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
    const auto& y = series[i].y;
    for (size_t t = 0; t < y.size(); ++t) {
      const double px = L + (W - L - R) * (len > 1 ? static_cast<double>(t) / (len - 1) : 0.0);
      const double py = H - B - (H - T - B) * (y[t] - lo) / (hi - lo);
      svg << px << ',' << py << ' ';
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << L + 8 << "\" y=\"" << T + 14 + 14 * i << "\" fill=\"" << color << "\">"
        << series[i].label << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

int cmd_plot(const Options& o) {
  if (o.runs.empty()) throw ConfigError("plot needs at least one run directory");
  const std::string outDir = o.out.empty() ? o.runs.front() : o.out;
  fs::create_directories(outDir);

  auto label_of = [](const std::string& dir) {
    try {
      return metrics::read_summary_json(join(dir, "summary.json")).scheme + " (" +
             fs::path(dir).filename().string() + ")";
    } catch (const std::exception&) {
      return fs::path(dir).filename().string();
    }
  };
  std::vector<Series> sum, rho, ho;
  for (const auto& dir : o.runs) {
    const std::string label = label_of(dir);
    sum.push_back({label, read_plot_column(join(dir, "plot_sum_rate.csv"))});
    ho.push_back({label, read_plot_column(join(dir, "plot_handover.csv"))});
    for (int l = 0;; ++l) {
      const std::string p = join(dir, "plot_rho_ratio_" + std::to_string(l) + ".csv");
      if (!fs::exists(p)) break;
      rho.push_back({label + " AU" + std::to_string(l), read_plot_column(p)});
    }
  }
  write_text(join(outDir, "sum_rate.svg"), svg_chart("Sum rate (bit/s/Hz)", sum), o.force);
  write_text(join(outDir, "rho_ratio.svg"), svg_chart("Interference / I_max", rho), o.force);
  write_text(join(outDir, "handover.svg"), svg_chart("Handover (%)", ho), o.force);
  std::printf("plots written to %s\n", outDir.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  // Network gradients are a few hundred kB; keep them on the heap instead of
  // mapping and trimming pages on every minibatch.
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 128 << 20);
  CLI::App app{"Cognitive aerial-terrestrial network simulator"};
  app.require_subcommand(1);
  Options o;

  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("--slots", o.slots, "Number of slots (default: scenario value)")->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", o.seed, "Run seed");
    sub->add_option("--out", o.out, "Output directory")->required();
    sub->add_option("--checkpoint", o.checkpoint, "Checkpoint file");
    sub->add_flag("--force", o.force, "Overwrite existing outputs");
    sub->add_flag("--timing", o.timing, "Record per-phase wall-clock times");
    sub->add_option("--span", o.span, "Moving-average span for plot data")->check(CLI::PositiveNumber);
  };

  auto* train = app.add_subcommand("train", "Run the slot loop with learning enabled");
  add_run_flags(train);
  train->add_option("--scenario", o.scenario, "Scenario INI file (default: built-in reference scenario)");
  train->add_option("--scheme", o.scheme, "<ua>-<bf>, ua in {d3qn,dcd,sc,rand}, bf in {cup,ppo,wmmse,rand}");

  auto* eval = app.add_subcommand("eval", "Run a trained checkpoint with parameters frozen (scenario taken from the checkpoint)");
  add_run_flags(eval);
  std::string evalScheme;
  eval->add_option("--scheme", evalScheme, "Override the scheme recorded in the checkpoint");

  auto* compare = app.add_subcommand("compare", "Tabulate run directories and exchange counts");
  compare->add_option("runs", o.runs, "Run directories");
  compare->add_option("--scenario", o.scenario, "Scenario for the analytic exchange counts");

  auto* plot = app.add_subcommand("plot", "Render SVG line charts from run directories");
  plot->add_option("runs", o.runs, "Run directories")->required();
  plot->add_option("--out", o.out, "Directory for the SVG files (default: first run)");
  plot->add_flag("--force", o.force, "Overwrite existing charts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, e.what());
  }

  try {
    if (*train) return cmd_train(o);
    if (*eval) {
      o.scheme = evalScheme;
      return cmd_eval(o);
    }
    if (*compare) return cmd_compare(o);
    if (*plot) return cmd_plot(o);
  } catch (const ConfigError& e) {
    return fail(kConfig, e.what());
  } catch (const std::exception& e) {
    return fail(kRuntime, e.what());
  }
  return kOk;
}
