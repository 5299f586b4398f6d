// Command-line front end: scenario runs, sweeps, airtime/window tables, the
// wormhole feasibility matrix, trace analysis and jamming detection.
//
// Exit codes: 0 success, 2 validation error (bad flags, bad scenario),
// 3 runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lorajam/detect.hpp"
#include "lorajam/scenario.hpp"
#include "lorajam/sim.hpp"
#include "lorajam/trace.hpp"

namespace fs = std::filesystem;
using namespace lorajam;

namespace {

void write_file(const std::string& dir, const std::string& name, const std::string& content) {
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / name, std::ios::binary);
  if (!out) throw Error("cannot write " + (fs::path(dir) / name).string());
  out << content;
}

std::vector<trace::DeliveryRecord> load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open log file " + path);
  return trace::parse_log(in);
}

struct RunArgs {
  std::string scenario_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void cmd_run(const RunArgs& args) {
  auto sc = scenario::load_file(args.scenario_path);
  if (args.seed_set) sc.seed = args.seed;
  auto out = sim::run_scenario(sc);

  std::string metrics = sim::metrics_csv(out.metrics);
  std::string summary = sim::summary_csv(out.metrics);
  if (!args.out_dir.empty()) {
    write_file(args.out_dir, "metrics.csv", metrics);
    write_file(args.out_dir, "summary.csv", summary);
    if (sc.out_event_log) write_file(args.out_dir, "events.log", out.event_log_text);
    if (sc.out_gateway_log) {
      std::string gw;
      for (const auto& r : out.gateway_log) {
        gw += trace::format_record(r);
        gw += '\n';
      }
      write_file(args.out_dir, "gateway.log", gw);
    }
    if (!out.stored_frame_dumps.empty()) {
      std::string dumps;
      for (const auto& d : out.stored_frame_dumps) {
        dumps += d;
        dumps += '\n';
      }
      write_file(args.out_dir, "replay_store.txt", dumps);
    }
  }
  std::cout << metrics << summary;
  char buf[48];
  std::snprintf(buf, sizeof buf, "digest,%016llx\n", (unsigned long long)out.digest);
  std::cout << buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale LoRaWAN jamming simulator"};
  app.require_subcommand(1);

  // airtime
  auto* airtime = app.add_subcommand("airtime", "time-on-air table per (sf, frame size)");
  std::vector<int> at_sizes{5, 17, 27, 37, 47, 57};
  int at_cr = 1, at_preamble = 8;
  std::string at_out;
  airtime->add_option("--sizes", at_sizes, "frame sizes in bytes")->delimiter(',');
  airtime->add_option("--cr", at_cr, "coding rate 1..4");
  airtime->add_option("--preamble", at_preamble, "programmed preamble symbols");
  airtime->add_option("--out", at_out, "output directory");
  airtime->add_flag("--csv", "kept for compatibility; output is always csv");
  airtime->callback([&] {
    std::string csv = sim::airtime_csv(sim::airtime_table(at_sizes, at_cr, at_preamble));
    if (!at_out.empty()) write_file(at_out, "airtime.csv", csv);
    std::cout << csv;
  });

  // window
  auto* window = app.add_subcommand("window", "jamming-window table and S/M/F prediction");
  std::vector<int> w_sizes{17, 27, 37, 47, 57};
  int w_read = 5;
  double w_mean_ms = 100.83, w_std_ms = 1.7;
  std::string w_out;
  window->add_option("--sizes", w_sizes, "frame sizes in bytes")->delimiter(',');
  window->add_option("--read", w_read, "prefix bytes read before the jam decision");
  window->add_option("--latency-mean-ms", w_mean_ms, "reaction latency mean");
  window->add_option("--latency-std-ms", w_std_ms, "reaction latency std deviation");
  window->add_option("--out", w_out, "output directory");
  window->callback([&] {
    phy::LatencyModel lat{Micros{std::llround(w_mean_ms * 1000)},
                          Micros{std::llround(w_std_ms * 1000)}};
    std::string csv = sim::window_csv(sim::window_table(w_sizes, w_read, lat));
    if (!w_out.empty()) write_file(w_out, "window.csv", csv);
    std::cout << csv;
  });

  // matrix
  auto* matrix = app.add_subcommand(
      "matrix", "simulated wormhole S/M/F grid per (sf, frame size), with model prediction");
  std::vector<int> m_sizes{17, 27, 37, 47, 57};
  int m_frames = 100, m_read = 5;
  double m_mean_ms = 100.83, m_std_ms = 1.7;
  std::uint64_t m_seed = 1;
  std::int64_t m_decision_us = 1000;
  std::string m_out;
  matrix->add_option("--sizes", m_sizes, "frame sizes in bytes")->delimiter(',');
  matrix->add_option("--frames", m_frames, "frames per cell");
  matrix->add_option("--read", m_read, "prefix bytes read before the jam decision");
  matrix->add_option("--latency-mean-ms", m_mean_ms, "link latency mean");
  matrix->add_option("--latency-std-ms", m_std_ms, "link latency std deviation");
  matrix->add_option("--decision-delay-us", m_decision_us, "policy evaluation delay");
  matrix->add_option("--seed", m_seed, "seed");
  matrix->add_option("--out", m_out, "output directory");
  matrix->callback([&] {
    phy::LatencyModel lat{Micros{std::llround(m_mean_ms * 1000)},
                          Micros{std::llround(m_std_ms * 1000)}};
    auto cells = sim::wormhole_matrix(lat, m_sizes, m_frames, m_seed, m_read,
                                      Micros{m_decision_us});
    std::string csv = sim::matrix_csv(cells);
    if (!m_out.empty()) write_file(m_out, "matrix.csv", csv);
    std::cout << csv;
  });

  // run
  auto* run = app.add_subcommand("run", "run a scenario file");
  RunArgs run_args;
  run->add_option("scenario", run_args.scenario_path, "scenario json file")->required();
  run->add_option("--out", run_args.out_dir, "output directory for reports and logs");
  run->add_option("--seed", run_args.seed, "seed override")
      ->each([&](const std::string&) { run_args.seed_set = true; });
  run->callback([&] { cmd_run(run_args); });

  // rssi-sweep
  auto* sweep = app.add_subcommand("rssi-sweep",
                                   "delivery vs jammer/device rssi differential curve");
  std::string sw_scenario, sw_out;
  double sw_from = 0, sw_to = 50, sw_step = 2;
  std::uint64_t sw_seed = 0;
  bool sw_seed_set = false;
  sweep->add_option("scenario", sw_scenario, "scenario json file")->required();
  sweep->add_option("--from", sw_from, "differential start (dB)");
  sweep->add_option("--to", sw_to, "differential end (dB)");
  sweep->add_option("--step", sw_step, "differential step (dB)");
  sweep->add_option("--out", sw_out, "output directory");
  sweep->add_option("--seed", sw_seed, "seed override")
      ->each([&](const std::string&) { sw_seed_set = true; });
  sweep->callback([&] {
    auto sc = scenario::load_file(sw_scenario);
    if (sw_seed_set) sc.seed = sw_seed;
    std::string csv = sim::sweep_csv(sim::rssi_sweep(sc, sw_from, sw_to, sw_step));
    if (!sw_out.empty()) write_file(sw_out, "rssi_sweep.csv", csv);
    std::cout << csv;
  });

  // analyze-trace
  auto* analyze = app.add_subcommand("analyze-trace", "summary statistics of a gateway log");
  std::string an_log, an_format = "text";
  analyze->add_option("log", an_log, "gateway log file")->required();
  analyze->add_option("--format", an_format, "text | csv")
      ->check(CLI::IsMember({"text", "csv"}));
  analyze->callback([&] {
    auto stats = trace::analyze(load_records(an_log));
    std::cout << (an_format == "csv" ? trace::stats_csv(stats) : trace::stats_report(stats));
  });

  // detect
  auto* det = app.add_subcommand("detect", "traffic-profiling jamming detection on a gateway log");
  std::string d_log, d_mode = "known";
  double d_period_s = 60, d_warmup_s = 3600, d_z = 2.0;
  int d_k = 3;
  det->add_option("log", d_log, "gateway log file")->required();
  det->add_option("--mode", d_mode, "known | learned")
      ->check(CLI::IsMember({"known", "learned"}));
  det->add_option("--period-s", d_period_s, "expected period (known mode)");
  det->add_option("--warmup-s", d_warmup_s, "baseline window (learned mode)");
  det->add_option("--k", d_k, "consecutive misses before the alarm");
  det->add_option("--z", d_z, "sensitivity (learned mode)");
  det->callback([&] {
    detect::DetectorConfig cfg;
    cfg.mode = d_mode == "known" ? detect::Mode::KnownRate : detect::Mode::LearnedRate;
    cfg.expected_period = Micros{std::llround(d_period_s * 1e6)};
    cfg.warmup_window = Micros{std::llround(d_warmup_s * 1e6)};
    cfg.miss_threshold = d_k;
    cfg.sensitivity_z = d_z;
    auto records = load_records(d_log);
    auto alarms = detect::run(records, cfg);
    for (const auto& a : alarms) std::cout << detect::format_alarm(a) << "\n";
    std::cout << "alarms " << alarms.size() << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const PolicyTooDeep& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
