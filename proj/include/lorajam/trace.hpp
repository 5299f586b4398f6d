#pragma once

#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lorajam/core.hpp"

// Gateway traffic logs: the neutral line format, summary statistics used to
// calibrate scenarios, and a generator that is analyze()'s inverse.
namespace lorajam::trace {

enum class DeliveryStatus { Accept, RejectCrc, RejectMic, RejectReplay };

inline const char* to_string(DeliveryStatus s) {
  switch (s) {
    case DeliveryStatus::Accept: return "ACCEPT";
    case DeliveryStatus::RejectCrc: return "REJECT_CRC";
    case DeliveryStatus::RejectMic: return "REJECT_MIC";
    case DeliveryStatus::RejectReplay: return "REJECT_REPLAY";
  }
  return "?";
}

inline DeliveryStatus status_from_string(const std::string& s) {
  if (s == "ACCEPT") return DeliveryStatus::Accept;
  if (s == "REJECT_CRC") return DeliveryStatus::RejectCrc;
  if (s == "REJECT_MIC") return DeliveryStatus::RejectMic;
  if (s == "REJECT_REPLAY") return DeliveryStatus::RejectReplay;
  throw Error("unknown delivery status \"" + s + "\"");
}

struct DeliveryRecord {
  Micros t{0};
  std::uint32_t channel_hz = 0;
  int sf = 7;
  std::size_t wire_len = 0;
  std::uint32_t dev_addr = 0;
  DeliveryStatus status = DeliveryStatus::Accept;

  bool operator==(const DeliveryRecord&) const = default;
};

// One record per line: t_us channel_hz sf wire_len dev_addr status
inline std::string format_record(const DeliveryRecord& r) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%lld %u %d %zu %s %s", (long long)r.t.count(), r.channel_hz,
                r.sf, r.wire_len, hexutil::addr_hex(r.dev_addr).c_str(), to_string(r.status));
  return buf;
}

inline DeliveryRecord parse_record(const std::string& line) {
  std::istringstream in(line);
  long long t_us;
  std::string addr, status;
  DeliveryRecord r;
  if (!(in >> t_us >> r.channel_hz >> r.sf >> r.wire_len >> addr >> status))
    throw Error("malformed log line: \"" + line + "\"");
  r.t = Micros{t_us};
  Bytes ab = hexutil::from_hex(addr);
  if (ab.size() != 4) throw Error("malformed dev_addr in log line: \"" + line + "\"");
  r.dev_addr = std::uint32_t(ab[0]) << 24 | std::uint32_t(ab[1]) << 16 |
               std::uint32_t(ab[2]) << 8 | std::uint32_t(ab[3]);
  r.status = status_from_string(status);
  return r;
}

inline std::vector<DeliveryRecord> parse_log(std::istream& in) {
  std::vector<DeliveryRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    out.push_back(parse_record(line));
  }
  return out;
}

inline void write_log(std::ostream& os, std::span<const DeliveryRecord> records) {
  for (const auto& r : records) os << format_record(r) << '\n';
}

struct TrafficStats {
  std::size_t message_count = 0;
  std::size_t distinct_devices = 0;
  std::map<std::uint32_t, double> channel_histogram;  // channel_hz -> fraction
  double mean_wire_length = 0;
  double mean_payload_length = 0;  // wire minus the 13 header/MIC bytes
};

inline TrafficStats analyze(std::span<const DeliveryRecord> records) {
  if (records.empty()) throw EmptyLog("cannot analyze an empty log");
  TrafficStats stats;
  stats.message_count = records.size();
  std::set<std::uint32_t> devices;
  std::map<std::uint32_t, std::size_t> counts;
  double wire_total = 0;
  for (const auto& r : records) {
    devices.insert(r.dev_addr);
    counts[r.channel_hz]++;
    wire_total += double(r.wire_len);
  }
  stats.distinct_devices = devices.size();
  for (auto& [hz, n] : counts)
    stats.channel_histogram[hz] = double(n) / double(records.size());
  stats.mean_wire_length = wire_total / double(records.size());
  stats.mean_payload_length = stats.mean_wire_length - 13.0;
  return stats;
}

// Synthetic log matching a target stats profile; analyze(generate(s, n))
// converges to s as n grows.
inline std::vector<DeliveryRecord> generate(const TrafficStats& target, std::size_t n, Rng& rng,
                                            Micros mean_interval = Micros{1'000'000}) {
  if (n == 0) throw Error("generate: n must be positive");
  if (target.channel_histogram.empty()) throw Error("generate: empty channel histogram");
  std::size_t devices = std::max<std::size_t>(1, target.distinct_devices);

  std::vector<std::uint32_t> channels;
  std::vector<double> weights;
  for (auto& [hz, frac] : target.channel_histogram) {
    channels.push_back(hz);
    weights.push_back(frac);
  }

  std::vector<DeliveryRecord> out;
  out.reserve(n);
  Micros t{0};
  for (std::size_t i = 0; i < n; ++i) {
    t += Micros{std::int64_t(std::llround(double(mean_interval.count()) *
                                          (0.5 + rng.uniform_double())))};
    DeliveryRecord r;
    r.t = t;
    r.channel_hz = channels[rng.pick_weighted(weights)];
    r.sf = 7;
    double len = rng.gaussian(target.mean_wire_length, 2.0);
    r.wire_len = std::size_t(std::max<std::int64_t>(13, std::llround(len)));
    r.dev_addr = 0x10000001u + std::uint32_t(i % devices);
    r.status = DeliveryStatus::Accept;
    out.push_back(r);
  }
  return out;
}

inline std::string stats_csv(const TrafficStats& s) {
  std::string out = "key,value\n";
  char buf[96];
  std::snprintf(buf, sizeof buf, "messages,%zu\ndevices,%zu\n", s.message_count,
                s.distinct_devices);
  out += buf;
  std::snprintf(buf, sizeof buf, "mean_wire_bytes,%.2f\nmean_payload_bytes,%.2f\n",
                s.mean_wire_length, s.mean_payload_length);
  out += buf;
  for (auto& [hz, frac] : s.channel_histogram) {
    std::snprintf(buf, sizeof buf, "channel_%u,%.4f\n", hz, frac);
    out += buf;
  }
  return out;
}

inline std::string stats_report(const TrafficStats& s) {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "messages %zu\ndevices %zu\nmean_wire_bytes %.2f\nmean_payload_bytes %.2f\n",
                s.message_count, s.distinct_devices, s.mean_wire_length, s.mean_payload_length);
  out = buf;
  for (auto& [hz, frac] : s.channel_histogram) {
    std::snprintf(buf, sizeof buf, "channel %u %.4f\n", hz, frac);
    out += buf;
  }
  return out;
}

}  // namespace lorajam::trace
