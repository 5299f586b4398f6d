#pragma once

#include <array>
#include <optional>
#include <utility>
#include <vector>

#include "lorajam/core.hpp"

// LoRa physical-layer timing: symbol duration, time-on-air, per-byte
// reception boundaries, and the selective-jamming window model built on them.
namespace lorajam::phy {

struct RadioParams {
  int sf = 7;                   // spreading factor, 7..12
  int bandwidth_hz = 125000;    // 125000 or 250000
  int coding_rate = 1;          // CR in 1..4, meaning 4/(4+CR)
  int preamble_symbols = 8;     // programmed length, excludes the 4.25 sync symbols
  bool explicit_header = true;
  bool crc_on = true;
  bool low_data_rate_opt = false;

  bool operator==(const RadioParams&) const = default;
};

// Data-rate rows: (sf, bandwidth) -> maximum frame size in bytes.
// Only these pairs are valid radio configurations.
inline std::optional<int> max_frame_bytes(int sf, int bandwidth_hz) {
  if (bandwidth_hz == 125000) {
    switch (sf) {
      case 12:
      case 11:
      case 10:
        return 59;
      case 9:
        return 123;
      case 8:
      case 7:
        return 230;
      default:
        return std::nullopt;
    }
  }
  if (bandwidth_hz == 250000 && sf == 7) return 230;
  return std::nullopt;
}

inline void validate(const RadioParams& p) {
  if (p.sf < 7 || p.sf > 12) throw Error("sf out of range [7,12]: " + std::to_string(p.sf));
  if (p.bandwidth_hz != 125000 && p.bandwidth_hz != 250000)
    throw Error("bandwidth must be 125000 or 250000 Hz");
  if (!max_frame_bytes(p.sf, p.bandwidth_hz))
    throw Error("(sf=" + std::to_string(p.sf) + ", bw=" + std::to_string(p.bandwidth_hz) +
                ") is not a valid data-rate row");
  if (p.coding_rate < 1 || p.coding_rate > 4) throw Error("coding_rate out of range [1,4]");
  if (p.preamble_symbols < 1) throw Error("preamble_symbols must be >= 1");
}

// Default policy: LDRO on for SF11/SF12 at 125 kHz. Pass ldro to override.
inline RadioParams make_params(int sf, int bandwidth_hz = 125000, int coding_rate = 1,
                               int preamble_symbols = 8, bool explicit_header = true,
                               bool crc_on = true, std::optional<bool> ldro = std::nullopt) {
  RadioParams p;
  p.sf = sf;
  p.bandwidth_hz = bandwidth_hz;
  p.coding_rate = coding_rate;
  p.preamble_symbols = preamble_symbols;
  p.explicit_header = explicit_header;
  p.crc_on = crc_on;
  p.low_data_rate_opt = ldro ? *ldro : (sf >= 11 && bandwidth_hz == 125000);
  validate(p);
  return p;
}

// 2^sf / bandwidth. Exact in integer microseconds for the supported set
// (2^7/250 kHz = 512 us is the smallest case).
inline Micros symbol_time(const RadioParams& p) {
  validate(p);
  std::int64_t us_per_symbol = (std::int64_t(1) << p.sf) * 1000000 / p.bandwidth_hz;
  return Micros{us_per_symbol};
}

// (preamble_symbols + 4.25) symbols; the quarter-symbol term is rounded to
// the nearest microsecond once (a no-op for the supported set, where the
// symbol time is divisible by 4).
inline Micros preamble_time(const RadioParams& p) {
  std::int64_t tsym = symbol_time(p).count();
  return Micros{p.preamble_symbols * tsym + (17 * tsym + 2) / 4};
}

inline std::int64_t payload_symbol_count(const RadioParams& p, int payload_len) {
  std::int64_t numer = 8LL * payload_len - 4LL * p.sf + 28 + (p.crc_on ? 16 : 0) -
                       (p.explicit_header ? 0 : 20);
  std::int64_t denom = 4LL * (p.sf - (p.low_data_rate_opt ? 2 : 0));
  std::int64_t extra = numer > 0 ? ((numer + denom - 1) / denom) * (p.coding_rate + 4) : 0;
  return 8 + extra;
}

inline Micros payload_time(const RadioParams& p, int payload_len) {
  return Micros{payload_symbol_count(p, payload_len) * symbol_time(p).count()};
}

inline void check_payload_len(const RadioParams& p, int payload_len) {
  if (payload_len < 1) throw Error("payload_len must be >= 1");
  int max = *max_frame_bytes(p.sf, p.bandwidth_hz);
  if (payload_len > max)
    throw PayloadTooLarge("payload of " + std::to_string(payload_len) +
                          " bytes exceeds the " + std::to_string(max) + "-byte maximum for sf" +
                          std::to_string(p.sf) + "/" + std::to_string(p.bandwidth_hz / 1000) +
                          " kHz");
}

inline Micros time_on_air(const RadioParams& p, int payload_len) {
  validate(p);
  check_payload_len(p, payload_len);
  return preamble_time(p) + payload_time(p, payload_len);
}

// Completion time of wire byte k (1-indexed; k = 0 gives the preamble end).
// Bytes are spread linearly across the payload-symbol block; completion of
// byte payload_len equals time_on_air exactly.
inline Micros byte_completion(const RadioParams& p, int payload_len, int k) {
  validate(p);
  check_payload_len(p, payload_len);
  if (k < 0 || k > payload_len) throw Error("byte index out of range");
  std::int64_t pay = payload_time(p, payload_len).count();
  std::int64_t t = (k == payload_len) ? pay : (2 * pay * k + payload_len) / (2 * payload_len);
  return preamble_time(p) + Micros{t};
}

inline std::vector<std::pair<int, Micros>> byte_timeline(const RadioParams& p, int payload_len) {
  std::vector<std::pair<int, Micros>> out;
  out.reserve(std::size_t(payload_len));
  for (int k = 1; k <= payload_len; ++k) out.emplace_back(k, byte_completion(p, payload_len, k));
  return out;
}

// Time budget between the jam decision point and end of frame, where the
// decision point is the airtime of a read_bytes-payload frame (preamble and
// header included). May be negative.
inline Micros jamming_window(const RadioParams& p, int payload_len, int read_bytes) {
  if (read_bytes < 1) throw Error("read_bytes must be >= 1");
  if (payload_len < read_bytes) throw Error("payload_len must be >= read_bytes");
  return time_on_air(p, payload_len) - time_on_air(p, read_bytes);
}

enum class JamPrediction { Success, Mixed, Fail };

inline const char* to_string(JamPrediction j) {
  switch (j) {
    case JamPrediction::Success: return "S";
    case JamPrediction::Mixed: return "M";
    case JamPrediction::Fail: return "F";
  }
  return "?";
}

struct LatencyModel {
  Micros mean{0};
  Micros stddev{0};

  bool operator==(const LatencyModel&) const = default;
};

// Predicted-S when the window clears mean + 3 sigma plus one symbol of
// guard; Predicted-F when it is below mean - 3 sigma; Mixed between.
inline JamPrediction predict_jammable(const RadioParams& p, int payload_len, int read_bytes,
                                      const LatencyModel& latency) {
  Micros window = jamming_window(p, payload_len, read_bytes);
  Micros upper = latency.mean + 3 * latency.stddev + symbol_time(p);
  Micros lower = latency.mean - 3 * latency.stddev;
  if (window >= upper) return JamPrediction::Success;
  if (window <= lower) return JamPrediction::Fail;
  return JamPrediction::Mixed;
}

}  // namespace lorajam::phy
