#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "lorajam/core.hpp"
#include "lorajam/trace.hpp"

// Application-level jamming detection over gateway delivery logs: known-rate
// slot tracking and a learned inter-arrival baseline. Both operate on
// accepted frames; rejected records can be attached to alarms as evidence.
namespace lorajam::detect {

using trace::DeliveryRecord;
using trace::DeliveryStatus;

enum class Mode { KnownRate, LearnedRate };

struct DetectorConfig {
  Mode mode = Mode::KnownRate;
  Micros expected_period{0};    // KnownRate
  Micros warmup_window{0};      // LearnedRate: baseline span from first accept
  int miss_threshold = 3;       // k consecutive misses/anomalous gaps
  double sensitivity_z = 2.0;   // LearnedRate
  bool rejects_as_evidence = true;
};

struct Alarm {
  std::uint32_t dev_addr = 0;
  Micros start{0};
  Micros end{0};
  bool open = false;  // still raised at end of log
  std::size_t reject_evidence = 0;

  bool operator==(const Alarm&) const = default;
};

inline void check_sorted(std::span<const DeliveryRecord> log) {
  for (std::size_t i = 1; i < log.size(); ++i)
    if (log[i].t < log[i - 1].t) throw Error("log timestamps must be non-decreasing");
}

namespace detail {

inline void attach_evidence(std::vector<Alarm>& alarms, std::span<const DeliveryRecord> log,
                            const DetectorConfig& cfg) {
  if (!cfg.rejects_as_evidence) return;
  for (auto& a : alarms)
    for (const auto& r : log)
      if (r.dev_addr == a.dev_addr && r.status != DeliveryStatus::Accept && r.t >= a.start &&
          r.t <= a.end)
        ++a.reject_evidence;
}

}  // namespace detail

// Streaming known-rate tracker for one device. Expected slots sit at
// last_accept + i*period with a +/- half-period tolerance window; a slot
// is missed when its window closes with no accept. k consecutive misses
// raise the alarm at the k-th window close; the next accept ends it.
struct KnownRateState {
  std::optional<Micros> last_accept;
  std::vector<Alarm> finished;
};

inline void known_rate_accept(KnownRateState& st, std::uint32_t dev, Micros t,
                              const DetectorConfig& cfg) {
  const std::int64_t period = cfg.expected_period.count();
  if (st.last_accept) {
    std::int64_t gap = (t - *st.last_accept).count();
    std::int64_t nearest_slot = (gap + period / 2) / period;   // slot this accept lands in
    std::int64_t missed = std::max<std::int64_t>(0, nearest_slot - 1);
    if (missed >= cfg.miss_threshold) {
      Micros start = *st.last_accept + Micros{cfg.miss_threshold * period + period / 2};
      st.finished.push_back(Alarm{dev, start, t, false, 0});
    }
  }
  st.last_accept = t;
}

inline void known_rate_finish(KnownRateState& st, std::uint32_t dev, Micros log_end,
                              const DetectorConfig& cfg) {
  if (!st.last_accept) return;
  const std::int64_t period = cfg.expected_period.count();
  std::int64_t open_gap = (log_end - *st.last_accept).count();
  std::int64_t closed_windows = (open_gap - period / 2) / period;  // windows closed by log end
  if (closed_windows >= cfg.miss_threshold) {
    Micros start = *st.last_accept + Micros{cfg.miss_threshold * period + period / 2};
    st.finished.push_back(Alarm{dev, start, log_end, true, 0});
  }
}

inline std::vector<Alarm> detect_known(std::span<const DeliveryRecord> log,
                                       const DetectorConfig& cfg) {
  if (log.empty()) throw EmptyLog("known-rate detector needs a non-empty log");
  if (cfg.expected_period.count() <= 0) throw Error("expected_period must be positive");
  if (cfg.miss_threshold < 1) throw Error("miss_threshold must be >= 1");
  check_sorted(log);

  std::map<std::uint32_t, KnownRateState> states;
  for (const auto& r : log)
    if (r.status == DeliveryStatus::Accept)
      known_rate_accept(states[r.dev_addr], r.dev_addr, r.t, cfg);
  Micros log_end = log.back().t;
  std::vector<Alarm> alarms;
  for (auto& [dev, st] : states) {
    known_rate_finish(st, dev, log_end, cfg);
    alarms.insert(alarms.end(), st.finished.begin(), st.finished.end());
  }
  std::sort(alarms.begin(), alarms.end(), [](const Alarm& a, const Alarm& b) {
    return a.start != b.start ? a.start < b.start : a.dev_addr < b.dev_addr;
  });
  detail::attach_evidence(alarms, log, cfg);
  return alarms;
}

// Learned baseline: mean/std of accept inter-arrivals over the warmup
// window anchored at each device's first accept. Post-warmup, a gap is
// anomalous when it exceeds mean + z*std; k consecutive anomalous gaps
// raise the alarm, and total silence is treated as one anomalous gap per
// elapsed threshold span so a dead channel still fires.
inline std::vector<Alarm> detect_learned(std::span<const DeliveryRecord> log,
                                         const DetectorConfig& cfg) {
  if (log.empty()) throw EmptyLog("learned-rate detector needs a non-empty log");
  if (cfg.warmup_window.count() <= 0) throw Error("warmup_window must be positive");
  if (cfg.miss_threshold < 1) throw Error("miss_threshold must be >= 1");
  if (cfg.sensitivity_z < 0) throw Error("sensitivity_z must be >= 0");
  check_sorted(log);

  std::map<std::uint32_t, std::vector<Micros>> accepts;
  for (const auto& r : log)
    if (r.status == DeliveryStatus::Accept) accepts[r.dev_addr].push_back(r.t);
  Micros log_end = log.back().t;

  std::vector<Alarm> alarms;
  std::size_t monitored = 0;
  std::size_t thin_baseline = 0;
  for (auto& [dev, times] : accepts) {
    // Devices whose data cannot support a baseline are skipped; the error
    // fires only when that leaves nothing to monitor.
    Micros warmup_end = times.front() + cfg.warmup_window;
    if (log_end < warmup_end) continue;

    std::vector<double> baseline;
    std::size_t i = 1;
    for (; i < times.size() && times[i] <= warmup_end; ++i)
      baseline.push_back(double((times[i] - times[i - 1]).count()));
    if (baseline.size() < 20) {
      thin_baseline = std::max(thin_baseline, baseline.size());
      continue;
    }
    ++monitored;

    double mean = 0;
    for (double g : baseline) mean += g;
    mean /= double(baseline.size());
    double var = 0;
    for (double g : baseline) var += (g - mean) * (g - mean);
    double stddev = std::sqrt(var / double(baseline.size()));

    // Strictly-exceeding span in whole microseconds.
    std::int64_t thresh = std::int64_t(std::floor(mean + cfg.sensitivity_z * stddev)) + 1;

    int consecutive = 0;
    std::optional<Micros> alarm_start;
    Micros last = times[i - 1];
    auto count_spans = [&](std::int64_t spans) {
      for (std::int64_t s = 1; s <= spans; ++s) {
        ++consecutive;
        if (consecutive == cfg.miss_threshold && !alarm_start)
          alarm_start = last + Micros{s * thresh};
      }
    };

    for (; i < times.size(); ++i) {
      std::int64_t spans = (times[i] - last).count() / thresh;
      if (spans == 0) {
        if (alarm_start) {
          alarms.push_back(Alarm{dev, *alarm_start, times[i], false, 0});
          alarm_start.reset();
        }
        consecutive = 0;
      } else {
        count_spans(spans);
      }
      last = times[i];
    }
    count_spans((log_end - last).count() / thresh);
    if (alarm_start) alarms.push_back(Alarm{dev, *alarm_start, log_end, true, 0});
  }
  if (monitored == 0)
    throw InsufficientWarmup("no device has >= 20 inter-arrival samples inside its warmup "
                             "window (best: " +
                             std::to_string(thin_baseline) + ")");

  std::sort(alarms.begin(), alarms.end(), [](const Alarm& a, const Alarm& b) {
    return a.start != b.start ? a.start < b.start : a.dev_addr < b.dev_addr;
  });
  detail::attach_evidence(alarms, log, cfg);
  return alarms;
}

inline std::vector<Alarm> run(std::span<const DeliveryRecord> log, const DetectorConfig& cfg) {
  return cfg.mode == Mode::KnownRate ? detect_known(log, cfg) : detect_learned(log, cfg);
}

inline std::string format_alarm(const Alarm& a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "ALARM dev=%s start_us=%lld end_us=%lld state=%s evidence=%zu",
                hexutil::addr_hex(a.dev_addr).c_str(), (long long)a.start.count(),
                (long long)a.end.count(), a.open ? "open" : "closed", a.reject_evidence);
  return buf;
}

}  // namespace lorajam::detect
