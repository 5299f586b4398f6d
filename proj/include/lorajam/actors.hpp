#pragma once

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "lorajam/codec.hpp"
#include "lorajam/core.hpp"
#include "lorajam/medium.hpp"
#include "lorajam/phy.hpp"

// Behavioural state machines driven by the event engine: end devices, the
// network server, and the three adversaries.
namespace lorajam::actors {

struct ChannelPlan {
  std::vector<std::pair<std::uint32_t, double>> entries;  // (channel_hz, weight)

  std::uint32_t sample(Rng& rng) const {
    if (entries.empty()) throw Error("empty channel plan");
    if (entries.size() == 1) return entries[0].first;
    std::vector<double> w;
    w.reserve(entries.size());
    for (auto& [hz, weight] : entries) w.push_back(weight);
    return entries[rng.pick_weighted(w)].first;
  }

  bool operator==(const ChannelPlan&) const = default;
};

struct DeviceConfig {
  NodeId id;
  std::uint32_t dev_addr = 0;
  codec::SessionKeys keys;
  phy::RadioParams params;
  ChannelPlan plan;
  Micros period{60'000'000};
  Micros jitter{0};       // uniform in [-jitter, +jitter] per interval
  Micros first_send{0};
  int frm_payload_len = 4;  // application payload bytes; wire = 13 + this
  std::uint8_t fport = 1;
  double duty_cycle = 0.01;
  double tx_power_dbm = 14.0;
  int max_frames = 0;  // 0 = unlimited
  // Event-triggered traffic: when non-empty, frames go out at these
  // absolute times (duty-gated) instead of on the periodic schedule.
  std::vector<Micros> send_times;

  bool operator==(const DeviceConfig&) const = default;
};

// Periodic uplink sender. Honours the duty-cycle gate: after a frame of
// airtime T the next transmission may not start before T*(1/dc - 1) past
// the frame end.
class EndDevice {
 public:
  EndDevice(DeviceConfig cfg, Rng rng) : cfg_(std::move(cfg)), rng_(std::move(rng)) {}

  struct Step {
    medium::Transmission tx;
    Micros next_nominal;
    bool deferred = false;
  };

  Step step(Micros nominal) {
    Step s;
    Micros start = nominal;
    if (start < duty_gate_) {
      start = duty_gate_;
      s.deferred = true;
    }

    codec::Frame f;
    f.dev_addr = cfg_.dev_addr;
    f.fcnt = fcnt_++;
    Bytes plaintext;
    if (cfg_.frm_payload_len > 0) {
      f.fport = cfg_.fport;
      plaintext = rng_.bytes(std::size_t(cfg_.frm_payload_len));
    }
    auto wire = codec::encode(f, cfg_.keys, plaintext, cfg_.params);

    s.tx.source = cfg_.id;
    s.tx.channel_hz = plan_sample();
    s.tx.params = cfg_.params;
    s.tx.wire = std::move(wire);
    s.tx.start = start;
    s.tx.tx_power_dbm = cfg_.tx_power_dbm;

    Micros airtime = phy::time_on_air(cfg_.params, int(s.tx.wire.bytes.size()));
    Micros t_off{std::int64_t(std::llround(double(airtime.count()) * (1.0 / cfg_.duty_cycle - 1.0)))};
    duty_gate_ = start + airtime + t_off;

    if (!cfg_.send_times.empty()) {
      ++send_index_;
      s.next_nominal = send_index_ < cfg_.send_times.size() ? cfg_.send_times[send_index_]
                                                            : kForever;
      return s;
    }
    Micros next = nominal + cfg_.period;
    if (cfg_.jitter.count() > 0)
      next += Micros{rng_.uniform_int(-cfg_.jitter.count(), cfg_.jitter.count())};
    if (next <= nominal) next = nominal + Micros{1};
    s.next_nominal = next;
    return s;
  }

  const DeviceConfig& config() const { return cfg_; }
  std::uint16_t fcnt() const { return fcnt_; }
  Micros duty_gate() const { return duty_gate_; }

 private:
  std::uint32_t plan_sample() { return cfg_.plan.sample(rng_); }

  DeviceConfig cfg_;
  Rng rng_;
  std::uint16_t fcnt_ = 0;
  Micros duty_gate_{0};
  std::size_t send_index_ = 0;
};

enum class ServerResult { Accept, RejectCrc, RejectMic, RejectReplay };

inline const char* to_string(ServerResult r) {
  switch (r) {
    case ServerResult::Accept: return "ACCEPT";
    case ServerResult::RejectCrc: return "REJECT_CRC";
    case ServerResult::RejectMic: return "REJECT_MIC";
    case ServerResult::RejectReplay: return "REJECT_REPLAY";
  }
  return "?";
}

// Accepts a frame iff the CRC passed, the MIC validates, and the frame
// counter is strictly above the last accepted one for that address.
class NetworkServer {
 public:
  void provision(std::uint32_t dev_addr, const codec::SessionKeys& keys) {
    keys_[dev_addr] = keys;
  }

  ServerResult receive(const medium::ReceptionOutcome& outcome,
                       std::span<const std::uint8_t> wire) {
    if (outcome.status == medium::RxStatus::CrcFailed) return ServerResult::RejectCrc;
    if (outcome.status == medium::RxStatus::NotHeard) return ServerResult::RejectCrc;

    codec::Frame f;
    try {
      f = codec::decode(wire);
    } catch (const TooShort&) {
      return ServerResult::RejectMic;
    }
    auto key_it = keys_.find(f.dev_addr);
    if (key_it == keys_.end() || !codec::verify_mic(wire, key_it->second))
      return ServerResult::RejectMic;

    auto last = last_fcnt_.find(f.dev_addr);
    if (last != last_fcnt_.end() && f.fcnt <= last->second) return ServerResult::RejectReplay;
    last_fcnt_[f.dev_addr] = f.fcnt;
    return ServerResult::Accept;
  }

  std::optional<std::uint16_t> last_fcnt(std::uint32_t dev_addr) const {
    auto it = last_fcnt_.find(dev_addr);
    if (it == last_fcnt_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::map<std::uint32_t, codec::SessionKeys> keys_;
  std::map<std::uint32_t, std::uint16_t> last_fcnt_;
};

// Predicate over the clear-text frame prefix. Policies are compiled
// against the jammer's configured read depth: a predicate that needs
// deeper bytes than the radio will read is rejected up front.
class JamPolicy {
 public:
  static JamPolicy match_all() { return JamPolicy(Kind::All); }
  static JamPolicy match_none() { return JamPolicy(Kind::None); }

  static JamPolicy dev_addr_in(std::set<std::uint32_t> addrs) {
    JamPolicy p(Kind::DevAddr);
    p.addrs_ = std::move(addrs);
    return p;
  }

  static JamPolicy mtype_in(std::set<codec::MType> types) {
    JamPolicy p(Kind::MType);
    p.mtypes_ = std::move(types);
    return p;
  }

  static JamPolicy fcnt_between(std::uint16_t lo, std::uint16_t hi) {
    JamPolicy p(Kind::Fcnt);
    p.lo_ = lo;
    p.hi_ = hi;
    return p;
  }

  static JamPolicy all_of(std::vector<JamPolicy> children) {
    JamPolicy p(Kind::And);
    p.children_ = std::move(children);
    return p;
  }

  static JamPolicy any_of(std::vector<JamPolicy> children) {
    JamPolicy p(Kind::Or);
    p.children_ = std::move(children);
    return p;
  }

  static JamPolicy negate(JamPolicy child) {
    JamPolicy p(Kind::Not);
    p.children_.push_back(std::move(child));
    return p;
  }

  int required_prefix_bytes() const {
    switch (kind_) {
      case Kind::All:
      case Kind::None:
      case Kind::MType:
        return 1;
      case Kind::DevAddr:
        return 5;
      case Kind::Fcnt:
        return 8;
      case Kind::And:
      case Kind::Or:
      case Kind::Not: {
        int need = 1;
        for (const auto& c : children_) need = std::max(need, c.required_prefix_bytes());
        return need;
      }
    }
    return 1;
  }

  void check_depth(int read_bytes) const {
    if (required_prefix_bytes() > read_bytes)
      throw PolicyTooDeep("policy needs " + std::to_string(required_prefix_bytes()) +
                          " prefix bytes but the read depth is " + std::to_string(read_bytes));
  }

  bool matches(const codec::HeaderPrefix& h) const {
    switch (kind_) {
      case Kind::All:
        return true;
      case Kind::None:
        return false;
      case Kind::DevAddr:
        return h.dev_addr && addrs_.count(*h.dev_addr) > 0;
      case Kind::MType:
        return mtypes_.count(codec::mtype(h.mhdr)) > 0;
      case Kind::Fcnt:
        return h.fcnt && *h.fcnt >= lo_ && *h.fcnt <= hi_;
      case Kind::And:
        for (const auto& c : children_)
          if (!c.matches(h)) return false;
        return true;
      case Kind::Or:
        for (const auto& c : children_)
          if (c.matches(h)) return true;
        return false;
      case Kind::Not:
        return !children_.front().matches(h);
    }
    return false;
  }

  enum class Kind { All, None, DevAddr, MType, Fcnt, And, Or, Not };
  Kind kind() const { return kind_; }
  const std::set<std::uint32_t>& addrs() const { return addrs_; }
  const std::set<codec::MType>& mtypes() const { return mtypes_; }
  std::uint16_t fcnt_lo() const { return lo_; }
  std::uint16_t fcnt_hi() const { return hi_; }
  const std::vector<JamPolicy>& children() const { return children_; }

  bool operator==(const JamPolicy&) const = default;

 private:
  explicit JamPolicy(Kind k) : kind_(k) {}

  Kind kind_;
  std::set<std::uint32_t> addrs_;
  std::set<codec::MType> mtypes_;
  std::uint16_t lo_ = 0, hi_ = 0;
  std::vector<JamPolicy> children_;
};

enum class AdversaryKind { None, Triggered, Selective, Wormhole };

struct AdversaryConfig {
  AdversaryKind kind = AdversaryKind::None;
  NodeId jammer_id = "jammer";
  NodeId sniffer_id = "sniffer";  // wormhole only
  std::uint32_t channel_hz = 0;
  int sf_filter = 0;  // 0 = react to any sf
  int detect_delay_symbols = 1;
  int read_bytes = 5;
  Micros decision_delay{1000};
  double miss_prob = 0.0;
  int jam_wire_len = 10;
  Micros rearm{0};
  double tx_power_dbm = 14.0;
  JamPolicy policy = JamPolicy::match_all();
  phy::LatencyModel link_latency{Micros{100830}, Micros{1700}};
  int replay_passes = 0;      // 0 = no replay phase
  Micros replay_start{0};     // absolute sim time of the first replayed frame
  Micros replay_interval{0};  // 0 = victim's observed mean inter-arrival
  Micros active_from{0};
  Micros active_until = kForever;

  bool operator==(const AdversaryConfig&) const = default;
};

namespace detail {

inline medium::Transmission make_jam(const AdversaryConfig& cfg, const NodeId& source,
                                     const phy::RadioParams& victim_params, Micros start,
                                     std::uint32_t channel_hz, Rng& rng) {
  medium::Transmission jam;
  jam.source = source;
  jam.channel_hz = channel_hz;
  jam.params = victim_params;
  if (cfg.sf_filter != 0) jam.params = phy::make_params(cfg.sf_filter, victim_params.bandwidth_hz);
  jam.wire.bytes = rng.bytes(std::size_t(cfg.jam_wire_len));
  jam.start = start;
  jam.tx_power_dbm = cfg.tx_power_dbm;
  jam.from_jammer = true;
  return jam;
}

inline bool in_active_window(const AdversaryConfig& cfg, Micros t) {
  return t >= cfg.active_from && t < cfg.active_until;
}

}  // namespace detail

// Jams any frame on its channel as soon as the preamble is detected; no
// demodulation, no selectivity.
class TriggeredJammer {
 public:
  TriggeredJammer(AdversaryConfig cfg, medium::Medium& med, Rng rng)
      : cfg_(std::move(cfg)), med_(med), rng_(std::move(rng)) {}

  void attach() {
    med_.on_tx_start([this](const medium::Transmission& tx) { on_tx(tx); });
  }

  std::uint64_t jams_sent() const { return jams_sent_; }

 private:
  void on_tx(const medium::Transmission& tx) {
    if (tx.from_jammer || tx.source == cfg_.jammer_id) return;
    if (tx.channel_hz != cfg_.channel_hz) return;
    if (cfg_.sf_filter != 0 && tx.params.sf != cfg_.sf_filter) return;
    if (!detail::in_active_window(cfg_, tx.start)) return;
    if (busy_until_ > tx.start) return;
    if (cfg_.miss_prob > 0 && rng_.bernoulli(cfg_.miss_prob)) {
      med_.log().append(tx.start, "JAM_MISS node=" + cfg_.jammer_id +
                                      " id=" + std::to_string(tx.id));
      return;
    }
    Micros jam_at =
        tx.start + Micros{cfg_.detect_delay_symbols * phy::symbol_time(tx.params).count()};
    auto jam = detail::make_jam(cfg_, cfg_.jammer_id, tx.params, jam_at, tx.channel_hz, rng_);
    busy_until_ = jam_at + phy::time_on_air(jam.params, cfg_.jam_wire_len) + cfg_.rearm;
    med_.log().append(tx.start, "JAM_TRIGGER node=" + cfg_.jammer_id +
                                    " id=" + std::to_string(tx.id) +
                                    " at=" + std::to_string(jam_at.count()));
    med_.schedule(std::move(jam));
    ++jams_sent_;
  }

  AdversaryConfig cfg_;
  medium::Medium& med_;
  Rng rng_;
  Micros busy_until_{0};
  std::uint64_t jams_sent_ = 0;
};

// Reads the frame prefix off the air, applies the policy at the decision
// point (airtime of a read_bytes frame plus the evaluation delay), and
// jams the tail of matching frames.
class SelectiveJammer {
 public:
  SelectiveJammer(AdversaryConfig cfg, medium::Medium& med, Rng rng)
      : cfg_(std::move(cfg)), med_(med), rng_(std::move(rng)) {
    cfg_.policy.check_depth(cfg_.read_bytes);
  }

  void attach() {
    med_.on_tx_start([this](const medium::Transmission& tx) { on_tx(tx); });
  }

  std::uint64_t jams_sent() const { return jams_sent_; }

 private:
  void on_tx(const medium::Transmission& tx) {
    if (tx.from_jammer || tx.source == cfg_.jammer_id) return;
    if (tx.channel_hz != cfg_.channel_hz) return;
    if (cfg_.sf_filter != 0 && tx.params.sf != cfg_.sf_filter) return;
    if (!detail::in_active_window(cfg_, tx.start)) return;
    if (busy_until_ > tx.start) return;
    if (int(tx.wire.bytes.size()) < cfg_.read_bytes) return;
    if (cfg_.miss_prob > 0 && rng_.bernoulli(cfg_.miss_prob)) {
      med_.log().append(tx.start, "JAM_MISS node=" + cfg_.jammer_id +
                                      " id=" + std::to_string(tx.id));
      return;
    }

    Micros decision_at =
        tx.start + phy::time_on_air(tx.params, cfg_.read_bytes) + cfg_.decision_delay;
    busy_until_ = decision_at;  // receiving until the prefix is evaluated
    medium::TxId id = tx.id;
    med_.engine().at(decision_at, [this, id] { decide(id); });
  }

  void decide(medium::TxId id) {
    const auto& tx = med_.tx(id);
    auto prefix = codec::decode_prefix(
        std::span(tx.wire.bytes).first(std::size_t(cfg_.read_bytes)));
    bool match = cfg_.policy.matches(prefix);
    Micros now = med_.engine().now();
    med_.log().append(now, "JAM_DECISION node=" + cfg_.jammer_id + " id=" + std::to_string(id) +
                               " match=" + (match ? std::string("1") : std::string("0")));
    if (!match) return;
    auto jam = detail::make_jam(cfg_, cfg_.jammer_id, tx.params, now, tx.channel_hz, rng_);
    busy_until_ = now + phy::time_on_air(jam.params, cfg_.jam_wire_len) + cfg_.rearm;
    med_.schedule(std::move(jam));
    ++jams_sent_;
  }

  AdversaryConfig cfg_;
  medium::Medium& med_;
  Rng rng_;
  Micros busy_until_{0};
  std::uint64_t jams_sent_ = 0;
};

struct StoredFrame {
  Bytes wire;
  phy::RadioParams params;
  std::uint32_t channel_hz = 0;
  Micros original_start{0};
  std::uint32_t dev_addr = 0;
  std::uint16_t fcnt = 0;
};

// Sniffer + jammer pair joined by a latency-bearing link. The sniffer
// reads and classifies, signals the jammer on a match, keeps listening to
// capture the original frame, and stores clean copies for replay.
class Wormhole {
 public:
  Wormhole(AdversaryConfig cfg, medium::Medium& med, Rng rng)
      : cfg_(std::move(cfg)), med_(med), rng_(std::move(rng)) {
    cfg_.policy.check_depth(cfg_.read_bytes);
  }

  void attach() {
    med_.on_tx_start([this](const medium::Transmission& tx) { on_tx(tx); });
    med_.on_reception([this](const medium::ReceptionOutcome& out, const medium::Transmission& tx) {
      if (out.receiver == cfg_.sniffer_id) on_sniffer_rx(out, tx);
    });
  }

  const std::deque<StoredFrame>& store() const { return store_; }
  std::uint64_t sniffer_jammed() const { return sniffer_jammed_; }
  std::uint64_t jams_sent() const { return jams_sent_; }
  std::uint64_t replays_sent() const { return replays_sent_; }

  // Schedules the replay phase over the frames stored so far. Interval 0
  // uses the victim's observed mean inter-arrival so replayed traffic
  // keeps the original cadence.
  void start_replay(Micros at) {
    if (store_.empty() || cfg_.replay_passes <= 0) return;
    Micros interval = cfg_.replay_interval;
    if (interval.count() == 0) {
      if (store_.size() >= 2) {
        auto total = store_.back().original_start - store_.front().original_start;
        interval = Micros{total.count() / std::int64_t(store_.size() - 1)};
      } else {
        interval = Micros{1'000'000};
      }
    }
    Micros t = at;
    for (int pass = 0; pass < cfg_.replay_passes; ++pass) {
      for (const auto& stored : store_) {
        medium::Transmission tx;
        tx.source = cfg_.jammer_id;
        tx.channel_hz = stored.channel_hz;
        tx.params = stored.params;
        tx.wire.bytes = stored.wire;
        tx.start = t;
        tx.tx_power_dbm = cfg_.tx_power_dbm;
        tx.replay = true;
        med_.schedule(std::move(tx));
        ++replays_sent_;
        t += interval;
      }
    }
  }

 private:
  void on_tx(const medium::Transmission& tx) {
    if (tx.from_jammer || tx.replay) return;
    if (tx.source == cfg_.jammer_id || tx.source == cfg_.sniffer_id) return;
    if (tx.channel_hz != cfg_.channel_hz) return;
    if (cfg_.sf_filter != 0 && tx.params.sf != cfg_.sf_filter) return;
    if (!detail::in_active_window(cfg_, tx.start)) return;
    if (reading_until_ > tx.start) {
      missed_.insert(tx.id);
      return;
    }
    if (int(tx.wire.bytes.size()) < cfg_.read_bytes) {
      missed_.insert(tx.id);
      return;
    }
    if (cfg_.miss_prob > 0 && rng_.bernoulli(cfg_.miss_prob)) {
      missed_.insert(tx.id);
      med_.log().append(tx.start, "JAM_MISS node=" + cfg_.sniffer_id +
                                      " id=" + std::to_string(tx.id));
      return;
    }
    reading_until_ = tx.end();  // the sniffer stays on the frame to record it

    Micros decision_at =
        tx.start + phy::time_on_air(tx.params, cfg_.read_bytes) + cfg_.decision_delay;
    medium::TxId id = tx.id;
    med_.engine().at(decision_at, [this, id] { decide(id); });
  }

  void decide(medium::TxId id) {
    const auto& tx = med_.tx(id);
    auto prefix = codec::decode_prefix(
        std::span(tx.wire.bytes).first(std::size_t(cfg_.read_bytes)));
    bool match = cfg_.policy.matches(prefix);
    Micros now = med_.engine().now();
    med_.log().append(now, "JAM_DECISION node=" + cfg_.sniffer_id + " id=" + std::to_string(id) +
                               " match=" + (match ? std::string("1") : std::string("0")));
    if (!match) return;

    double raw = rng_.gaussian(double(cfg_.link_latency.mean.count()),
                               double(cfg_.link_latency.stddev.count()));
    Micros latency{std::max<std::int64_t>(0, std::llround(raw))};
    med_.log().append(now, "WORMHOLE_SIGNAL node=" + cfg_.sniffer_id +
                               " latency_us=" + std::to_string(latency.count()));
    Micros jam_at = now + latency;
    if (jammer_busy_until_ > jam_at) return;  // jammer radio still keyed up
    auto jam = detail::make_jam(cfg_, cfg_.jammer_id, tx.params, jam_at, tx.channel_hz, rng_);
    jammer_busy_until_ = jam_at + phy::time_on_air(jam.params, cfg_.jam_wire_len) + cfg_.rearm;
    med_.schedule(std::move(jam));
    ++jams_sent_;
  }

  void on_sniffer_rx(const medium::ReceptionOutcome& out, const medium::Transmission& tx) {
    if (tx.from_jammer || tx.replay) return;
    if (missed_.count(out.tx)) return;
    Micros now = med_.engine().now();
    if (out.status == medium::RxStatus::CrcFailed && out.jammer_caused) {
      ++sniffer_jammed_;
      med_.log().append(now, "SNIFFER_JAMMED node=" + cfg_.sniffer_id +
                                 " id=" + std::to_string(out.tx));
      return;
    }
    if (out.status != medium::RxStatus::Delivered) return;
    codec::Frame f;
    try {
      f = codec::decode(tx.wire.bytes);
    } catch (const TooShort&) {
      return;
    }
    store_.push_back(StoredFrame{tx.wire.bytes, tx.params, tx.channel_hz, tx.start, f.dev_addr,
                                 f.fcnt});
    med_.log().append(now, "SNIFFER_STORE node=" + cfg_.sniffer_id + " dev=" +
                               hexutil::addr_hex(f.dev_addr) + " fcnt=" + std::to_string(f.fcnt));
  }

  AdversaryConfig cfg_;
  medium::Medium& med_;
  Rng rng_;
  Micros reading_until_{0};
  Micros jammer_busy_until_{0};
  std::set<medium::TxId> missed_;
  std::deque<StoredFrame> store_;
  std::uint64_t sniffer_jammed_ = 0;
  std::uint64_t jams_sent_ = 0;
  std::uint64_t replays_sent_ = 0;
};

}  // namespace lorajam::actors
