#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "lorajam/codec.hpp"
#include "lorajam/core.hpp"
#include "lorajam/phy.hpp"

// The shared radio channel: a deterministic discrete-event engine plus the
// co-channel capture model that decides which of two overlapping signals
// survives at each receiver.
namespace lorajam::medium {

using TxId = std::uint64_t;

struct Transmission {
  TxId id = 0;
  NodeId source;
  std::uint32_t channel_hz = 0;
  phy::RadioParams params;
  codec::WireFrame wire;
  Micros start{0};
  double tx_power_dbm = 14.0;
  bool from_jammer = false;
  bool replay = false;
  Micros airtime{0};  // filled by schedule()

  Micros end() const { return start + airtime; }
};

// threshold_db[ds_sf][is_sf]: the desired signal is corrupted when
// rssi(IS) - rssi(DS) >= threshold. The same-SF diagonal is the capture
// margin: -6 means an interferer more than 6 dB below the desired signal
// is rejected, anything closer corrupts (near-equal power loses both).
struct CaptureMatrix {
  std::array<std::array<double, 6>, 6> threshold_db{};

  static CaptureMatrix defaults() {
    CaptureMatrix m;
    m.threshold_db = {{
        {-6, 16, 18, 19, 19, 20},   // DS sf7
        {24, -6, 20, 22, 22, 22},   // DS sf8
        {27, 27, -6, 23, 25, 25},   // DS sf9
        {30, 30, 30, -6, 26, 28},   // DS sf10
        {33, 33, 33, 33, -6, 29},   // DS sf11
        {36, 36, 36, 36, 36, -6},   // DS sf12
    }};
    return m;
  }

  double threshold(int ds_sf, int is_sf) const {
    if (ds_sf < 7 || ds_sf > 12 || is_sf < 7 || is_sf > 12)
      throw Error("capture matrix index out of range");
    return threshold_db[std::size_t(ds_sf - 7)][std::size_t(is_sf - 7)];
  }

  double& threshold(int ds_sf, int is_sf) {
    if (ds_sf < 7 || ds_sf > 12 || is_sf < 7 || is_sf > 12)
      throw Error("capture matrix index out of range");
    return threshold_db[std::size_t(ds_sf - 7)][std::size_t(is_sf - 7)];
  }

  bool operator==(const CaptureMatrix&) const = default;
};

// Explicit received-power matrix; no propagation model. RSSI is static per
// link per run.
struct LinkModel {
  std::map<std::pair<NodeId, NodeId>, double> rssi_dbm;

  bool has(const NodeId& tx, const NodeId& rx) const {
    return rssi_dbm.count({tx, rx}) > 0;
  }

  double rssi(const NodeId& tx, const NodeId& rx) const {
    auto it = rssi_dbm.find({tx, rx});
    if (it == rssi_dbm.end())
      throw MissingLinkEntry("no rssi entry for link " + tx + " -> " + rx);
    return it->second;
  }

  void set(const NodeId& tx, const NodeId& rx, double dbm) { rssi_dbm[{tx, rx}] = dbm; }

  bool operator==(const LinkModel&) const = default;
};

enum class RxStatus { Delivered, CrcFailed, NotHeard };

inline const char* to_string(RxStatus s) {
  switch (s) {
    case RxStatus::Delivered: return "DELIVERED";
    case RxStatus::CrcFailed: return "CRC_FAILED";
    case RxStatus::NotHeard: return "NOT_HEARD";
  }
  return "?";
}

struct ReceptionOutcome {
  NodeId receiver;
  TxId tx = 0;
  RxStatus status = RxStatus::NotHeard;
  std::optional<int> corrupted_from_byte;  // 1-indexed wire byte
  bool jammer_caused = false;
};

namespace detail {

// First byte of the desired frame whose on-air interval (t_{k-1}, t_k]
// intersects [s, e), all relative to the desired frame's start. Intervals
// that touch only the preamble corrupt nothing.
inline std::optional<int> first_overlapped_byte(const phy::RadioParams& p, int payload_len,
                                                Micros s, Micros e) {
  if (e <= s) return std::nullopt;
  Micros t_prev = phy::byte_completion(p, payload_len, 0);
  for (int k = 1; k <= payload_len; ++k) {
    Micros t_k = phy::byte_completion(p, payload_len, k);
    if (t_k > s && t_prev < e) return k;
    if (t_prev >= e) break;
    t_prev = t_k;
  }
  return std::nullopt;
}

}  // namespace detail

// Capture resolution for one desired transmission against the interferers
// that overlap it in time on the same channel. Corruption applies to
// exactly the bytes whose timeline interval overlaps a strong-enough
// interferer's on-air interval.
inline ReceptionOutcome resolve(const Transmission& desired,
                                std::span<const Transmission* const> interferers,
                                const NodeId& receiver, const LinkModel& links,
                                const CaptureMatrix& capture) {
  ReceptionOutcome out;
  out.receiver = receiver;
  out.tx = desired.id;
  out.status = RxStatus::Delivered;

  double ds = links.rssi(desired.source, receiver);
  int payload_len = int(desired.wire.bytes.size());

  for (const Transmission* is : interferers) {
    if (is == nullptr || is->id == desired.id) continue;
    if (is->channel_hz != desired.channel_hz) continue;
    if (is->start >= desired.end() || is->end() <= desired.start) continue;
    double diff = links.rssi(is->source, receiver) - ds;
    if (diff < capture.threshold(desired.params.sf, is->params.sf)) continue;
    auto first = detail::first_overlapped_byte(desired.params, payload_len,
                                               is->start - desired.start,
                                               is->end() - desired.start);
    if (!first) continue;
    out.status = RxStatus::CrcFailed;
    if (!out.corrupted_from_byte || *first < *out.corrupted_from_byte)
      out.corrupted_from_byte = first;
    if (is->from_jammer) out.jammer_caused = true;
  }
  return out;
}

// Line-delimited structured records for regression diffing.
class EventLog {
 public:
  void append(Micros t, const std::string& line) {
    lines_.push_back(std::to_string(t.count()) + " " + line);
  }

  const std::vector<std::string>& lines() const { return lines_; }

  std::string text() const {
    std::string out;
    for (const auto& l : lines_) {
      out += l;
      out += '\n';
    }
    return out;
  }

  std::uint64_t digest() const { return fnv1a64(text()); }

  void write(std::ostream& os) const { os << text(); }

 private:
  std::vector<std::string> lines_;
};

// Deterministic event queue: events fire in (time, sequence) order, the
// sequence number assigned at scheduling time.
class Engine {
 public:
  Micros now() const { return now_; }

  void at(Micros t, std::function<void()> fn) {
    if (t < now_)
      throw SchedulingInPast("event at t=" + std::to_string(t.count()) +
                             "us scheduled at now=" + std::to_string(now_.count()) + "us");
    queue_.emplace(std::make_pair(t, seq_++), std::move(fn));
  }

  void run_until(Micros t_end) {
    while (!queue_.empty() && queue_.begin()->first.first <= t_end) {
      auto node = queue_.extract(queue_.begin());
      now_ = node.key().first;
      node.mapped()();
    }
    if (t_end > now_) now_ = t_end;
  }

  bool idle() const { return queue_.empty(); }

 private:
  Micros now_{0};
  std::uint64_t seq_ = 0;
  std::multimap<std::pair<Micros, std::uint64_t>, std::function<void()>> queue_;
};

// Channel state: schedules transmissions, tracks overlap sets per channel,
// applies the receiver-lock rule, and resolves outcomes at frame end.
//
// Lock rule: a receiver locks onto every transmission that starts while it
// has no earlier-started lock on that channel (simultaneous starts all
// lock). A later signal never steals the lock; if strong enough it
// corrupts the locked frame instead of being received itself.
class Medium {
 public:
  Medium(Engine& eng, LinkModel links, CaptureMatrix capture, EventLog& log)
      : eng_(eng), links_(std::move(links)), capture_(capture), log_(log) {}

  // channels empty = listens on every channel (gateway-style).
  void add_receiver(const NodeId& id, std::vector<std::uint32_t> channels = {}) {
    receivers_.push_back(Receiver{id, {channels.begin(), channels.end()}, {}});
  }

  void on_tx_start(std::function<void(const Transmission&)> hook) {
    tx_start_hooks_.push_back(std::move(hook));
  }

  void on_reception(std::function<void(const ReceptionOutcome&, const Transmission&)> hook) {
    reception_hooks_.push_back(std::move(hook));
  }

  // Fires once per frame end with the outcomes at every listening
  // receiver, for network-level (any-gateway) accounting.
  void on_tx_resolved(
      std::function<void(const Transmission&, const std::vector<ReceptionOutcome>&)> hook) {
    tx_resolved_hooks_.push_back(std::move(hook));
  }

  TxId schedule(Transmission tx) {
    if (tx.start < eng_.now())
      throw SchedulingInPast("transmission start " + std::to_string(tx.start.count()) +
                             "us is before now");
    tx.id = next_id_++;
    tx.airtime = phy::time_on_air(tx.params, int(tx.wire.bytes.size()));
    TxId id = tx.id;
    txs_.emplace(id, std::move(tx));
    eng_.at(txs_.at(id).start, [this, id] { handle_tx_start(id); });
    eng_.at(txs_.at(id).end(), [this, id] { handle_tx_end(id); });
    return id;
  }

  const Transmission& tx(TxId id) const { return txs_.at(id); }

  const LinkModel& links() const { return links_; }
  LinkModel& links() { return links_; }
  const CaptureMatrix& capture() const { return capture_; }
  Engine& engine() { return eng_; }
  EventLog& log() { return log_; }

 private:
  struct Receiver {
    NodeId id;
    std::set<std::uint32_t> channels;           // empty = all
    std::map<std::uint32_t, std::set<TxId>> locks;

    bool listens(std::uint32_t ch) const { return channels.empty() || channels.count(ch); }
  };

  void handle_tx_start(TxId id) {
    const Transmission& tx = txs_.at(id);
    char line[192];
    std::snprintf(line, sizeof line,
                  "TX_START id=%llu src=%s ch=%u sf=%d len=%zu pwr=%.1f jam=%d replay=%d",
                  (unsigned long long)id, tx.source.c_str(), tx.channel_hz, tx.params.sf,
                  tx.wire.bytes.size(), tx.tx_power_dbm, tx.from_jammer ? 1 : 0,
                  tx.replay ? 1 : 0);
    log_.append(tx.start, line);

    for (TxId other : active_[tx.channel_hz]) {
      overlaps_[other].push_back(id);
      overlaps_[id].push_back(other);
    }
    active_[tx.channel_hz].push_back(id);

    for (auto& rx : receivers_) {
      if (!rx.listens(tx.channel_hz) || rx.id == tx.source) continue;
      bool blocked = false;
      for (TxId lid : rx.locks[tx.channel_hz])
        if (txs_.at(lid).start < tx.start) blocked = true;
      if (!blocked) rx.locks[tx.channel_hz].insert(id);
    }

    for (auto& hook : tx_start_hooks_) hook(tx);
  }

  void handle_tx_end(TxId id) {
    Transmission& tx = txs_.at(id);
    auto& act = active_[tx.channel_hz];
    act.erase(std::find(act.begin(), act.end(), id));
    log_.append(tx.end(), "TX_END id=" + std::to_string(id) + " src=" + tx.source +
                              " ch=" + std::to_string(tx.channel_hz));

    std::vector<const Transmission*> interferers;
    for (TxId oid : overlaps_[id]) interferers.push_back(&txs_.at(oid));

    std::vector<ReceptionOutcome> outcomes;
    for (auto& rx : receivers_) {
      if (!rx.listens(tx.channel_hz) || rx.id == tx.source) continue;
      ReceptionOutcome out;
      if (rx.locks[tx.channel_hz].erase(id) > 0) {
        out = resolve(tx, interferers, rx.id, links_, capture_);
      } else {
        out.receiver = rx.id;
        out.tx = id;
        out.status = RxStatus::NotHeard;
      }
      char line[192];
      std::snprintf(line, sizeof line, "RX id=%llu rx=%s src=%s ch=%u outcome=%s from_byte=%s jam=%d",
                    (unsigned long long)id, rx.id.c_str(), tx.source.c_str(), tx.channel_hz,
                    to_string(out.status),
                    out.corrupted_from_byte ? std::to_string(*out.corrupted_from_byte).c_str()
                                            : "-",
                    out.jammer_caused ? 1 : 0);
      log_.append(tx.end(), line);
      Transmission delivered_copy = tx;
      delivered_copy.wire.crc_ok = out.status != RxStatus::CrcFailed;
      for (auto& hook : reception_hooks_) hook(out, delivered_copy);
      outcomes.push_back(std::move(out));
    }
    for (auto& hook : tx_resolved_hooks_) hook(tx, outcomes);
  }

  Engine& eng_;
  LinkModel links_;
  CaptureMatrix capture_;
  EventLog& log_;
  std::map<TxId, Transmission> txs_;
  std::map<TxId, std::vector<TxId>> overlaps_;
  std::map<std::uint32_t, std::vector<TxId>> active_;
  std::vector<Receiver> receivers_;
  std::vector<std::function<void(const Transmission&)>> tx_start_hooks_;
  std::vector<std::function<void(const ReceptionOutcome&, const Transmission&)>> reception_hooks_;
  std::vector<std::function<void(const Transmission&, const std::vector<ReceptionOutcome>&)>>
      tx_resolved_hooks_;
  TxId next_id_ = 1;
};

}  // namespace lorajam::medium
