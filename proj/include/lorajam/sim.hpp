#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lorajam/actors.hpp"
#include "lorajam/core.hpp"
#include "lorajam/medium.hpp"
#include "lorajam/scenario.hpp"
#include "lorajam/trace.hpp"

// Scenario execution: builds the engine, medium and actors from a scenario,
// runs to the horizon, and collects metrics, the event log and the gateway
// delivery log. Identical (scenario, seed) pairs produce byte-identical
// outputs.
namespace lorajam::sim {

struct DeviceMetrics {
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t crc_failed = 0;
  std::uint64_t not_heard = 0;
  std::uint64_t jam_crc_failed = 0;  // CRC failures caused by an adversary signal
  std::uint64_t duty_deferrals = 0;
  std::uint64_t accepted = 0;
  std::uint64_t rejected_mic = 0;
  std::uint64_t rejected_replay = 0;
};

struct RunMetrics {
  std::map<NodeId, DeviceMetrics> devices;
  std::uint64_t jam_transmissions = 0;
  std::uint64_t replays_sent = 0;
  std::uint64_t replay_accepted = 0;
  std::uint64_t replay_rejected_replay = 0;
  std::uint64_t replay_rejected_other = 0;
  std::uint64_t sniffer_stored = 0;
  std::uint64_t sniffer_jammed = 0;

  double jam_pct(const NodeId& id) const {
    auto it = devices.find(id);
    if (it == devices.end() || it->second.sent == 0) return 0.0;
    return 100.0 * double(it->second.jam_crc_failed) / double(it->second.sent);
  }

  double delivery_pct(const NodeId& id) const {
    auto it = devices.find(id);
    if (it == devices.end() || it->second.sent == 0) return 0.0;
    return 100.0 * double(it->second.delivered) / double(it->second.sent);
  }
};

struct RunOutput {
  RunMetrics metrics;
  std::vector<std::string> event_log;
  std::string event_log_text;
  std::uint64_t digest = 0;
  std::vector<trace::DeliveryRecord> gateway_log;
  std::vector<std::string> stored_frame_dumps;  // wormhole recordings, hexdump per frame
};

namespace detail {

inline trace::DeliveryStatus to_delivery_status(actors::ServerResult r) {
  switch (r) {
    case actors::ServerResult::Accept: return trace::DeliveryStatus::Accept;
    case actors::ServerResult::RejectCrc: return trace::DeliveryStatus::RejectCrc;
    case actors::ServerResult::RejectMic: return trace::DeliveryStatus::RejectMic;
    case actors::ServerResult::RejectReplay: return trace::DeliveryStatus::RejectReplay;
  }
  return trace::DeliveryStatus::RejectMic;
}

}  // namespace detail

class Simulation {
 public:
  explicit Simulation(scenario::Scenario sc) : sc_(std::move(sc)) {
    scenario::validate(sc_);
  }

  RunOutput run() {
    Rng master(sc_.seed);
    medium::EventLog log;
    medium::Engine engine;
    medium::Medium med(engine, sc_.links, sc_.capture, log);
    med_ = &med;

    for (const auto& gw : sc_.gateways) med.add_receiver(gw);
    gateways_ = {sc_.gateways.begin(), sc_.gateways.end()};

    const auto& adv = sc_.adversary;
    if (adv.kind == actors::AdversaryKind::Wormhole)
      med.add_receiver(adv.sniffer_id, {adv.channel_hz});

    for (const auto& d : sc_.devices) {
      server_.provision(d.dev_addr, d.keys);
      metrics_.devices[d.id];  // stable row even if the device never sends
      devices_.push_back(
          std::make_unique<actors::EndDevice>(d, master.fork("device/" + d.id)));
    }

    std::optional<actors::TriggeredJammer> triggered;
    std::optional<actors::SelectiveJammer> selective;
    std::optional<actors::Wormhole> wormhole;
    switch (adv.kind) {
      case actors::AdversaryKind::Triggered:
        triggered.emplace(adv, med, master.fork("adversary"));
        triggered->attach();
        break;
      case actors::AdversaryKind::Selective:
        selective.emplace(adv, med, master.fork("adversary"));
        selective->attach();
        break;
      case actors::AdversaryKind::Wormhole:
        wormhole.emplace(adv, med, master.fork("adversary"));
        wormhole->attach();
        if (adv.replay_passes > 0)
          engine.at(adv.replay_start, [&wormhole, &engine] {
            wormhole->start_replay(engine.now());
          });
        break;
      case actors::AdversaryKind::None:
        break;
    }

    med.on_tx_resolved([this](const medium::Transmission& tx,
                              const std::vector<medium::ReceptionOutcome>& outcomes) {
      on_frame_resolved(tx, outcomes);
    });

    for (std::size_t i = 0; i < devices_.size(); ++i) {
      const auto& cfg = devices_[i]->config();
      Micros first = cfg.send_times.empty() ? cfg.first_send : cfg.send_times.front();
      if (first < sc_.duration)
        engine.at(first, [this, i, first] { fire_device(i, first); });
    }

    engine.run_until(sc_.duration);

    if (triggered) metrics_.jam_transmissions = triggered->jams_sent();
    if (selective) metrics_.jam_transmissions = selective->jams_sent();
    RunOutput out;
    if (wormhole) {
      metrics_.jam_transmissions = wormhole->jams_sent();
      metrics_.replays_sent = wormhole->replays_sent();
      metrics_.sniffer_stored = wormhole->store().size();
      metrics_.sniffer_jammed = wormhole->sniffer_jammed();
      for (const auto& f : wormhole->store())
        out.stored_frame_dumps.push_back(codec::hexdump(f.wire));
    }

    out.metrics = metrics_;
    out.event_log = log.lines();
    out.event_log_text = log.text();
    out.digest = log.digest();
    out.gateway_log = std::move(gateway_log_);
    med_ = nullptr;
    return out;
  }

 private:
  void fire_device(std::size_t i, Micros nominal) {
    int cap = devices_[i]->config().max_frames;
    if (cap > 0 && int(devices_[i]->fcnt()) >= cap) return;
    auto step = devices_[i]->step(nominal);
    const NodeId& id = devices_[i]->config().id;
    if (step.deferred) {
      metrics_.devices[id].duty_deferrals++;
      med_->log().append(nominal, "DUTY_DEFER node=" + id +
                                      " until=" + std::to_string(step.tx.start.count()));
    }
    if (step.tx.start < sc_.duration) med_->schedule(step.tx);
    if (step.next_nominal < sc_.duration) {
      Micros next = step.next_nominal;
      med_->engine().at(next, [this, i, next] { fire_device(i, next); });
    }
  }

  // Network-level accounting: a frame counts as delivered when any
  // gateway received it; the server sees one copy per frame (the first
  // clean one, matching a deduplicating uplink path).
  void on_frame_resolved(const medium::Transmission& tx,
                         const std::vector<medium::ReceptionOutcome>& outcomes) {
    if (tx.from_jammer) return;  // jam signals never surface as frames

    const medium::ReceptionOutcome* best = nullptr;
    for (const auto& out : outcomes) {
      if (!gateways_.count(out.receiver)) continue;  // sniffer copies don't reach the server
      if (!best || rank(out.status) > rank(best->status)) best = &out;
    }
    if (!best) return;

    DeviceMetrics* m = tx.replay ? nullptr : &metrics_.devices[tx.source];
    if (m) {
      m->sent++;
      switch (best->status) {
        case medium::RxStatus::Delivered: m->delivered++; break;
        case medium::RxStatus::CrcFailed:
          m->crc_failed++;
          if (best->jammer_caused) m->jam_crc_failed++;
          break;
        case medium::RxStatus::NotHeard: m->not_heard++; break;
      }
    }
    if (best->status == medium::RxStatus::NotHeard) return;

    actors::ServerResult result = server_.receive(*best, tx.wire.bytes);
    std::uint32_t addr = 0;
    int fcnt = -1;
    bool reserved_mtype = false;
    try {
      codec::Frame f = codec::decode(tx.wire.bytes);
      addr = f.dev_addr;
      fcnt = f.fcnt;
      reserved_mtype = codec::is_reserved_mtype(f.mhdr);
    } catch (const TooShort&) {
    }
    Micros t = tx.end();
    med_->log().append(t, std::string("SERVER dev=") + hexutil::addr_hex(addr) +
                              " fcnt=" + std::to_string(fcnt) + " result=" + to_string(result) +
                              " src=" + tx.source + " id=" + std::to_string(tx.id) +
                              " replay=" + (tx.replay ? "1" : "0") +
                              (reserved_mtype ? " mtype=rfu" : ""));

    trace::DeliveryRecord rec;
    rec.t = t;
    rec.channel_hz = tx.channel_hz;
    rec.sf = tx.params.sf;
    rec.wire_len = tx.wire.bytes.size();
    rec.dev_addr = addr;
    rec.status = detail::to_delivery_status(result);
    gateway_log_.push_back(rec);

    if (tx.replay) {
      switch (result) {
        case actors::ServerResult::Accept: metrics_.replay_accepted++; break;
        case actors::ServerResult::RejectReplay: metrics_.replay_rejected_replay++; break;
        default: metrics_.replay_rejected_other++; break;
      }
    } else if (m) {
      switch (result) {
        case actors::ServerResult::Accept: m->accepted++; break;
        case actors::ServerResult::RejectMic: m->rejected_mic++; break;
        case actors::ServerResult::RejectReplay: m->rejected_replay++; break;
        case actors::ServerResult::RejectCrc: break;  // already counted as crc_failed
      }
    }
  }

  static int rank(medium::RxStatus s) {
    switch (s) {
      case medium::RxStatus::Delivered: return 2;
      case medium::RxStatus::CrcFailed: return 1;
      case medium::RxStatus::NotHeard: return 0;
    }
    return 0;
  }

  scenario::Scenario sc_;
  medium::Medium* med_ = nullptr;
  actors::NetworkServer server_;
  std::vector<std::unique_ptr<actors::EndDevice>> devices_;
  RunMetrics metrics_;
  std::vector<trace::DeliveryRecord> gateway_log_;
  std::set<NodeId> gateways_;
};

inline RunOutput run_scenario(scenario::Scenario sc,
                              std::optional<std::uint64_t> seed_override = std::nullopt) {
  if (seed_override) sc.seed = *seed_override;
  Simulation s(std::move(sc));
  return s.run();
}

// ---- report tables ----

struct AirtimeRow {
  int sf;
  int size;
  std::int64_t airtime_us;
};

inline std::vector<AirtimeRow> airtime_table(const std::vector<int>& sizes, int coding_rate = 1,
                                             int preamble_symbols = 8) {
  std::vector<AirtimeRow> rows;
  for (int sf = 7; sf <= 12; ++sf) {
    auto p = phy::make_params(sf, 125000, coding_rate, preamble_symbols);
    for (int size : sizes)
      rows.push_back({sf, size, phy::time_on_air(p, size).count()});
  }
  return rows;
}

inline std::string airtime_csv(const std::vector<AirtimeRow>& rows) {
  std::string out = "sf,size_bytes,airtime_us,airtime_ms\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%lld,%.3f\n", r.sf, r.size, (long long)r.airtime_us,
                  double(r.airtime_us) / 1000.0);
    out += buf;
  }
  return out;
}

struct WindowRow {
  int sf;
  int size;
  std::int64_t window_us;
  phy::JamPrediction predicted;
};

inline std::vector<WindowRow> window_table(const std::vector<int>& sizes, int read_bytes,
                                           const phy::LatencyModel& latency) {
  std::vector<WindowRow> rows;
  for (int sf = 7; sf <= 12; ++sf) {
    auto p = phy::make_params(sf);
    for (int size : sizes)
      rows.push_back({sf, size, phy::jamming_window(p, size, read_bytes).count(),
                      phy::predict_jammable(p, size, read_bytes, latency)});
  }
  return rows;
}

inline std::string window_csv(const std::vector<WindowRow>& rows) {
  std::string out = "sf,size_bytes,window_us,predicted\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%lld,%s\n", r.sf, r.size, (long long)r.window_us,
                  phy::to_string(r.predicted));
    out += buf;
  }
  return out;
}

// ---- wormhole feasibility matrix ----

struct MatrixCell {
  int sf;
  int size;
  phy::JamPrediction predicted;
  double jam_pct;
  char simulated;  // 'S' > 95%, 'F' = 0%, 'M' otherwise
};

inline scenario::Scenario matrix_cell_scenario(int sf, int size, const phy::LatencyModel& latency,
                                               int frames, std::uint64_t seed, int read_bytes,
                                               Micros decision_delay) {
  scenario::Scenario sc;
  sc.seed = seed;
  sc.channels_hz = {868100000};
  sc.gateways = {"gw"};

  actors::DeviceConfig d;
  d.id = "target";
  d.dev_addr = 0x12345663;
  d.keys = codec::keys_from_hex("000102030405060708090a0b0c0d0e0f",
                                "101112131415161718191a1b1c1d1e1f");
  d.params = phy::make_params(sf);
  d.plan.entries = {{868100000, 1.0}};
  d.frm_payload_len = size - int(codec::kHeaderOverheadBytes);
  d.max_frames = frames;
  Micros airtime = phy::time_on_air(d.params, size);
  d.period = Micros{airtime.count() * 100 + 1000};
  d.first_send = Micros{1'000'000};
  sc.devices.push_back(d);

  actors::AdversaryConfig a;
  a.kind = actors::AdversaryKind::Wormhole;
  a.jammer_id = "wh-jammer";
  a.sniffer_id = "wh-sniffer";
  a.channel_hz = 868100000;
  a.read_bytes = read_bytes;
  a.decision_delay = decision_delay;
  a.policy = actors::JamPolicy::dev_addr_in({d.dev_addr});
  a.link_latency = latency;
  sc.adversary = a;

  sc.links.set("target", "gw", -80);
  sc.links.set("wh-jammer", "gw", -40);
  sc.links.set("target", "wh-sniffer", -40);
  sc.links.set("wh-jammer", "wh-sniffer", -200);

  sc.duration = d.first_send + Micros{d.period.count() * frames + 1};
  return sc;
}

inline std::vector<MatrixCell> wormhole_matrix(const phy::LatencyModel& latency,
                                               const std::vector<int>& sizes, int frames,
                                               std::uint64_t seed, int read_bytes = 5,
                                               Micros decision_delay = Micros{1000}) {
  std::vector<MatrixCell> cells;
  for (int size : sizes) {
    for (int sf = 7; sf <= 12; ++sf) {
      auto p = phy::make_params(sf);
      std::uint64_t cell_seed = splitmix64(seed ^ (std::uint64_t(sf) << 16 ^ std::uint64_t(size)));
      auto out = run_scenario(
          matrix_cell_scenario(sf, size, latency, frames, cell_seed, read_bytes, decision_delay));
      double pct = out.metrics.jam_pct("target");
      char cls = pct > 95.0 ? 'S' : (pct == 0.0 ? 'F' : 'M');
      cells.push_back(
          {sf, size, phy::predict_jammable(p, size, read_bytes, latency), pct, cls});
    }
  }
  return cells;
}

inline std::string matrix_csv(const std::vector<MatrixCell>& cells) {
  std::string out = "size_bytes,sf,predicted,simulated,jam_pct\n";
  char buf[96];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, "%d,%d,%s,%c,%.1f\n", c.size, c.sf,
                  phy::to_string(c.predicted), c.simulated, c.jam_pct);
    out += buf;
  }
  // Known model limit: predictions within ~40-50 ms of the latency mean
  // overestimate; bench trials with real radios jammed no SF8 frames even
  // though sizes 47-57 sit above the threshold.
  out += "# note: predictions near the threshold are optimistic; treat sub-50ms margins (all "
         "predicted-S SF8 cells) as upper bounds\n";
  return out;
}

// ---- rssi differential sweep ----

struct SweepPoint {
  double differential_db;
  double jam_pct;
};

inline std::vector<SweepPoint> rssi_sweep(const scenario::Scenario& base, double from_db,
                                          double to_db, double step_db) {
  if (step_db <= 0) throw Error("sweep step must be positive");
  if (base.devices.empty()) throw ScenarioError("sweep scenario needs at least one device");
  if (base.adversary.kind == actors::AdversaryKind::None)
    throw ScenarioError("sweep scenario needs an adversary");
  const NodeId& dev = base.devices.front().id;
  const NodeId& gw = base.gateways.front();
  double dev_rssi = base.links.rssi(dev, gw);

  std::vector<SweepPoint> points;
  for (double d = from_db; d <= to_db + 1e-9; d += step_db) {
    scenario::Scenario sc = base;
    sc.links.set(sc.adversary.jammer_id, gw, dev_rssi + d);
    auto out = run_scenario(std::move(sc));
    points.push_back({d, out.metrics.jam_pct(dev)});
  }
  return points;
}

inline std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::string out = "differential_db,jam_pct\n";
  char buf[64];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.1f,%.1f\n", p.differential_db, p.jam_pct);
    out += buf;
  }
  return out;
}

// ---- metrics reports ----

inline std::string metrics_csv(const RunMetrics& m) {
  std::string out =
      "node,sent,delivered,crc_failed,not_heard,jam_crc_failed,jam_pct,duty_deferrals,accepted,"
      "rejected_mic,rejected_replay\n";
  char buf[256];
  for (const auto& [id, d] : m.devices) {
    double pct = d.sent ? 100.0 * double(d.jam_crc_failed) / double(d.sent) : 0.0;
    std::snprintf(buf, sizeof buf, "%s,%llu,%llu,%llu,%llu,%llu,%.1f,%llu,%llu,%llu,%llu\n",
                  id.c_str(), (unsigned long long)d.sent, (unsigned long long)d.delivered,
                  (unsigned long long)d.crc_failed, (unsigned long long)d.not_heard,
                  (unsigned long long)d.jam_crc_failed, pct,
                  (unsigned long long)d.duty_deferrals, (unsigned long long)d.accepted,
                  (unsigned long long)d.rejected_mic, (unsigned long long)d.rejected_replay);
    out += buf;
  }
  return out;
}

inline std::string summary_csv(const RunMetrics& m) {
  std::string out = "key,value\n";
  char buf[96];
  auto row = [&](const char* key, std::uint64_t v) {
    std::snprintf(buf, sizeof buf, "%s,%llu\n", key, (unsigned long long)v);
    out += buf;
  };
  row("jam_transmissions", m.jam_transmissions);
  row("replays_sent", m.replays_sent);
  row("replay_accepted", m.replay_accepted);
  row("replay_rejected_replay", m.replay_rejected_replay);
  row("replay_rejected_other", m.replay_rejected_other);
  row("sniffer_stored", m.sniffer_stored);
  row("sniffer_jammed", m.sniffer_jammed);
  return out;
}

}  // namespace lorajam::sim
