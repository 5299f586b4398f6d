#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lorajam/actors.hpp"
#include "lorajam/core.hpp"
#include "lorajam/medium.hpp"

// Declarative experiment description and its JSON form. Field names here
// are the frozen schema; see docs/scenario-schema.md.
namespace lorajam::scenario {

using nlohmann::json;

struct Scenario {
  std::uint64_t seed = 0;
  Micros duration{0};
  std::vector<std::uint32_t> channels_hz;
  medium::CaptureMatrix capture = medium::CaptureMatrix::defaults();
  medium::LinkModel links;
  std::vector<actors::DeviceConfig> devices;
  std::vector<NodeId> gateways;
  actors::AdversaryConfig adversary;
  bool out_event_log = true;
  bool out_gateway_log = true;

  bool operator==(const Scenario&) const = default;
};

namespace detail {

inline std::uint32_t addr_from_json(const json& j, const std::string& where) {
  if (!j.is_string()) throw ScenarioError(where + ": dev_addr must be an 8-hex-digit string");
  Bytes b = hexutil::from_hex(j.get<std::string>());
  if (b.size() != 4) throw ScenarioError(where + ": dev_addr must be 4 bytes of hex");
  return std::uint32_t(b[0]) << 24 | std::uint32_t(b[1]) << 16 | std::uint32_t(b[2]) << 8 |
         std::uint32_t(b[3]);
}

inline const char* mtype_name(codec::MType t) {
  switch (t) {
    case codec::MType::JoinRequest: return "join_request";
    case codec::MType::JoinAccept: return "join_accept";
    case codec::MType::UnconfirmedUp: return "unconfirmed_up";
    case codec::MType::UnconfirmedDown: return "unconfirmed_down";
    case codec::MType::ConfirmedUp: return "confirmed_up";
    case codec::MType::ConfirmedDown: return "confirmed_down";
    case codec::MType::Rfu: return "rfu";
    case codec::MType::Proprietary: return "proprietary";
  }
  return "?";
}

inline codec::MType mtype_from_name(const std::string& s) {
  for (int i = 0; i < 8; ++i)
    if (s == mtype_name(codec::MType(i))) return codec::MType(i);
  throw ScenarioError("unknown message type \"" + s + "\"");
}

inline json policy_to_json(const actors::JamPolicy& p) {
  using K = actors::JamPolicy::Kind;
  json j;
  switch (p.kind()) {
    case K::All:
      j["all"] = true;
      break;
    case K::None:
      j["none"] = true;
      break;
    case K::DevAddr: {
      json arr = json::array();
      for (auto a : p.addrs()) arr.push_back(hexutil::addr_hex(a));
      j["dev_addr_in"] = arr;
      break;
    }
    case K::MType: {
      json arr = json::array();
      for (auto t : p.mtypes()) arr.push_back(mtype_name(t));
      j["mtype_in"] = arr;
      break;
    }
    case K::Fcnt:
      j["fcnt_between"] = json::array({p.fcnt_lo(), p.fcnt_hi()});
      break;
    case K::And: {
      json arr = json::array();
      for (const auto& c : p.children()) arr.push_back(policy_to_json(c));
      j["and"] = arr;
      break;
    }
    case K::Or: {
      json arr = json::array();
      for (const auto& c : p.children()) arr.push_back(policy_to_json(c));
      j["or"] = arr;
      break;
    }
    case K::Not:
      j["not"] = policy_to_json(p.children().front());
      break;
  }
  return j;
}

inline actors::JamPolicy policy_from_json(const json& j, const std::string& where) {
  using actors::JamPolicy;
  if (!j.is_object() || j.size() != 1)
    throw ScenarioError(where + ": policy must be an object with exactly one key");
  const auto& [key, value] = *j.items().begin();
  if (key == "all") return JamPolicy::match_all();
  if (key == "none") return JamPolicy::match_none();
  if (key == "dev_addr_in") {
    std::set<std::uint32_t> addrs;
    for (const auto& a : value) addrs.insert(addr_from_json(a, where));
    return JamPolicy::dev_addr_in(std::move(addrs));
  }
  if (key == "mtype_in") {
    std::set<codec::MType> types;
    for (const auto& t : value) types.insert(mtype_from_name(t.get<std::string>()));
    return JamPolicy::mtype_in(std::move(types));
  }
  if (key == "fcnt_between") {
    if (!value.is_array() || value.size() != 2)
      throw ScenarioError(where + ".fcnt_between: expected [lo, hi]");
    return JamPolicy::fcnt_between(value[0].get<std::uint16_t>(), value[1].get<std::uint16_t>());
  }
  if (key == "and" || key == "or") {
    std::vector<JamPolicy> children;
    for (const auto& c : value) children.push_back(policy_from_json(c, where + "." + key));
    return key == "and" ? JamPolicy::all_of(std::move(children))
                        : JamPolicy::any_of(std::move(children));
  }
  if (key == "not") return JamPolicy::negate(policy_from_json(value, where + ".not"));
  throw ScenarioError(where + ": unknown policy key \"" + key + "\"");
}

inline const char* kind_name(actors::AdversaryKind k) {
  switch (k) {
    case actors::AdversaryKind::None: return "none";
    case actors::AdversaryKind::Triggered: return "triggered";
    case actors::AdversaryKind::Selective: return "selective";
    case actors::AdversaryKind::Wormhole: return "wormhole";
  }
  return "?";
}

inline actors::AdversaryKind kind_from_name(const std::string& s) {
  if (s == "none") return actors::AdversaryKind::None;
  if (s == "triggered") return actors::AdversaryKind::Triggered;
  if (s == "selective") return actors::AdversaryKind::Selective;
  if (s == "wormhole") return actors::AdversaryKind::Wormhole;
  throw ScenarioError("adversary.kind: unknown kind \"" + s + "\"");
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return it->get<T>();
}

inline Micros us_or(const json& j, const char* key, Micros fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return Micros{it->get<std::int64_t>()};
}

inline void require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ScenarioError(where + ": missing required field \"" + key + "\"");
}

}  // namespace detail

inline json serialize(const Scenario& sc) {
  json j;
  j["seed"] = sc.seed;
  j["duration_us"] = sc.duration.count();
  j["channels_hz"] = sc.channels_hz;

  json cap = json::array();
  for (const auto& row : sc.capture.threshold_db) cap.push_back(row);
  j["capture"]["matrix_db"] = cap;

  json links = json::array();
  for (const auto& [pair, dbm] : sc.links.rssi_dbm)
    links.push_back({{"tx", pair.first}, {"rx", pair.second}, {"rssi_dbm", dbm}});
  j["links"] = links;

  json devs = json::array();
  for (const auto& d : sc.devices) {
    json dj;
    dj["id"] = d.id;
    dj["dev_addr"] = hexutil::addr_hex(d.dev_addr);
    dj["nwk_skey"] = hexutil::to_hex(d.keys.nwk_skey);
    dj["app_skey"] = hexutil::to_hex(d.keys.app_skey);
    dj["sf"] = d.params.sf;
    dj["bandwidth_hz"] = d.params.bandwidth_hz;
    dj["coding_rate"] = d.params.coding_rate;
    dj["preamble_symbols"] = d.params.preamble_symbols;
    dj["explicit_header"] = d.params.explicit_header;
    dj["crc_on"] = d.params.crc_on;
    dj["ldro"] = d.params.low_data_rate_opt;
    json plan = json::array();
    for (auto& [hz, w] : d.plan.entries) plan.push_back({{"hz", hz}, {"weight", w}});
    dj["channels"] = plan;
    dj["period_us"] = d.period.count();
    dj["jitter_us"] = d.jitter.count();
    dj["first_send_us"] = d.first_send.count();
    dj["frm_payload_len"] = d.frm_payload_len;
    dj["fport"] = d.fport;
    dj["duty_cycle"] = d.duty_cycle;
    dj["tx_power_dbm"] = d.tx_power_dbm;
    dj["max_frames"] = d.max_frames;
    if (!d.send_times.empty()) {
      json st = json::array();
      for (auto t : d.send_times) st.push_back(t.count());
      dj["send_at_us"] = st;
    }
    devs.push_back(dj);
  }
  j["devices"] = devs;
  j["gateways"] = sc.gateways;

  const auto& a = sc.adversary;
  json aj;
  aj["kind"] = detail::kind_name(a.kind);
  if (a.kind != actors::AdversaryKind::None) {
    aj["jammer_id"] = a.jammer_id;
    if (a.kind == actors::AdversaryKind::Wormhole) aj["sniffer_id"] = a.sniffer_id;
    aj["channel_hz"] = a.channel_hz;
    aj["sf"] = a.sf_filter;
    aj["detect_delay_symbols"] = a.detect_delay_symbols;
    aj["read_bytes"] = a.read_bytes;
    aj["decision_delay_us"] = a.decision_delay.count();
    aj["miss_prob"] = a.miss_prob;
    aj["jam_wire_len"] = a.jam_wire_len;
    aj["rearm_us"] = a.rearm.count();
    aj["tx_power_dbm"] = a.tx_power_dbm;
    aj["policy"] = detail::policy_to_json(a.policy);
    aj["latency_mean_us"] = a.link_latency.mean.count();
    aj["latency_std_us"] = a.link_latency.stddev.count();
    aj["active_from_us"] = a.active_from.count();
    if (a.active_until != kForever) aj["active_until_us"] = a.active_until.count();
    if (a.replay_passes > 0) {
      aj["replay"] = {{"passes", a.replay_passes},
                      {"start_us", a.replay_start.count()},
                      {"interval_us", a.replay_interval.count()}};
    }
  }
  j["adversary"] = aj;

  j["outputs"] = {{"event_log", sc.out_event_log}, {"gateway_log", sc.out_gateway_log}};
  return j;
}

inline Scenario parse(const json& j) {
  using namespace detail;
  Scenario sc;
  require(j, "seed", "scenario");
  require(j, "duration_us", "scenario");
  require(j, "channels_hz", "scenario");
  require(j, "devices", "scenario");
  require(j, "gateways", "scenario");
  sc.seed = j["seed"].get<std::uint64_t>();
  sc.duration = Micros{j["duration_us"].get<std::int64_t>()};
  sc.channels_hz = j["channels_hz"].get<std::vector<std::uint32_t>>();

  if (j.contains("capture")) {
    const json& cj = j["capture"];
    if (cj.contains("matrix_db")) {
      const json& m = cj["matrix_db"];
      if (!m.is_array() || m.size() != 6)
        throw ScenarioError("capture.matrix_db: expected a 6x6 array");
      for (int r = 0; r < 6; ++r) {
        if (!m[r].is_array() || m[r].size() != 6)
          throw ScenarioError("capture.matrix_db: expected a 6x6 array");
        for (int c = 0; c < 6; ++c)
          sc.capture.threshold_db[std::size_t(r)][std::size_t(c)] = m[r][c].get<double>();
      }
    }
    if (cj.contains("same_sf_db"))
      for (const auto& [sf_str, db] : cj["same_sf_db"].items()) {
        int sf = std::stoi(sf_str);
        sc.capture.threshold(sf, sf) = db.get<double>();
      }
  }

  if (j.contains("links"))
    for (const auto& lj : j["links"]) {
      require(lj, "tx", "links[]");
      require(lj, "rx", "links[]");
      require(lj, "rssi_dbm", "links[]");
      sc.links.set(lj["tx"].get<NodeId>(), lj["rx"].get<NodeId>(), lj["rssi_dbm"].get<double>());
    }

  for (const auto& dj : j["devices"]) {
    actors::DeviceConfig d;
    require(dj, "id", "devices[]");
    d.id = dj["id"].get<NodeId>();
    std::string where = "devices[" + d.id + "]";
    require(dj, "dev_addr", where);
    d.dev_addr = addr_from_json(dj["dev_addr"], where);
    std::string nwk = get_or<std::string>(dj, "nwk_skey", std::string(32, '0'));
    std::string app = get_or<std::string>(dj, "app_skey", std::string(32, '0'));
    d.keys = codec::keys_from_hex(nwk, app);
    std::optional<bool> ldro;
    if (dj.contains("ldro") && !dj["ldro"].is_null()) ldro = dj["ldro"].get<bool>();
    try {
      d.params = phy::make_params(get_or(dj, "sf", 7), get_or(dj, "bandwidth_hz", 125000),
                                  get_or(dj, "coding_rate", 1), get_or(dj, "preamble_symbols", 8),
                                  get_or(dj, "explicit_header", true), get_or(dj, "crc_on", true),
                                  ldro);
    } catch (const Error& e) {
      throw ScenarioError(where + ": " + e.what());
    }
    require(dj, "channels", where);
    for (const auto& cj : dj["channels"])
      d.plan.entries.emplace_back(cj["hz"].get<std::uint32_t>(), get_or(cj, "weight", 1.0));
    d.period = us_or(dj, "period_us", d.period);
    d.jitter = us_or(dj, "jitter_us", d.jitter);
    d.first_send = us_or(dj, "first_send_us", d.first_send);
    d.frm_payload_len = get_or(dj, "frm_payload_len", d.frm_payload_len);
    d.fport = std::uint8_t(get_or<int>(dj, "fport", d.fport));
    d.duty_cycle = get_or(dj, "duty_cycle", d.duty_cycle);
    d.tx_power_dbm = get_or(dj, "tx_power_dbm", d.tx_power_dbm);
    d.max_frames = get_or(dj, "max_frames", d.max_frames);
    if (dj.contains("send_at_us"))
      for (const auto& t : dj["send_at_us"]) d.send_times.push_back(Micros{t.get<std::int64_t>()});
    sc.devices.push_back(std::move(d));
  }

  sc.gateways = j["gateways"].get<std::vector<NodeId>>();

  if (j.contains("adversary")) {
    const json& aj = j["adversary"];
    actors::AdversaryConfig a;
    a.kind = kind_from_name(get_or<std::string>(aj, "kind", "none"));
    if (a.kind != actors::AdversaryKind::None) {
      a.jammer_id = get_or<NodeId>(aj, "jammer_id", a.jammer_id);
      a.sniffer_id = get_or<NodeId>(aj, "sniffer_id", a.sniffer_id);
      require(aj, "channel_hz", "adversary");
      a.channel_hz = aj["channel_hz"].get<std::uint32_t>();
      a.sf_filter = get_or(aj, "sf", 0);
      a.detect_delay_symbols = get_or(aj, "detect_delay_symbols", a.detect_delay_symbols);
      a.read_bytes = get_or(aj, "read_bytes", a.read_bytes);
      a.decision_delay = us_or(aj, "decision_delay_us", a.decision_delay);
      a.miss_prob = get_or(aj, "miss_prob", a.miss_prob);
      a.jam_wire_len = get_or(aj, "jam_wire_len", a.jam_wire_len);
      a.rearm = us_or(aj, "rearm_us", a.rearm);
      a.tx_power_dbm = get_or(aj, "tx_power_dbm", a.tx_power_dbm);
      if (aj.contains("policy")) a.policy = policy_from_json(aj["policy"], "adversary.policy");
      a.link_latency.mean = us_or(aj, "latency_mean_us", a.link_latency.mean);
      a.link_latency.stddev = us_or(aj, "latency_std_us", a.link_latency.stddev);
      a.active_from = us_or(aj, "active_from_us", a.active_from);
      a.active_until = us_or(aj, "active_until_us", a.active_until);
      if (aj.contains("replay")) {
        const json& rj = aj["replay"];
        a.replay_passes = get_or(rj, "passes", 1);
        a.replay_start = us_or(rj, "start_us", Micros{0});
        a.replay_interval = us_or(rj, "interval_us", Micros{0});
      }
    }
    sc.adversary = a;
  }

  if (j.contains("outputs")) {
    sc.out_event_log = get_or(j["outputs"], "event_log", true);
    sc.out_gateway_log = get_or(j["outputs"], "gateway_log", true);
  }
  return sc;
}

// Structural checks beyond shape: id uniqueness, channel-plan coverage,
// link-matrix completeness for every pair a run will look up.
inline void validate(const Scenario& sc) {
  if (sc.duration.count() <= 0) throw ScenarioError("duration_us must be positive");
  if (sc.channels_hz.empty()) throw ScenarioError("channels_hz must be non-empty");
  if (sc.gateways.empty()) throw ScenarioError("at least one gateway is required");

  std::set<std::uint32_t> chans(sc.channels_hz.begin(), sc.channels_hz.end());
  std::set<NodeId> ids(sc.gateways.begin(), sc.gateways.end());
  std::set<std::uint32_t> addrs;
  for (const auto& d : sc.devices) {
    std::string where = "devices[" + d.id + "]";
    if (!ids.insert(d.id).second) throw ScenarioError(where + ": duplicate node id");
    if (!addrs.insert(d.dev_addr).second) throw ScenarioError(where + ": duplicate dev_addr");
    if (d.plan.entries.empty()) throw ScenarioError(where + ": empty channel plan");
    for (auto& [hz, w] : d.plan.entries) {
      if (!chans.count(hz))
        throw ScenarioError(where + ": channel " + std::to_string(hz) +
                            " not in scenario channels_hz");
      if (w <= 0) throw ScenarioError(where + ": channel weight must be positive");
    }
    if (d.period.count() <= 0) throw ScenarioError(where + ": period_us must be positive");
    for (std::size_t t = 1; t < d.send_times.size(); ++t)
      if (d.send_times[t] < d.send_times[t - 1])
        throw ScenarioError(where + ": send_at_us must be sorted ascending");
    if (d.duty_cycle <= 0 || d.duty_cycle > 1)
      throw ScenarioError(where + ": duty_cycle must be in (0, 1]");
    if (d.frm_payload_len < 0) throw ScenarioError(where + ": frm_payload_len must be >= 0");
    std::size_t wire = codec::kMinWireBytes + (d.frm_payload_len > 0 ? 1 : 0) +
                       std::size_t(d.frm_payload_len);
    if (int(wire) > *phy::max_frame_bytes(d.params.sf, d.params.bandwidth_hz))
      throw ScenarioError(where + ": frame exceeds the data-rate maximum");
    for (const auto& gw : sc.gateways)
      if (!sc.links.has(d.id, gw))
        throw ScenarioError("links: missing rssi entry " + d.id + " -> " + gw);
  }

  const auto& a = sc.adversary;
  if (a.kind != actors::AdversaryKind::None) {
    if (!chans.count(a.channel_hz))
      throw ScenarioError("adversary.channel_hz not in scenario channels_hz");
    if (a.read_bytes < 1) throw ScenarioError("adversary.read_bytes must be >= 1");
    if (a.jam_wire_len < 1) throw ScenarioError("adversary.jam_wire_len must be >= 1");
    if (a.miss_prob < 0 || a.miss_prob >= 1)
      throw ScenarioError("adversary.miss_prob must be in [0, 1)");
    try {
      a.policy.check_depth(a.read_bytes);
    } catch (const PolicyTooDeep& e) {
      throw ScenarioError(std::string("adversary.policy: ") + e.what());
    }
    if (a.sf_filter != 0) {
      if (a.sf_filter < 7 || a.sf_filter > 12)
        throw ScenarioError("adversary.sf must be 0 or in [7, 12]");
      for (const auto& d : sc.devices)
        for (auto& [hz, w] : d.plan.entries)
          if (hz == a.channel_hz && !phy::max_frame_bytes(a.sf_filter, d.params.bandwidth_hz))
            throw ScenarioError("adversary.sf " + std::to_string(a.sf_filter) +
                                " has no data-rate row at device " + d.id + "'s bandwidth");
    }
    if (!ids.insert(a.jammer_id).second)
      throw ScenarioError("adversary.jammer_id collides with another node id");
    for (const auto& gw : sc.gateways)
      if (!sc.links.has(a.jammer_id, gw))
        throw ScenarioError("links: missing rssi entry " + a.jammer_id + " -> " + gw);
    if (a.kind == actors::AdversaryKind::Wormhole) {
      if (!ids.insert(a.sniffer_id).second)
        throw ScenarioError("adversary.sniffer_id collides with another node id");
      if (!sc.links.has(a.jammer_id, a.sniffer_id))
        throw ScenarioError("links: missing rssi entry " + a.jammer_id + " -> " + a.sniffer_id);
      for (const auto& d : sc.devices)
        if (!sc.links.has(d.id, a.sniffer_id))
          throw ScenarioError("links: missing rssi entry " + d.id + " -> " + a.sniffer_id);
      if (a.replay_passes < 0) throw ScenarioError("adversary.replay.passes must be >= 0");
      if (a.replay_passes > 0 && a.replay_start.count() <= 0)
        throw ScenarioError("adversary.replay.start_us must be positive when passes > 0");
    }
  }
}

inline Scenario load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ScenarioError(std::string("scenario parse error: ") + e.what());
  }
  Scenario sc = parse(j);
  validate(sc);
  return sc;
}

inline std::string to_text(const Scenario& sc) { return serialize(sc).dump(2) + "\n"; }

}  // namespace lorajam::scenario
