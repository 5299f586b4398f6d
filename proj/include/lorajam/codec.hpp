#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>

#include "lorajam/aes.hpp"
#include "lorajam/core.hpp"
#include "lorajam/phy.hpp"

// LoRaWAN 1.0 uplink frames: wire layout, MIC, payload keystream. Header
// fields travel in clear; everything the selective jammer needs is readable
// from a short prefix without any key material.
namespace lorajam::codec {

struct SessionKeys {
  std::array<std::uint8_t, 16> nwk_skey{};
  std::array<std::uint8_t, 16> app_skey{};

  bool operator==(const SessionKeys&) const = default;
};

inline SessionKeys keys_from_hex(std::string_view nwk, std::string_view app) {
  Bytes n = hexutil::from_hex(nwk), a = hexutil::from_hex(app);
  if (n.size() != 16 || a.size() != 16) throw Error("session keys must be 16 bytes");
  SessionKeys k;
  std::copy(n.begin(), n.end(), k.nwk_skey.begin());
  std::copy(a.begin(), a.end(), k.app_skey.begin());
  return k;
}

enum class MType {
  JoinRequest = 0,
  JoinAccept = 1,
  UnconfirmedUp = 2,
  UnconfirmedDown = 3,
  ConfirmedUp = 4,
  ConfirmedDown = 5,
  Rfu = 6,
  Proprietary = 7,
};

inline MType mtype(std::uint8_t mhdr) { return MType(mhdr >> 5); }

inline bool is_reserved_mtype(std::uint8_t mhdr) { return mtype(mhdr) == MType::Rfu; }

// Logical uplink frame. frm_payload holds the on-wire (encrypted) bytes.
struct Frame {
  std::uint8_t mhdr = 0x40;  // unconfirmed uplink, LoRaWAN major 1
  std::uint32_t dev_addr = 0;
  std::uint8_t fctrl = 0;  // low nibble mirrors fopts length
  std::uint16_t fcnt = 0;
  Bytes fopts;
  std::optional<std::uint8_t> fport;
  Bytes frm_payload;
  std::array<std::uint8_t, 4> mic{};

  bool operator==(const Frame&) const = default;
};

struct WireFrame {
  Bytes bytes;
  bool crc_ok = true;  // set by the medium after corruption resolution
};

inline constexpr std::size_t kMinWireBytes = 12;  // MHDR + FHDR + MIC, no FPort
// Header + MIC overhead of the common data frame (FPort present, no FOpts).
inline constexpr std::size_t kHeaderOverheadBytes = 13;

namespace detail {

inline void put_u32_le(Bytes& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 24));
}

// A/B blocks share one layout: prefix byte, 4 zero bytes, direction,
// DevAddr, 32-bit frame counter, zero, trailer byte.
inline crypto::Block meta_block(std::uint8_t first, bool uplink, std::uint32_t dev_addr,
                                std::uint32_t fcnt32, std::uint8_t trailer) {
  crypto::Block b{};
  b[0] = first;
  b[5] = uplink ? 0x00 : 0x01;
  b[6] = std::uint8_t(dev_addr);
  b[7] = std::uint8_t(dev_addr >> 8);
  b[8] = std::uint8_t(dev_addr >> 16);
  b[9] = std::uint8_t(dev_addr >> 24);
  b[10] = std::uint8_t(fcnt32);
  b[11] = std::uint8_t(fcnt32 >> 8);
  b[12] = std::uint8_t(fcnt32 >> 16);
  b[13] = std::uint8_t(fcnt32 >> 24);
  b[15] = trailer;
  return b;
}

}  // namespace detail

// Counter-mode keystream XOR; applying it twice restores the input.
inline Bytes keystream_xor(std::span<const std::uint8_t> data,
                           const std::array<std::uint8_t, 16>& key, std::uint32_t dev_addr,
                           std::uint32_t fcnt32, bool uplink) {
  crypto::Aes128 cipher(key);
  Bytes out(data.begin(), data.end());
  for (std::size_t block = 0; block * 16 < out.size(); ++block) {
    crypto::Block a =
        detail::meta_block(0x01, uplink, dev_addr, fcnt32, std::uint8_t(block + 1));
    crypto::Block s = cipher.encrypt(a);
    for (std::size_t i = 0; i < 16 && block * 16 + i < out.size(); ++i)
      out[block * 16 + i] ^= s[i];
  }
  return out;
}

inline std::array<std::uint8_t, 4> compute_mic(std::span<const std::uint8_t> mhdr_to_payload,
                                               const std::array<std::uint8_t, 16>& nwk_skey,
                                               std::uint32_t dev_addr, std::uint32_t fcnt32,
                                               bool uplink) {
  crypto::Block b0 =
      detail::meta_block(0x49, uplink, dev_addr, fcnt32, std::uint8_t(mhdr_to_payload.size()));
  Bytes buf(b0.begin(), b0.end());
  buf.insert(buf.end(), mhdr_to_payload.begin(), mhdr_to_payload.end());
  crypto::Aes128 cipher(nwk_skey);
  crypto::Block mac = crypto::cmac(cipher, buf);
  return {mac[0], mac[1], mac[2], mac[3]};
}

// Serializes the header fields of f, encrypts plaintext into FRMPayload
// (AppSKey for fport > 0, NwkSKey for fport 0), and appends the MIC.
// f's frm_payload and mic members are ignored; use decode to recover them.
inline WireFrame encode(const Frame& f, const SessionKeys& keys,
                        std::span<const std::uint8_t> plaintext) {
  if (f.fopts.size() > 15) throw Error("fopts longer than 15 bytes");
  if (!plaintext.empty() && !f.fport) throw MissingFPort("non-empty payload requires an fport");

  Bytes wire;
  wire.reserve(kMinWireBytes + f.fopts.size() + 1 + plaintext.size());
  wire.push_back(f.mhdr);
  detail::put_u32_le(wire, f.dev_addr);
  wire.push_back(std::uint8_t((f.fctrl & 0xF0) | f.fopts.size()));
  wire.push_back(std::uint8_t(f.fcnt));
  wire.push_back(std::uint8_t(f.fcnt >> 8));
  wire.insert(wire.end(), f.fopts.begin(), f.fopts.end());
  if (f.fport) {
    wire.push_back(*f.fport);
    const auto& key = (*f.fport == 0) ? keys.nwk_skey : keys.app_skey;
    Bytes enc = keystream_xor(plaintext, key, f.dev_addr, f.fcnt, true);
    wire.insert(wire.end(), enc.begin(), enc.end());
  }
  auto mic = compute_mic(wire, keys.nwk_skey, f.dev_addr, f.fcnt, true);
  wire.insert(wire.end(), mic.begin(), mic.end());
  return WireFrame{std::move(wire), true};
}

// Overload that also enforces the data-rate frame-size cap.
inline WireFrame encode(const Frame& f, const SessionKeys& keys,
                        std::span<const std::uint8_t> plaintext, const phy::RadioParams& params) {
  std::size_t wire_len =
      kMinWireBytes + f.fopts.size() + (f.fport ? 1 : 0) + plaintext.size();
  phy::check_payload_len(params, int(wire_len));
  return encode(f, keys, plaintext);
}

// Header fields recoverable from a frame prefix, no keys needed.
struct HeaderPrefix {
  std::uint8_t mhdr = 0;
  std::optional<std::uint32_t> dev_addr;
  std::optional<std::uint8_t> fctrl;
  std::optional<std::uint16_t> fcnt;
  std::optional<std::uint8_t> fport;  // only when the prefix reaches past FOpts
};

inline HeaderPrefix decode_prefix(std::span<const std::uint8_t> prefix) {
  if (prefix.empty()) throw TooShort("prefix is empty");
  HeaderPrefix h;
  h.mhdr = prefix[0];
  if (prefix.size() >= 5)
    h.dev_addr = std::uint32_t(prefix[1]) | std::uint32_t(prefix[2]) << 8 |
                 std::uint32_t(prefix[3]) << 16 | std::uint32_t(prefix[4]) << 24;
  if (prefix.size() >= 6) h.fctrl = prefix[5];
  if (prefix.size() >= 8) h.fcnt = std::uint16_t(prefix[6] | prefix[7] << 8);
  if (h.fctrl) {
    std::size_t fport_pos = 8 + std::size_t(*h.fctrl & 0x0F);
    if (prefix.size() > fport_pos) h.fport = prefix[fport_pos];
  }
  return h;
}

// Full-frame parse. Header fields are always recovered; the payload stays
// opaque (encrypted) and the MIC is carried verbatim. Reserved message
// types parse the same way; callers report them via is_reserved_mtype.
inline Frame decode(std::span<const std::uint8_t> wire) {
  if (wire.size() < kMinWireBytes)
    throw TooShort("wire frame of " + std::to_string(wire.size()) + " bytes (< 12)");
  Frame f;
  f.mhdr = wire[0];
  f.dev_addr = std::uint32_t(wire[1]) | std::uint32_t(wire[2]) << 8 |
               std::uint32_t(wire[3]) << 16 | std::uint32_t(wire[4]) << 24;
  f.fctrl = wire[5];
  f.fcnt = std::uint16_t(wire[6] | wire[7] << 8);
  std::size_t fopts_len = f.fctrl & 0x0F;
  if (wire.size() < kMinWireBytes + fopts_len)
    throw TooShort("frame too short for its fopts length");
  f.fopts.assign(wire.begin() + 8, wire.begin() + 8 + fopts_len);
  std::size_t pos = 8 + fopts_len;
  std::size_t body_end = wire.size() - 4;
  if (pos < body_end) {
    f.fport = wire[pos++];
    f.frm_payload.assign(wire.begin() + std::ptrdiff_t(pos), wire.begin() + std::ptrdiff_t(body_end));
  }
  std::copy(wire.end() - 4, wire.end(), f.mic.begin());
  return f;
}

inline bool verify_mic(std::span<const std::uint8_t> wire, const SessionKeys& keys) {
  if (wire.size() < kMinWireBytes) return false;
  Frame f;
  try {
    f = decode(wire);
  } catch (const TooShort&) {
    return false;
  }
  auto mic = compute_mic(wire.first(wire.size() - 4), keys.nwk_skey, f.dev_addr, f.fcnt, true);
  return std::equal(mic.begin(), mic.end(), wire.end() - 4);
}

inline Bytes decrypt_payload(const Frame& f, const SessionKeys& keys) {
  if (!f.fport) return {};
  const auto& key = (*f.fport == 0) ? keys.nwk_skey : keys.app_skey;
  return keystream_xor(f.frm_payload, key, f.dev_addr, f.fcnt, true);
}

// Hex dump grouped as: type | devaddr | fctrl+fcnt(+fopts) | fport | payload | mic.
inline std::string hexdump(std::span<const std::uint8_t> wire) {
  Frame f = decode(wire);
  auto group = [](std::span<const std::uint8_t> part) {
    static constexpr char kUpper[] = "0123456789ABCDEF";
    std::string s;
    for (std::size_t i = 0; i < part.size(); ++i) {
      if (i) s.push_back(' ');
      s.push_back(kUpper[part[i] >> 4]);
      s.push_back(kUpper[part[i] & 0xF]);
    }
    return s;
  };
  std::size_t fopts_len = f.fopts.size();
  std::string out = group(wire.subspan(0, 1));
  out += " | " + group(wire.subspan(1, 4));
  out += " | " + group(wire.subspan(5, 3 + fopts_len));
  if (f.fport) {
    std::size_t payload_pos = 9 + fopts_len;
    out += " | " + group(wire.subspan(8 + fopts_len, 1));
    out += " | " + group(wire.subspan(payload_pos, wire.size() - 4 - payload_pos));
  } else {
    out += " | - | ";
  }
  out += " | " + group(wire.subspan(wire.size() - 4, 4));
  return out;
}

}  // namespace lorajam::codec
