#pragma once

#include <array>
#include <chrono>
#include <compare>
#include <cstdint>
#include <functional>

namespace fragsim {

/// Simulation clock. Integer microseconds, never wall time.
using SimTime = std::chrono::microseconds;

using NodeId = std::uint16_t;

inline constexpr NodeId kNoNode = 0xFFFF;

/// Link-layer address: up to 8 bytes plus a length byte (EUI-64 or 16-bit short).
struct L2Address {
  std::array<std::uint8_t, 8> bytes{};
  std::uint8_t length = 8;

  /// EUI-64 derived from a node id (02:00:00:00:00:00:hi:lo).
  static L2Address from_node(NodeId id) {
    L2Address a;
    a.bytes = {0x02, 0, 0, 0, 0, 0, static_cast<std::uint8_t>(id >> 8),
               static_cast<std::uint8_t>(id & 0xFF)};
    return a;
  }

  NodeId node() const {
    return static_cast<NodeId>((bytes[6] << 8) | bytes[7]);
  }

  auto operator<=>(const L2Address&) const = default;
};

/// End-to-end datagram identity (source node, per-source sequence number).
/// Simulation metadata only; never part of a frame on the wire.
using DatagramId = std::uint64_t;

inline constexpr DatagramId make_datagram_id(NodeId source, std::uint32_t seq) {
  return (static_cast<DatagramId>(source) << 32) | seq;
}
inline constexpr NodeId datagram_source(DatagramId id) {
  return static_cast<NodeId>(id >> 32);
}

}  // namespace fragsim
