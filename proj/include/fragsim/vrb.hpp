#pragma once

// Virtual reassembly buffer: incoming datagram identity -> (next hop, outgoing tag).

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "fragsim/buffers.hpp"
#include "fragsim/frag_codec.hpp"

namespace fragsim {

/// Outgoing datagram tags per (node, neighbor). Hands out a 16-bit counter
/// value that is not held by any live stream toward the same neighbor.
class TagRegistry {
 public:
  std::uint16_t acquire(NodeId neighbor);
  void release(NodeId neighbor, std::uint16_t tag);
  bool is_live(NodeId neighbor, std::uint16_t tag) const;
  std::size_t live_count() const;

 private:
  std::map<NodeId, std::uint16_t> next_;
  std::map<NodeId, std::set<std::uint16_t>> live_;
};

/// Fragment held back by the FF-queued variant, with its packet-buffer claim.
struct QueuedFragment {
  frag::Fragment fragment;
  Provenance provenance;
  ArenaLease lease;
};

struct VrbEntry {
  DatagramKey key;
  NodeId next_hop = kNoNode;
  std::uint16_t out_tag = 0;
  SimTime created_at{};
  SimTime deadline{};
  /// Uncompressed bytes that passed the forwarding engine so far.
  std::size_t bytes_seen = 0;
  std::vector<QueuedFragment> queued;
};

class VrbError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class VirtualReassemblyBuffer {
 public:
  VirtualReassemblyBuffer(std::size_t capacity, SimTime lifetime, TagRegistry& tags)
      : capacity_(capacity), lifetime_(lifetime), tags_(tags) {}

  /// nullptr when the table is full. Throws VrbError if `key` is live.
  VrbEntry* create(const DatagramKey& key, NodeId next_hop, SimTime now);

  /// Live entry for `key`, or nullptr (miss). An entry past its deadline is
  /// a miss even before vrb_expire runs.
  VrbEntry* lookup(const DatagramKey& key, SimTime now);

  /// Removes entries with now > deadline and returns them (queued fragments
  /// included, for the caller to account).
  std::vector<VrbEntry> expire(SimTime now);

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  SimTime lifetime_;
  TagRegistry& tags_;
  std::map<DatagramKey, VrbEntry> entries_;
};

}  // namespace fragsim
