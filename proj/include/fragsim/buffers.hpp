#pragma once

// Reassembly buffer, shared packet arena and fragmentation buffer.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "fragsim/types.hpp"

namespace fragsim {

/// Identity of a datagram on one link: (L2 src, L2 dst, size, tag).
struct DatagramKey {
  L2Address l2_src;
  L2Address l2_dst;
  std::uint16_t datagram_size = 0;
  std::uint16_t datagram_tag = 0;
  auto operator<=>(const DatagramKey&) const = default;
};

/// Trace annotation that rides alongside fragment bytes: which end-to-end
/// datagram the bytes belong to and which nodes they have traversed.
struct Provenance {
  DatagramId datagram = 0;
  std::vector<NodeId> path;
  bool operator==(const Provenance&) const = default;
};

// ---------------------------------------------------------------------------
// Memory accounting

enum class MemoryMode { naive, arena };

struct MemoryModel {
  /// 8+1 bytes per address (x2), 2 size, 2 tag, 1280 data.
  static constexpr std::size_t kNaiveEntryBytes = 2 * (8 + 1) + 2 + 2 + 1280;
  static constexpr std::size_t kArenaEntryBytes = 22;
  static constexpr std::size_t kDefaultArenaCapacity = 6144;

  MemoryMode mode = MemoryMode::arena;
  std::size_t arena_capacity = kDefaultArenaCapacity;

  std::size_t entry_cost() const {
    return mode == MemoryMode::naive ? kNaiveEntryBytes : kArenaEntryBytes;
  }
};

class PacketArena;

/// Move-only claim on arena bytes; returns them on destruction.
class ArenaLease {
 public:
  ArenaLease() = default;
  ArenaLease(ArenaLease&& other) noexcept;
  ArenaLease& operator=(ArenaLease&& other) noexcept;
  ArenaLease(const ArenaLease&) = delete;
  ArenaLease& operator=(const ArenaLease&) = delete;
  ~ArenaLease();

  std::size_t bytes() const { return bytes_; }
  /// Grows the lease in place; false (unchanged) when the arena is exhausted.
  bool grow(std::size_t extra);
  void reset();

 private:
  friend class PacketArena;
  ArenaLease(PacketArena* arena, std::size_t bytes) : arena_(arena), bytes_(bytes) {}
  PacketArena* arena_ = nullptr;
  std::size_t bytes_ = 0;
};

/// Shared packet buffer with a fixed byte capacity and a high-water mark.
class PacketArena {
 public:
  explicit PacketArena(std::size_t capacity) : capacity_(capacity) {}
  PacketArena(const PacketArena&) = delete;
  PacketArena& operator=(const PacketArena&) = delete;

  std::optional<ArenaLease> allocate(std::size_t bytes);

  std::size_t capacity() const { return capacity_; }
  std::size_t used() const { return used_; }
  std::size_t high_water() const { return high_water_; }
  std::size_t failed_allocations() const { return failures_; }

 private:
  friend class ArenaLease;
  bool take(std::size_t bytes);
  void give_back(std::size_t bytes) { used_ -= bytes; }

  std::size_t capacity_;
  std::size_t used_ = 0;
  std::size_t high_water_ = 0;
  std::size_t failures_ = 0;
};

/// Static entry cost plus current arena occupancy (arena mode) or entry
/// count times the full naive entry size (naive mode).
std::size_t mem_usage(const MemoryModel& model, std::size_t entries, std::size_t arena_used);

// ---------------------------------------------------------------------------
// Reassembly buffer

enum class RbufDropReason { rbuf_full, pktbuf_full, out_of_range };

struct RbufAccepted {};
struct RbufCompleted {
  std::vector<std::uint8_t> datagram;
  /// Annotation of the first fragment; datagram ids of all others agree.
  Provenance provenance;
  /// All contributing fragments traversed the same node sequence.
  bool path_consistent = true;
  SimTime created_at{};
};
struct RbufDropped {
  RbufDropReason reason;
};
using RbufResult = std::variant<RbufAccepted, RbufCompleted, RbufDropped>;

struct ExpiredEntry {
  DatagramKey key;
  bool first_fragment_seen = false;
  std::vector<DatagramId> datagrams;
  SimTime created_at{};
};

struct RbufInsert {
  RbufResult result;
  /// Entries evicted lazily during this insert (timed out).
  std::vector<ExpiredEntry> expired;
};

class ReassemblyBuffer {
 public:
  ReassemblyBuffer(std::size_t capacity, SimTime timeout, PacketArena& arena);

  /// Stores `payload` at uncompressed `offset`. `elided` is the decompressed
  /// header carried by a first fragment; it is written at offset 0 and the
  /// payload follows it.
  RbufInsert insert(const DatagramKey& key, std::size_t offset,
                    std::span<const std::uint8_t> elided, std::span<const std::uint8_t> payload,
                    const Provenance& provenance, SimTime now);

  /// Removes every entry with now > deadline.
  std::vector<ExpiredEntry> gc(SimTime now);

  bool contains(const DatagramKey& key) const { return entries_.contains(key); }
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t duplicate_bytes() const { return duplicate_bytes_; }

 private:
  struct Entry {
    std::vector<std::uint8_t> data;
    std::map<std::size_t, std::size_t> intervals;  // start -> end, disjoint
    std::size_t covered = 0;
    bool first_seen = false;
    SimTime created_at{};
    SimTime deadline{};
    ArenaLease lease;
    std::vector<Provenance> provenance;
  };

  // Writes the uncovered parts of [offset, offset+bytes.size()); returns
  // the number of bytes newly covered.
  std::size_t write(Entry& e, std::size_t offset, std::span<const std::uint8_t> bytes);
  static ExpiredEntry describe(const DatagramKey& key, const Entry& e);

  std::size_t capacity_;
  SimTime timeout_;
  PacketArena& arena_;
  std::map<DatagramKey, Entry> entries_;
  std::size_t duplicate_bytes_ = 0;
};

// ---------------------------------------------------------------------------
// Fragmentation buffer

/// Slots for datagrams whose fragments are still being handed to the MAC.
class FragmentationBuffer {
 public:
  struct Slot {
    DatagramId datagram = 0;
    std::uint16_t original_size = 0;
    NodeId next_hop = kNoNode;
    std::uint16_t out_tag = 0;
    std::size_t fragments_pending = 0;
    ArenaLease lease;
  };
  using SlotId = std::size_t;

  explicit FragmentationBuffer(std::size_t capacity) : slots_(capacity) {}

  std::optional<SlotId> acquire(DatagramId datagram, std::uint16_t original_size, NodeId next_hop,
                                std::uint16_t out_tag, std::size_t fragments, ArenaLease lease);
  /// Marks one fragment handed off; frees the slot after the last. Returns
  /// true when the slot was freed.
  bool fragment_done(SlotId id);

  const Slot& slot(SlotId id) const { return *slots_.at(id); }
  std::size_t in_use() const;
  std::size_t capacity() const { return slots_.size(); }

 private:
  std::vector<std::optional<Slot>> slots_;
};

}  // namespace fragsim
