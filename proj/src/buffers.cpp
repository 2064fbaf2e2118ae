#include "fragsim/buffers.hpp"

#include <algorithm>
#include <iterator>

namespace fragsim {

// --- ArenaLease / PacketArena ----------------------------------------------

ArenaLease::ArenaLease(ArenaLease&& other) noexcept
    : arena_(std::exchange(other.arena_, nullptr)), bytes_(std::exchange(other.bytes_, 0)) {}

ArenaLease& ArenaLease::operator=(ArenaLease&& other) noexcept {
  if (this != &other) {
    reset();
    arena_ = std::exchange(other.arena_, nullptr);
    bytes_ = std::exchange(other.bytes_, 0);
  }
  return *this;
}

ArenaLease::~ArenaLease() { reset(); }

bool ArenaLease::grow(std::size_t extra) {
  if (extra == 0) {
    return true;
  }
  if (arena_ == nullptr || !arena_->take(extra)) {
    return false;
  }
  bytes_ += extra;
  return true;
}

void ArenaLease::reset() {
  if (arena_ != nullptr) {
    arena_->give_back(bytes_);
  }
  arena_ = nullptr;
  bytes_ = 0;
}

bool PacketArena::take(std::size_t bytes) {
  if (bytes > capacity_ - used_) {
    ++failures_;
    return false;
  }
  used_ += bytes;
  high_water_ = std::max(high_water_, used_);
  return true;
}

std::optional<ArenaLease> PacketArena::allocate(std::size_t bytes) {
  if (!take(bytes)) {
    return std::nullopt;
  }
  return ArenaLease(this, bytes);
}

std::size_t mem_usage(const MemoryModel& model, std::size_t entries, std::size_t arena_used) {
  const std::size_t static_bytes = entries * model.entry_cost();
  return model.mode == MemoryMode::naive ? static_bytes : static_bytes + arena_used;
}

// --- ReassemblyBuffer -------------------------------------------------------

namespace {

// Bytes of [begin, end) not covered by the disjoint interval map.
std::size_t uncovered(const std::map<std::size_t, std::size_t>& intervals, std::size_t begin,
                      std::size_t end) {
  std::size_t missing = end - begin;
  auto it = intervals.upper_bound(begin);
  if (it != intervals.begin()) {
    --it;
  }
  for (; it != intervals.end() && it->first < end; ++it) {
    const std::size_t lo = std::max(begin, it->first);
    const std::size_t hi = std::min(end, it->second);
    if (hi > lo) {
      missing -= hi - lo;
    }
  }
  return missing;
}

}  // namespace

ReassemblyBuffer::ReassemblyBuffer(std::size_t capacity, SimTime timeout, PacketArena& arena)
    : capacity_(capacity), timeout_(timeout), arena_(arena) {}

ExpiredEntry ReassemblyBuffer::describe(const DatagramKey& key, const Entry& e) {
  ExpiredEntry out{key, e.first_seen, {}, e.created_at};
  for (const auto& p : e.provenance) {
    if (std::find(out.datagrams.begin(), out.datagrams.end(), p.datagram) == out.datagrams.end()) {
      out.datagrams.push_back(p.datagram);
    }
  }
  return out;
}

std::size_t ReassemblyBuffer::write(Entry& e, std::size_t offset,
                                    std::span<const std::uint8_t> bytes) {
  const std::size_t begin = offset;
  const std::size_t end = offset + bytes.size();
  if (begin == end) {
    return 0;
  }
  // First writer wins: copy only gaps between existing intervals.
  std::size_t cursor = begin;
  std::size_t fresh = 0;
  auto copy_gap = [&](std::size_t lo, std::size_t hi) {
    if (hi > lo) {
      std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(lo - begin),
                bytes.begin() + static_cast<std::ptrdiff_t>(hi - begin),
                e.data.begin() + static_cast<std::ptrdiff_t>(lo));
      fresh += hi - lo;
    }
  };
  auto it = e.intervals.upper_bound(begin);
  if (it != e.intervals.begin()) {
    --it;
  }
  for (; it != e.intervals.end() && it->first < end; ++it) {
    if (it->second <= cursor) {
      continue;
    }
    copy_gap(cursor, std::min(end, it->first));
    cursor = std::max(cursor, it->second);
  }
  copy_gap(cursor, end);
  duplicate_bytes_ += bytes.size() - fresh;

  // Merge [begin, end) into the interval set.
  std::size_t lo = begin;
  std::size_t hi = end;
  it = e.intervals.upper_bound(lo);
  if (it != e.intervals.begin() && std::prev(it)->second >= lo) {
    --it;
  }
  while (it != e.intervals.end() && it->first <= hi) {
    lo = std::min(lo, it->first);
    hi = std::max(hi, it->second);
    it = e.intervals.erase(it);
  }
  e.intervals.emplace(lo, hi);
  e.covered += fresh;
  return fresh;
}

RbufInsert ReassemblyBuffer::insert(const DatagramKey& key, std::size_t offset,
                                    std::span<const std::uint8_t> elided,
                                    std::span<const std::uint8_t> payload,
                                    const Provenance& provenance, SimTime now) {
  RbufInsert out{RbufAccepted{}, {}};
  const std::size_t size = key.datagram_size;
  const std::size_t length = elided.size() + payload.size();
  const std::size_t end = offset + length;

  auto found = entries_.find(key);
  if (found != entries_.end() && now > found->second.deadline) {
    // Completion wins over a coinciding timeout.
    const bool completes = end <= size && found->second.covered +
                                                  uncovered(found->second.intervals, offset, end) ==
                                              size;
    if (!completes) {
      out.expired.push_back(describe(found->first, found->second));
      entries_.erase(found);
      found = entries_.end();
    }
  }
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (it != found && now > it->second.deadline) {
      out.expired.push_back(describe(it->first, it->second));
      it = entries_.erase(it);
    } else {
      ++it;
    }
  }

  if (end > size) {
    out.result = RbufDropped{RbufDropReason::out_of_range};
    return out;
  }

  bool created = false;
  if (found == entries_.end()) {
    if (entries_.size() >= capacity_) {
      out.result = RbufDropped{RbufDropReason::rbuf_full};
      return out;
    }
    Entry e;
    e.data.assign(size, 0);
    e.created_at = now;
    e.deadline = now + timeout_;
    auto lease = arena_.allocate(0);
    e.lease = std::move(*lease);
    found = entries_.emplace(key, std::move(e)).first;
    created = true;
  }

  Entry& e = found->second;
  // Packet-buffer space grows with the bytes actually held.
  if (!e.lease.grow(uncovered(e.intervals, offset, end))) {
    if (created) {
      entries_.erase(found);
    }
    out.result = RbufDropped{RbufDropReason::pktbuf_full};
    return out;
  }
  write(e, offset, elided);
  write(e, offset + elided.size(), payload);
  if (offset == 0) {
    e.first_seen = true;
  }
  e.provenance.push_back(provenance);

  if (e.covered == size) {
    RbufCompleted done;
    done.datagram = std::move(e.data);
    done.created_at = e.created_at;
    const Provenance& first = e.provenance.front();
    done.provenance = first;
    for (const auto& p : e.provenance) {
      if (p.path != first.path || p.datagram != first.datagram) {
        done.path_consistent = false;
      }
    }
    entries_.erase(found);
    out.result = std::move(done);
  }
  return out;
}

std::vector<ExpiredEntry> ReassemblyBuffer::gc(SimTime now) {
  std::vector<ExpiredEntry> expired;
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (now > it->second.deadline) {
      expired.push_back(describe(it->first, it->second));
      it = entries_.erase(it);
    } else {
      ++it;
    }
  }
  return expired;
}

// --- FragmentationBuffer ----------------------------------------------------

std::optional<FragmentationBuffer::SlotId> FragmentationBuffer::acquire(
    DatagramId datagram, std::uint16_t original_size, NodeId next_hop, std::uint16_t out_tag,
    std::size_t fragments, ArenaLease lease) {
  for (SlotId i = 0; i < slots_.size(); ++i) {
    if (!slots_[i]) {
      slots_[i] = Slot{datagram, original_size, next_hop, out_tag, fragments, std::move(lease)};
      return i;
    }
  }
  return std::nullopt;
}

bool FragmentationBuffer::fragment_done(SlotId id) {
  auto& slot = slots_.at(id);
  if (!slot) {
    return false;
  }
  if (--slot->fragments_pending == 0) {
    slot.reset();
    return true;
  }
  return false;
}

std::size_t FragmentationBuffer::in_use() const {
  return static_cast<std::size_t>(
      std::count_if(slots_.begin(), slots_.end(), [](const auto& s) { return s.has_value(); }));
}

}  // namespace fragsim
