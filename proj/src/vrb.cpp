#include "fragsim/vrb.hpp"

#include <limits>

namespace fragsim {

std::uint16_t TagRegistry::acquire(NodeId neighbor) {
  auto& live = live_[neighbor];
  if (live.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw VrbError("tag space toward neighbor exhausted");
  }
  std::uint16_t& next = next_[neighbor];
  while (live.contains(next)) {
    ++next;
  }
  const std::uint16_t tag = next++;
  live.insert(tag);
  return tag;
}

void TagRegistry::release(NodeId neighbor, std::uint16_t tag) {
  auto it = live_.find(neighbor);
  if (it != live_.end()) {
    it->second.erase(tag);
  }
}

bool TagRegistry::is_live(NodeId neighbor, std::uint16_t tag) const {
  auto it = live_.find(neighbor);
  return it != live_.end() && it->second.contains(tag);
}

std::size_t TagRegistry::live_count() const {
  std::size_t n = 0;
  for (const auto& [_, tags] : live_) {
    n += tags.size();
  }
  return n;
}

VrbEntry* VirtualReassemblyBuffer::create(const DatagramKey& key, NodeId next_hop, SimTime now) {
  if (auto it = entries_.find(key); it != entries_.end()) {
    if (now <= it->second.deadline) {
      throw VrbError("VRB entry already exists for datagram key");
    }
    tags_.release(it->second.next_hop, it->second.out_tag);
    entries_.erase(it);
  }
  if (entries_.size() >= capacity_) {
    return nullptr;
  }
  VrbEntry e;
  e.key = key;
  e.next_hop = next_hop;
  e.out_tag = tags_.acquire(next_hop);
  e.created_at = now;
  e.deadline = now + lifetime_;
  return &entries_.emplace(key, std::move(e)).first->second;
}

VrbEntry* VirtualReassemblyBuffer::lookup(const DatagramKey& key, SimTime now) {
  auto it = entries_.find(key);
  if (it == entries_.end() || now > it->second.deadline) {
    return nullptr;
  }
  return &it->second;
}

std::vector<VrbEntry> VirtualReassemblyBuffer::expire(SimTime now) {
  std::vector<VrbEntry> out;
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (now > it->second.deadline) {
      tags_.release(it->second.next_hop, it->second.out_tag);
      out.push_back(std::move(it->second));
      it = entries_.erase(it);
    } else {
      ++it;
    }
  }
  return out;
}

}  // namespace fragsim
