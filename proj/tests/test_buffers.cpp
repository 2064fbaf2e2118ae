#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "fragsim/buffers.hpp"
#include "fragsim/rng.hpp"
#include "fragsim/sim_core.hpp"
#include "fragsim/vrb.hpp"

using namespace fragsim;

namespace {

DatagramKey key(NodeId src, std::uint16_t size, std::uint16_t tag) {
  return {L2Address::from_node(src), L2Address::from_node(0), size, tag};
}

std::vector<std::uint8_t> bytes(std::size_t n, std::uint8_t seed) {
  std::vector<std::uint8_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::uint8_t>(seed + i * 31);
  return v;
}

std::span<const std::uint8_t> part(const std::vector<std::uint8_t>& v, std::size_t from,
                                   std::size_t to) {
  return std::span<const std::uint8_t>(v).subspan(from, to - from);
}

}  // namespace

TEST_CASE("memory model costs") {
  // Two link-layer addresses with length bytes, size, tag, IPv6 MTU.
  constexpr std::size_t naive_entry = (8 + 1) + (8 + 1) + 2 + 2 + 1280;
  MemoryModel naive{MemoryMode::naive};
  MemoryModel arena{MemoryMode::arena};
  CHECK(naive.entry_cost() == naive_entry);
  CHECK(mem_usage(naive, 16, 0) == 20832);
  CHECK(mem_usage(arena, 16, 0) == 16 * 22);
  CHECK(mem_usage(arena, 1, 1280) == 22 + 1280);
  CHECK(mem_usage(naive, 0, 0) == 0);
  CHECK(mem_usage(arena, 0, 0) == 0);
}

TEST_CASE("arena leases stay within capacity and return to zero") {
  Rng rng(3);
  PacketArena arena(6144);
  std::vector<ArenaLease> held;
  for (int i = 0; i < 5000; ++i) {
    if (!held.empty() && rng.bernoulli(0.45)) {
      const auto k = rng.below(held.size());
      held.erase(held.begin() + static_cast<std::ptrdiff_t>(k));
    } else if (!held.empty() && rng.bernoulli(0.2)) {
      held[rng.below(held.size())].grow(rng.below(300));
    } else if (auto l = arena.allocate(rng.below(1300))) {
      held.push_back(std::move(*l));
    }
    const std::size_t sum = std::accumulate(held.begin(), held.end(), std::size_t{0},
                                            [](std::size_t s, const ArenaLease& l) {
                                              return s + l.bytes();
                                            });
    REQUIRE(arena.used() == sum);
    REQUIRE(arena.used() <= arena.capacity());
    REQUIRE(arena.high_water() >= arena.used());
  }
  held.clear();
  CHECK(arena.used() == 0);
  CHECK(arena.failed_allocations() > 0);
  CHECK(arena.high_water() <= 6144);
}

TEST_CASE("arena refuses allocations past capacity") {
  PacketArena arena(100);
  auto a = arena.allocate(60);
  REQUIRE(a);
  CHECK_FALSE(arena.allocate(41));
  auto b = arena.allocate(40);
  REQUIRE(b);
  CHECK_FALSE(b->grow(1));
  CHECK(b->bytes() == 40);
  a->reset();
  CHECK(arena.used() == 40);
  CHECK(b->grow(60));
  CHECK(arena.used() == 100);
}

TEST_CASE("reassembly buffer completes, fills and times out") {
  PacketArena arena(6144);
  ReassemblyBuffer rb(1, 10s, arena);
  const auto data = bytes(80, 1);
  const auto k = key(5, 80, 9);

  auto r1 = rb.insert(k, 0, {}, part(data, 0, 40), {}, 0s);
  CHECK(std::holds_alternative<RbufAccepted>(r1.result));
  CHECK(arena.used() == 40);

  auto other = rb.insert(key(6, 80, 9), 0, {}, part(data, 0, 8), {}, 1s);
  REQUIRE(std::holds_alternative<RbufDropped>(other.result));
  CHECK(std::get<RbufDropped>(other.result).reason == RbufDropReason::rbuf_full);

  auto r2 = rb.insert(k, 40, {}, part(data, 40, 80), {}, 2s);
  REQUIRE(std::holds_alternative<RbufCompleted>(r2.result));
  CHECK(std::get<RbufCompleted>(r2.result).datagram == data);
  CHECK(rb.size() == 0);
  CHECK(arena.used() == 0);
}

TEST_CASE("reassembly entry expires strictly after its deadline") {
  PacketArena arena(6144);
  ReassemblyBuffer rb(4, 10s, arena);
  const auto data = bytes(200, 2);
  rb.insert(key(1, 200, 1), 0, {}, part(data, 0, 96), {}, 1s);
  CHECK(rb.gc(11s).empty());
  const auto gone = rb.gc(11s + 1us);
  REQUIRE(gone.size() == 1);
  CHECK(gone[0].first_fragment_seen);
  CHECK(rb.size() == 0);
  CHECK(arena.used() == 0);
}

TEST_CASE("expiry flags a missing first fragment") {
  PacketArena arena(6144);
  ReassemblyBuffer rb(2, 10s, arena);
  const auto data = bytes(272, 4);
  // Three-fragment transfer with FRAG1 lost on the link.
  rb.insert(key(3, 272, 5), 96, {}, part(data, 96, 192), {}, 0s);
  rb.insert(key(3, 272, 5), 192, {}, part(data, 192, 272), {}, 0s);
  const auto gone = rb.gc(20s);
  REQUIRE(gone.size() == 1);
  CHECK_FALSE(gone[0].first_fragment_seen);
}

TEST_CASE("completion wins over a coinciding timeout") {
  PacketArena arena(6144);
  ReassemblyBuffer rb(1, 10s, arena);
  const auto data = bytes(64, 8);
  rb.insert(key(1, 64, 1), 0, {}, part(data, 0, 32), {}, 0s);
  const auto r = rb.insert(key(1, 64, 1), 32, {}, part(data, 32, 64), {}, 30s);
  CHECK(std::holds_alternative<RbufCompleted>(r.result));
  CHECK(r.expired.empty());
}

TEST_CASE("reassembly of shuffled, duplicated fragments reproduces the datagram") {
  Rng rng(17);
  for (int round = 0; round < 300; ++round) {
    PacketArena arena(6144);
    ReassemblyBuffer rb(1, 10s, arena);
    const std::size_t size = static_cast<std::size_t>(rng.between(9, 1280));
    const auto data = bytes(size, static_cast<std::uint8_t>(round));
    const std::size_t elided = std::min<std::size_t>(48, size);
    std::vector<std::pair<std::size_t, std::size_t>> pieces;
    for (std::size_t off = elided; off < size;) {
      const std::size_t len = std::min<std::size_t>(size - off, 8 * rng.between(1, 12));
      pieces.push_back({off, off + len});
      off += len;
    }
    const std::size_t dupes = rng.below(4);
    for (std::size_t i = 0; i < dupes && !pieces.empty(); ++i) {
      pieces.push_back(pieces[rng.below(pieces.size())]);
    }
    pieces.push_back({0, 0});  // first fragment: elided header only
    for (std::size_t i = pieces.size(); i > 1; --i) {
      std::swap(pieces[i - 1], pieces[rng.below(i)]);
    }
    std::optional<std::vector<std::uint8_t>> done;
    for (auto [from, to] : pieces) {
      const auto r = from == 0 && to == 0
                         ? rb.insert(key(1, static_cast<std::uint16_t>(size), 3), 0,
                                     part(data, 0, elided), {}, {}, 0s)
                         : rb.insert(key(1, static_cast<std::uint16_t>(size), 3), from, {},
                                     part(data, from, to), {}, 0s);
      REQUIRE_FALSE(std::holds_alternative<RbufDropped>(r.result));
      if (const auto* c = std::get_if<RbufCompleted>(&r.result)) {
        REQUIRE_FALSE(done);
        done = c->datagram;
        break;
      }
    }
    REQUIRE(done);
    CHECK(*done == data);
    CHECK(arena.used() == 0);
  }
}

TEST_CASE("fragment past the datagram end is rejected") {
  PacketArena arena(6144);
  ReassemblyBuffer rb(1, 10s, arena);
  const auto data = bytes(64, 0);
  const auto r = rb.insert(key(1, 40, 1), 32, {}, part(data, 0, 16), {}, 0s);
  REQUIRE(std::holds_alternative<RbufDropped>(r.result));
  CHECK(std::get<RbufDropped>(r.result).reason == RbufDropReason::out_of_range);
}

TEST_CASE("reassembly buffer reports packet buffer exhaustion") {
  PacketArena arena(100);
  ReassemblyBuffer rb(4, 10s, arena);
  const auto data = bytes(200, 0);
  const auto r = rb.insert(key(1, 200, 1), 0, {}, part(data, 0, 120), {}, 0s);
  REQUIRE(std::holds_alternative<RbufDropped>(r.result));
  CHECK(std::get<RbufDropped>(r.result).reason == RbufDropReason::pktbuf_full);
  CHECK(rb.size() == 0);
}

TEST_CASE("fragmentation buffer slots") {
  PacketArena arena(6144);
  FragmentationBuffer fb(2);
  auto a = fb.acquire(1, 100, 3, 0, 2, *arena.allocate(100));
  auto b = fb.acquire(2, 100, 3, 1, 1, *arena.allocate(100));
  REQUIRE(a);
  REQUIRE(b);
  CHECK_FALSE(fb.acquire(3, 100, 3, 2, 1, *arena.allocate(10)));
  CHECK(fb.in_use() == 2);
  CHECK_FALSE(fb.fragment_done(*a));
  CHECK(fb.fragment_done(*a));
  CHECK(fb.fragment_done(*b));
  CHECK(fb.in_use() == 0);
  CHECK(arena.used() == 0);
}

TEST_CASE("tags toward one neighbor are unique while live") {
  TagRegistry tags;
  Rng rng(8);
  std::vector<std::pair<NodeId, std::uint16_t>> live;
  for (int i = 0; i < 20000; ++i) {
    if (!live.empty() && rng.bernoulli(0.5)) {
      const auto k = rng.below(live.size());
      tags.release(live[k].first, live[k].second);
      live.erase(live.begin() + static_cast<std::ptrdiff_t>(k));
    } else {
      const auto n = static_cast<NodeId>(rng.below(3));
      const auto t = tags.acquire(n);
      for (const auto& [m, u] : live) {
        REQUIRE_FALSE((m == n && u == t));
      }
      live.push_back({n, t});
    }
    REQUIRE(tags.live_count() == live.size());
  }
}

TEST_CASE("VRB holds sixteen entries") {
  TagRegistry tags;
  VirtualReassemblyBuffer vrb(16, 10s, tags);
  for (std::uint16_t i = 0; i < 16; ++i) {
    REQUIRE(vrb.create(key(1, 300, i), 2, 0s) != nullptr);
  }
  CHECK(vrb.create(key(1, 300, 16), 2, 0s) == nullptr);
  CHECK(vrb.size() == 16);
  CHECK_THROWS_AS(vrb.create(key(1, 300, 3), 2, 1s), VrbError);
}

TEST_CASE("VRB entries expire strictly after their lifetime") {
  TagRegistry tags;
  VirtualReassemblyBuffer vrb(4, 10s, tags);
  auto* e = vrb.create(key(1, 300, 7), 2, 5s);
  REQUIRE(e);
  const auto out_tag = e->out_tag;
  CHECK(tags.is_live(2, out_tag));
  CHECK(vrb.lookup(key(1, 300, 7), 15s) != nullptr);
  CHECK(vrb.expire(15s).empty());
  CHECK(vrb.lookup(key(1, 300, 7), 15s + 1us) == nullptr);
  const auto gone = vrb.expire(15s + 1us);
  REQUIRE(gone.size() == 1);
  CHECK_FALSE(tags.is_live(2, out_tag));
  CHECK(vrb.size() == 0);
}

TEST_CASE("VRB lookup misses unknown keys") {
  TagRegistry tags;
  VirtualReassemblyBuffer vrb(4, 10s, tags);
  vrb.create(key(1, 300, 7), 2, 0s);
  CHECK(vrb.lookup(key(1, 300, 8), 0s) == nullptr);
  CHECK(vrb.lookup(key(4, 300, 7), 0s) == nullptr);
  CHECK(vrb.lookup(key(1, 301, 7), 0s) == nullptr);
}
