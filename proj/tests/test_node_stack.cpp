#include <doctest.h>

#include <numeric>
#include <vector>

#include "fragsim/harness.hpp"
#include "fragsim/node_stack.hpp"

using namespace fragsim;

namespace {

// Nodes 0..n-1 on a line, node 0 the sink, each node routing to id - 1.
NetworkSpec line(std::size_t n, Strategy st, double pdr, std::uint64_t seed) {
  NetworkSpec spec;
  spec.seed = seed;
  spec.mac.max_retransmissions = 1000;
  spec.stack.arena_bytes = std::size_t{1} << 20;
  spec.mac.queue_capacity = 4096;
  for (std::size_t i = 0; i < n; ++i) {
    NodeConfig c;
    c.id = static_cast<NodeId>(i);
    c.strategy = st;
    c.hop_distance = static_cast<unsigned>(i);
    c.next_hop = i == 0 ? kNoNode : static_cast<NodeId>(i - 1);
    c.role = i == 0 ? Role::sink : (i + 1 == n ? Role::source : Role::forwarder);
    c.rbuf_entries = i == 0 ? 16 : 1;
    spec.nodes.push_back(c);
    if (i > 0) {
      spec.links.push_back({static_cast<NodeId>(i - 1), static_cast<NodeId>(i), pdr, true});
    }
  }
  return spec;
}

void send_from(Network& net, NodeId src, std::size_t payload, int count, SimTime gap,
               SimTime start = 0s) {
  for (int i = 0; i < count; ++i) {
    net.sim().at(start + gap * i, [&net, src, payload] { net.node(src).app_send(payload); });
  }
}

std::uint64_t lost(const RunMetrics& m) {
  std::uint64_t n = 0;
  for (const auto& [_, c] : m.losses) n += c;
  return n;
}

// Random tree over `n` nodes: parent of i drawn from [0, i); extra links
// between random pairs so that interference is possible.
NetworkSpec random_tree(Rng& rng, std::size_t n, Strategy st) {
  NetworkSpec spec;
  spec.seed = rng.next();
  std::vector<unsigned> hops(n, 0);
  std::vector<std::vector<bool>> linked(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    NodeConfig c;
    c.id = static_cast<NodeId>(i);
    c.strategy = st;
    if (i > 0) {
      const auto parent = static_cast<NodeId>(rng.below(i));
      c.next_hop = parent;
      hops[i] = hops[parent] + 1;
      spec.links.push_back({parent, c.id, 0.7 + 0.3 * rng.unit(), true});
      linked[parent][i] = linked[i][parent] = true;
    }
    c.hop_distance = hops[i];
    c.role = i == 0 ? Role::sink : Role::source;
    c.rbuf_entries = i == 0 ? 16 : 1 + rng.below(2);
    c.vrb_entries = 1 + rng.below(16);
    spec.nodes.push_back(c);
  }
  for (std::size_t k = 0; k < n; ++k) {
    const auto a = static_cast<NodeId>(rng.below(n));
    const auto b = static_cast<NodeId>(rng.below(n));
    if (a != b && !linked[a][b]) {
      spec.links.push_back({std::min(a, b), std::max(a, b), rng.unit(), true});
      linked[a][b] = linked[b][a] = true;
    }
  }
  spec.stack.arena_bytes = 1500 + rng.below(6000);
  spec.mac.queue_capacity = 4 + rng.below(60);
  spec.stack.compression_growth = rng.below(3);
  return spec;
}

}  // namespace

TEST_CASE("lossless line delivers everything under every strategy") {
  for (Strategy st : {Strategy::hwr, Strategy::ff, Strategy::ff_queued}) {
    for (std::size_t payload : kTable1Payloads) {
      Network net(line(4, st, 1.0, 3));
      send_from(net, 3, payload, 5, 2s);
      net.run();
      const RunMetrics m = net.collect();
      CAPTURE(to_string(st));
      CAPTURE(payload);
      CHECK(m.sent == 5);
      CHECK(m.delivered == 5);
      CHECK(m.invariants.total() == 0);
    }
  }
}

TEST_CASE("queued fragment forwarding keeps the hop-wise datagram order") {
  for (std::size_t payload : {80u, 176u, 272u, 368u}) {
    std::vector<std::vector<DatagramId>> orders[2];
    int k = 0;
    for (Strategy st : {Strategy::hwr, Strategy::ff_queued}) {
      Network net(line(3, st, 1.0, 21));
      // Back to back, so datagrams pipeline through the forwarder.
      send_from(net, 2, payload, 20, 10ms);
      net.run();
      const RunMetrics m = net.collect();
      CHECK(m.delivered == m.sent);
      for (NodeId id = 0; id < 3; ++id) {
        orders[k].push_back(net.node(id).transmit_order());
      }
      ++k;
    }
    CAPTURE(payload);
    CHECK(orders[0] == orders[1]);
    CHECK(orders[0][1].size() == 20);
  }
}

TEST_CASE("in-order fragment forwarding never touches the forwarder's reassembly buffer") {
  for (std::size_t payload : {176u, 656u, 1232u}) {
    Network net(line(4, Strategy::ff, 1.0, 8));
    send_from(net, 3, payload, 10, 3s);
    net.run();
    const RunMetrics m = net.collect();
    CHECK(m.delivered == 10);
    for (NodeId id : {NodeId{1}, NodeId{2}}) {
      const NodeStats& s = m.nodes.at(id);
      CHECK(s.rbuf_high_water == 0);
      CHECK(s.fallback_fragments == 0);
      CHECK(s.forwarded_fragments ==
            10 * fragment_count(payload, FrameModel{}, frag::FragPolicy::minimal_first));
    }
  }
}

TEST_CASE("hop-wise reassembly occupies one entry per hop") {
  Network net(line(3, Strategy::hwr, 1.0, 8));
  send_from(net, 2, 272, 3, 3s);
  net.run();
  const RunMetrics m = net.collect();
  CHECK(m.delivered == 3);
  CHECK(m.nodes.at(1).rbuf_high_water == 1);
  CHECK(m.nodes.at(1).forwarded_fragments == 0);
}

TEST_CASE("a run is a pure function of its seed") {
  auto once = [](std::uint64_t seed) {
    Network net(line(5, Strategy::ff, 0.8, seed));
    net.node(4).start_app({272, 1s, 3s, 20});
    net.node(3).start_app({272, 1s, 3s, 20});
    net.run();
    return net.collect();
  };
  const RunMetrics a = once(42), b = once(42), c = once(43);
  CHECK(a.trace_digest == b.trace_digest);
  CHECK(a.events == b.events);
  CHECK(a.delivered == b.delivered);
  CHECK(a.end_time_us == b.end_time_us);
  CHECK(a.trace_digest != c.trace_digest);
}

TEST_CASE("invariants hold on random lossy networks") {
  Rng rng(2024);
  for (int round = 0; round < 60; ++round) {
    const Strategy st = static_cast<Strategy>(rng.below(3));
    const std::size_t n = 3 + rng.below(8);
    const std::size_t payload = kTable1Payloads[rng.below(14)];
    Network net(random_tree(rng, n, st));
    for (NodeId id = 1; id < n; ++id) {
      net.node(id).start_app({payload, 200ms, 3s, 8});
    }
    net.run();
    const RunMetrics m = net.collect();
    CAPTURE(round);
    CAPTURE(to_string(st));
    CAPTURE(payload);
    CHECK(m.sent == 8 * (n - 1));
    CHECK(m.delivered + lost(m) == m.sent);
    CHECK(m.invariants.path_violations == 0);
    CHECK(m.invariants.byte_mismatches == 0);
    CHECK(m.invariants.conservation_violations == 0);
    CHECK(m.invariants.arena_leaks == 0);
    CHECK(m.invariants.delivered_after_loss == 0);
    for (NodeId id = 0; id < n; ++id) {
      CHECK(net.node(id).quiescent());
      CHECK(net.node(id).arena().used() == 0);
      CHECK(net.node(id).tags().live_count() == 0);
      CHECK(m.nodes[id].pktbuf_high_water <= net.node(id).arena().capacity());
    }
  }
}

TEST_CASE("datagram contents are deterministic per source and sequence") {
  const auto a = make_datagram(4, 0, 9, 100);
  CHECK(a.size() == 148);
  CHECK(a == make_datagram(4, 0, 9, 100));
  CHECK(a != make_datagram(4, 0, 10, 100));
  CHECK((a[0] >> 4) == 6);  // IPv6 version nibble
}

TEST_CASE("strategy names round trip") {
  for (Strategy st : {Strategy::hwr, Strategy::ff, Strategy::ff_queued}) {
    CHECK(parse_strategy(to_string(st)) == st);
  }
  CHECK_FALSE(parse_strategy("ffq"));
}
