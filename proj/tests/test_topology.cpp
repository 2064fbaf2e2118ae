#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "fragsim/topology.hpp"

using namespace fragsim;

namespace {

const std::filesystem::path kData = FRAGSIM_DATA_DIR;

Topology parse(const std::string& text) {
  std::istringstream in(text);
  return load_topology(in);
}

std::size_t parse_error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const TopologyParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST_CASE("pinned topology has the experiment shape") {
  const Topology t = load_topology(kData / "paper_topology.txt");
  CHECK(t.size() == 50);
  CHECK(t.sink == 0);
  CHECK(t.children(t.sink).size() == 2);
  CHECK(t.max_hops() == 6);
  CHECK(t.has_bottleneck());
  CHECK_NOTHROW(t.validate());
  for (std::size_t i = 1; i < t.size(); ++i) {
    const auto& n = t.nodes[i];
    const double d = distance(n.position, t.nodes[n.parent].position);
    CHECK(d >= 2.2);
    CHECK(d <= 6.6);
    CHECK(t.children(static_cast<NodeId>(i)).size() <= 3);
  }
}

TEST_CASE("BFS sampling respects distance gate and fan-out") {
  const SitePlan plan = synthetic_site_plan(1);
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    Topology t;
    try {
      t = build_topology(plan, plan.sink, seed);
    } catch (const TopologyError&) {
      continue;  // candidates ran out; the search skips such seeds
    }
    CHECK(t.size() == 50);
    CHECK(t.children(0).size() == 2);
    std::set<NodeId> sites;
    for (std::size_t i = 0; i < t.size(); ++i) {
      sites.insert(t.nodes[i].site_id);
      if (i == 0) continue;
      const auto& n = t.nodes[i];
      const double d = distance(n.position, t.nodes[n.parent].position);
      CHECK(d >= 2.2);
      CHECK(d <= 6.6);
      CHECK(n.hops == t.nodes[n.parent].hops + 1);
      CHECK(n.parent < i);  // BFS numbering
    }
    CHECK(sites.size() == 50);
    for (const auto& l : t.links) {
      CHECK(l.src < l.dst);
      CHECK(l.pdr == doctest::Approx(PdrCurve{}(distance(t.nodes[l.src].position,
                                                         t.nodes[l.dst].position))));
    }
  }
}

TEST_CASE("topology search is deterministic") {
  const SitePlan plan = synthetic_site_plan(1);
  const auto a = search_topology(plan, plan.sink, 6, 1);
  const auto b = search_topology(plan, plan.sink, 6, 1);
  CHECK(a.seed == b.seed);
  CHECK(a.topology == b.topology);
  CHECK(a.topology.max_hops() == 6);
  CHECK(a.topology.has_bottleneck());
}

TEST_CASE("a site plan with no node in the distance gate is rejected") {
  SitePlan plan;
  for (NodeId i = 0; i < 10; ++i) {
    plan.nodes.push_back({i, 0.1 * i, 0.0, 1.0});
  }
  plan.sink = 0;
  CHECK_THROWS_AS(build_topology(plan, 0, 1), TopologyError);
}

TEST_CASE("topology text round trip") {
  const SitePlan plan = synthetic_site_plan(3);
  const Topology t = search_topology(plan, plan.sink, 6, 1).topology;
  std::stringstream buf;
  save_topology(t, buf);
  const Topology u = load_topology(buf);
  CHECK(u == t);
  std::stringstream again;
  save_topology(u, again);
  CHECK(again.str() == buf.str());
}

TEST_CASE("topology parse errors carry line numbers") {
  const std::string good =
      "fragsim-topology 1\n"
      "sink 0\n"
      "node 0 0 0 0 0\n"
      "node 1 1 3 0 0\n"
      "route 1 0\n"
      "link 0 1 0.99\n";
  const Topology t = parse(good);
  CHECK(t.size() == 2);
  CHECK(t.nodes[1].hops == 1);
  CHECK(parse("# comment\n\n" + good).size() == 2);

  CHECK(parse_error_line("fragsim-topology 2\n") == 1);
  CHECK(parse_error_line("fragsim-topology 1\nsink 0\nnode 0 0 0 0 0\nnode 2 1 3 0 0\n") == 4);
  CHECK(parse_error_line("fragsim-topology 1\nsink 0\nnode 0 0 0 0 zero\n") == 3);
  CHECK(parse_error_line("fragsim-topology 1\nsink 0\nnode 0 0 0 0 0\nbogus 1\n") == 4);
  CHECK(parse_error_line(good + "link 0 7 0.5\n") == 7);
  CHECK(parse_error_line(good + "route 1 0\n") == 7);
  CHECK_THROWS_AS(parse(""), TopologyParseError);
}

TEST_CASE("routes must form a tree over in-range links") {
  // Node 1 routes to node 0 but no link connects them.
  CHECK_THROWS_AS(parse("fragsim-topology 1\nsink 0\nnode 0 0 0 0 0\nnode 1 1 3 0 0\n"
                        "route 1 0\n"),
                  TopologyError);
  // Routing loop between 1 and 2.
  CHECK_THROWS_AS(parse("fragsim-topology 1\nsink 0\nnode 0 0 0 0 0\nnode 1 1 3 0 0\n"
                        "node 2 2 6 0 0\nroute 1 2\nroute 2 1\nlink 1 2 1\nlink 0 1 1\n"),
                  TopologyError);
}
