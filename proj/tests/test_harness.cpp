#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fragsim/harness.hpp"

using namespace fragsim;
using nlohmann::json;

namespace {

const std::filesystem::path kData = FRAGSIM_DATA_DIR;

json minimal() {
  return {{"version", 1}, {"name", "t"}, {"topology", "paper_topology.txt"}};
}

Scenario small_scenario() {
  Scenario s = load_scenario(kData / "paper_scenario.json");
  s.name = "small";
  s.payloads = {176};
  s.strategies = {Strategy::ff};
  s.packets_per_source = 5;
  s.seeds = {7};
  return s;
}

}  // namespace

TEST_CASE("pinned scenario loads with its topology resolved") {
  const Scenario s = load_scenario(kData / "paper_scenario.json");
  CHECK(s.topology == kData / "paper_topology.txt");
  CHECK(s.strategies.size() == 3);
  CHECK(s.payloads.size() == 14);
  CHECK(s.runs() == 3);
  CHECK(s.packets_per_source == 100);
  CHECK(s.rbuf_entries == 1);
  CHECK(s.sink_rbuf_entries == 16);
  CHECK(s.vrb_entries == 16);
}

TEST_CASE("scenario JSON round trip") {
  Scenario s = load_scenario(kData / "paper_scenario.json");
  s.link_pdr = 0.5;
  s.relay_rbuf_entries = 4;
  s.mac.max_retransmissions = 7;
  s.stack.compression_growth = 2;
  const json j = scenario_to_json(s);
  const Scenario t = scenario_from_json(j);
  CHECK(scenario_to_json(t) == j);
  CHECK(t.relay_rbuf_entries == 4u);
  CHECK(t.link_pdr == 0.5);
}

TEST_CASE("scenario validation") {
  CHECK_NOTHROW(scenario_from_json(minimal()));
  auto with = [](const char* key, json value) {
    json j = minimal();
    j[key] = std::move(value);
    return j;
  };
  CHECK_THROWS_AS(scenario_from_json(with("version", 2)), ConfigError);
  CHECK_THROWS_AS(scenario_from_json(with("colour", "red")), ConfigError);
  CHECK_THROWS_AS(scenario_from_json(with("name", "a,b")), ConfigError);
  CHECK_THROWS_AS(scenario_from_json(with("strategies", json::array({"hwr", "fast"}))),
                  ConfigError);
  CHECK_THROWS_AS(scenario_from_json(with("strategies", json::array())), ConfigError);
  CHECK_THROWS_AS(scenario_from_json(with("payloads", json::array({2000}))), ConfigError);
  CHECK_THROWS_AS(scenario_from_json(with("interval_s", json::array({5, 1}))), ConfigError);
  CHECK_THROWS_AS(scenario_from_json(with("interval_s", json::array({5}))), ConfigError);
  CHECK_THROWS_AS(scenario_from_json(with("seeds", json::array())), ConfigError);
  CHECK_THROWS_AS(scenario_from_json(with("link_pdr", 1.5)), ConfigError);
  CHECK_THROWS_AS(scenario_from_json(with("buffers", {{"rbuf_entries", 0}})), ConfigError);
  CHECK_THROWS_AS(scenario_from_json(with("buffers", {{"rbuf", 2}})), ConfigError);
  CHECK_THROWS_AS(scenario_from_json(with("mac", {{"min_be", 6}})), ConfigError);
  CHECK_THROWS_AS(scenario_from_json(with("frame", {{"mac_overhead", 200}})), ConfigError);
  CHECK_THROWS_AS(scenario_from_json(with("packets_per_source", "many")), ConfigError);
  json no_topo = minimal();
  no_topo.erase("topology");
  CHECK_THROWS_AS(scenario_from_json(no_topo), ConfigError);
  CHECK_THROWS_AS(load_scenario(kData / "missing.json"), ConfigError);
}

TEST_CASE("network roles and buffer sizes") {
  Scenario s = load_scenario(kData / "paper_scenario.json");
  const Topology topo = load_topology(s.topology);
  auto spec = make_network_spec(s, topo, Strategy::ff, 1);
  std::size_t senders = 0;
  for (const auto& c : spec.nodes) {
    const auto& n = topo.nodes[c.id];
    if (c.id == topo.sink) {
      CHECK(c.role == Role::sink);
      CHECK(c.rbuf_entries == 16);
    } else {
      CHECK(c.next_hop == n.parent);
      CHECK(c.rbuf_entries == 1);
      CHECK((c.role == Role::source) == (n.hops >= 2));
      senders += c.role == Role::source;
    }
  }
  CHECK(senders == topo.size() - 3);

  s.relay_rbuf_entries = 5;
  s.link_pdr = 0.25;
  spec = make_network_spec(s, topo, Strategy::hwr, 1);
  for (const auto& c : spec.nodes) {
    if (c.role == Role::forwarder) CHECK(c.rbuf_entries == 5);
    if (c.role == Role::source) CHECK(c.rbuf_entries == 1);
  }
  for (const auto& l : spec.links) CHECK(l.pdr == 0.25);
  CHECK(spec.interference);

  s.unbounded = true;
  spec = make_network_spec(s, topo, Strategy::ff, 1);
  CHECK_FALSE(spec.interference);
  CHECK(spec.stack.reassembly_timeout == s.stack.reassembly_timeout);
  for (const auto& c : spec.nodes) CHECK(c.rbuf_entries > 1000000);
}

TEST_CASE("unbounded lossless runs deliver everything") {
  Scenario s = small_scenario();
  s.unbounded = true;
  s.link_pdr = 1.0;
  const Topology topo = load_topology(s.topology);
  for (Strategy st : {Strategy::hwr, Strategy::ff, Strategy::ff_queued}) {
    const RunMetrics m = run_once(s, topo, st, 656, 0);
    CAPTURE(to_string(st));
    CHECK(m.sent > 0);
    CHECK(m.delivered == m.sent);
    CHECK(m.invariants.total() == 0);
  }
}

TEST_CASE("run files round trip byte for byte") {
  const Scenario s = small_scenario();
  const Topology topo = load_topology(s.topology);
  const RunMetrics m = run_once(s, topo, Strategy::ff, 176, 0);
  CHECK(m.fragments == 3);
  CHECK(m.invariants.total() == 0);
  std::stringstream a;
  write_run_csv(m, a);
  const RunMetrics back = read_run_csv(a);
  std::stringstream b;
  write_run_csv(back, b);
  CHECK(a.str() == b.str());
  CHECK(back.trace_digest == m.trace_digest);
  CHECK(back.nodes.size() == m.nodes.size());
  CHECK(back.latency.size() == m.latency.size());
  CHECK(run_file_name(m) == "ff_p176_r0.csv");
}

TEST_CASE("malformed run files are rejected") {
  std::istringstream bad_header("a,b,c\n");
  CHECK_THROWS_AS(read_run_csv(bad_header), ConfigError);
  std::istringstream bad_value("series,node,hops,key,value\nsummary,,,sent,lots\n");
  CHECK_THROWS_AS(read_run_csv(bad_value), ConfigError);
}

TEST_CASE("aggregation refuses mixed scenarios") {
  RunMetrics a, b;
  a.scenario = "one";
  b.scenario = "two";
  CHECK_THROWS_AS(aggregate({a, b}), ConfigError);
}

TEST_CASE("aggregation statistics") {
  auto run = [](unsigned r, std::uint64_t delivered, std::uint64_t retrans) {
    RunMetrics m;
    m.scenario = "s";
    m.strategy = "hwr";
    m.payload = 80;
    m.fragments = 2;
    m.run = r;
    m.sent = 100;
    m.delivered = delivered;
    NodeStats sink;
    sink.id = 0;
    sink.l2_retransmissions = 1000;  // hop 0: not a transmitter
    NodeStats a;
    a.id = 1;
    a.hop_distance = 1;
    a.l2_retransmissions = retrans;
    a.rbuf_full = 3;
    NodeStats b = a;
    b.id = 2;
    b.hop_distance = 2;
    b.l2_retransmissions = 2 * retrans;
    m.nodes = {sink, a, b};
    return m;
  };

  SUBCASE("identical runs have zero spread") {
    const json out = aggregate({run(0, 50, 4), run(1, 50, 4), run(2, 50, 4)});
    const json& s = out.at("series").at(0);
    CHECK(s.at("pdr").at("mean") == doctest::Approx(0.5));
    CHECK(s.at("pdr").at("stddev") == 0.0);
    CHECK(s.at("l2_retransmissions_per_node").at("stddev") == 0.0);
    CHECK(s.at("l2_retransmissions_per_node").at("mean") == doctest::Approx(6.0));
  }
  SUBCASE("means and spread match a hand fold") {
    const json out = aggregate({run(0, 20, 2), run(1, 50, 4), run(2, 80, 12)});
    const json& s = out.at("series").at(0);
    CHECK(s.at("runs") == 3);
    CHECK(s.at("pdr").at("mean") == doctest::Approx(0.5));
    CHECK(s.at("pdr").at("stddev") == doctest::Approx(0.3));
    CHECK(s.at("pdr").at("median") == doctest::Approx(0.5));
    CHECK(s.at("pdr").at("min") == doctest::Approx(0.2));
    CHECK(s.at("pdr").at("p90") == doctest::Approx(0.74));
    // per-node means 3, 6, 18
    CHECK(s.at("l2_retransmissions_per_node").at("mean") == doctest::Approx(9.0));
    CHECK(s.at("rbuf_full_events").at("mean") == doctest::Approx(6.0));
    CHECK(s.at("sent") == 300);
    CHECK(s.at("delivered") == 150);
  }
}
