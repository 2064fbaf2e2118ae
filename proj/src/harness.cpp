#include "fragsim/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace fragsim {

using nlohmann::json;

namespace {

constexpr std::size_t kUnbounded = std::size_t{1} << 30;

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) {
    return fallback;
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

void check_keys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) {
    throw ConfigError(std::string(where) + " must be an object");
  }
  for (const auto& [k, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
      throw ConfigError(std::string("unknown field '") + k + "' in " + where);
    }
  }
}

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

// ---------------------------------------------------------------------------
// Scenario

void Scenario::validate() const {
  if (name.empty() || name.find_first_of(",\n\r") != std::string::npos) {
    throw ConfigError("scenario name must be non-empty without commas or newlines");
  }
  if (strategies.empty()) {
    throw ConfigError("no strategies");
  }
  if (payloads.empty()) {
    throw ConfigError("no payload sizes");
  }
  for (std::size_t p : payloads) {
    if (p + stack.frame.uncompressed_header > frag::kMaxDatagramSize) {
      throw ConfigError("payload " + std::to_string(p) + " exceeds the datagram size field");
    }
  }
  if (interval_lo <= SimTime{0} || interval_hi < interval_lo) {
    throw ConfigError("send interval must satisfy 0 < lo <= hi");
  }
  if (seeds.empty()) {
    throw ConfigError("at least one seed (run) is required");
  }
  if (link_pdr && !(*link_pdr >= 0.0 && *link_pdr <= 1.0)) {
    throw ConfigError("link_pdr must lie in [0, 1]");
  }
  if (rbuf_entries == 0 || sink_rbuf_entries == 0 ||
      (relay_rbuf_entries && *relay_rbuf_entries == 0)) {
    throw ConfigError("reassembly buffers need at least one entry");
  }
  if (stack.frame.mac_overhead >= stack.frame.max_psdu ||
      stack.frame.compression_bytes > stack.frame.uncompressed_header) {
    throw ConfigError("inconsistent frame model");
  }
  if (mac.min_be > mac.max_be || mac.max_retransmissions < 0 || mac.max_csma_backoffs < 0) {
    throw ConfigError("inconsistent MAC parameters");
  }
}

Scenario scenario_from_json(const json& j, const std::filesystem::path& base_dir) {
  check_keys(j, "scenario",
             {"version", "name", "topology", "strategies", "payloads", "interval_s",
              "packets_per_source", "seeds", "link_pdr", "unbounded", "buffers", "mac", "stack",
              "frame"});
  if (get_or<int>(j, "version", 0) != kScenarioVersion) {
    throw ConfigError("unsupported scenario version (expected " +
                      std::to_string(kScenarioVersion) + ")");
  }
  Scenario s;
  s.name = get_or<std::string>(j, "name", s.name);
  if (!j.contains("topology")) {
    throw ConfigError("missing field 'topology'");
  }
  std::filesystem::path topo = get_or<std::string>(j, "topology", "");
  s.topology = topo.is_absolute() || base_dir.empty() ? topo : base_dir / topo;

  if (j.contains("strategies")) {
    s.strategies.clear();
    for (const auto& v : j.at("strategies")) {
      const auto name = v.get<std::string>();
      auto st = parse_strategy(name);
      if (!st) {
        throw ConfigError("unknown strategy '" + name + "'");
      }
      s.strategies.push_back(*st);
    }
  }
  s.payloads = get_or(j, "payloads", s.payloads);
  if (j.contains("interval_s")) {
    const auto iv = j.at("interval_s");
    if (!iv.is_array() || iv.size() != 2) {
      throw ConfigError("interval_s must be [lo, hi]");
    }
    s.interval_lo = SimTime{std::llround(iv[0].get<double>() * 1e6)};
    s.interval_hi = SimTime{std::llround(iv[1].get<double>() * 1e6)};
  }
  s.packets_per_source = get_or(j, "packets_per_source", s.packets_per_source);
  s.seeds = get_or(j, "seeds", s.seeds);
  if (j.contains("link_pdr") && !j.at("link_pdr").is_null()) {
    s.link_pdr = j.at("link_pdr").get<double>();
  }
  s.unbounded = get_or(j, "unbounded", s.unbounded);

  if (j.contains("buffers")) {
    const auto& b = j.at("buffers");
    check_keys(b, "buffers",
               {"rbuf_entries", "sink_rbuf_entries", "relay_rbuf_entries", "vrb_entries",
                "reassembly_timeout_ms",
                "arena_bytes", "frag_buffer_slots"});
    s.rbuf_entries = get_or(b, "rbuf_entries", s.rbuf_entries);
    s.sink_rbuf_entries = get_or(b, "sink_rbuf_entries", s.sink_rbuf_entries);
    if (b.contains("relay_rbuf_entries") && !b.at("relay_rbuf_entries").is_null()) {
      s.relay_rbuf_entries = get_or<std::size_t>(b, "relay_rbuf_entries", 0);
    }
    s.vrb_entries = get_or(b, "vrb_entries", s.vrb_entries);
    s.stack.reassembly_timeout =
        std::chrono::milliseconds{get_or<std::int64_t>(b, "reassembly_timeout_ms", 10000)};
    s.stack.arena_bytes = get_or(b, "arena_bytes", s.stack.arena_bytes);
    s.stack.frag_buffer_slots = get_or(b, "frag_buffer_slots", s.stack.frag_buffer_slots);
  }
  if (j.contains("mac")) {
    const auto& m = j.at("mac");
    check_keys(m, "mac",
               {"max_retransmissions", "min_be", "max_be", "max_csma_backoffs", "queue_capacity",
                "busy_through_csma"});
    s.mac.max_retransmissions = get_or(m, "max_retransmissions", s.mac.max_retransmissions);
    s.mac.min_be = get_or(m, "min_be", s.mac.min_be);
    s.mac.max_be = get_or(m, "max_be", s.mac.max_be);
    s.mac.max_csma_backoffs = get_or(m, "max_csma_backoffs", s.mac.max_csma_backoffs);
    s.mac.queue_capacity = get_or(m, "queue_capacity", s.mac.queue_capacity);
    s.mac.busy_through_csma = get_or(m, "busy_through_csma", s.mac.busy_through_csma);
  }
  if (j.contains("stack")) {
    const auto& st = j.at("stack");
    check_keys(st, "stack",
               {"processing_delay_us", "compression_growth", "first_fragment_needs_rbuf"});
    s.stack.processing_delay =
        SimTime{get_or<std::int64_t>(st, "processing_delay_us", s.stack.processing_delay.count())};
    s.stack.compression_growth = get_or(st, "compression_growth", s.stack.compression_growth);
    s.stack.first_fragment_needs_rbuf =
        get_or(st, "first_fragment_needs_rbuf", s.stack.first_fragment_needs_rbuf);
  }
  if (j.contains("frame")) {
    const auto& f = j.at("frame");
    check_keys(f, "frame", {"max_psdu", "mac_overhead", "compression_bytes"});
    s.stack.frame.max_psdu = get_or(f, "max_psdu", s.stack.frame.max_psdu);
    s.stack.frame.mac_overhead = get_or(f, "mac_overhead", s.stack.frame.mac_overhead);
    s.stack.frame.compression_bytes =
        get_or(f, "compression_bytes", s.stack.frame.compression_bytes);
  }
  s.validate();
  return s;
}

json scenario_to_json(const Scenario& s) {
  json j;
  j["version"] = kScenarioVersion;
  j["name"] = s.name;
  j["topology"] = s.topology.generic_string();
  j["strategies"] = json::array();
  for (Strategy st : s.strategies) {
    j["strategies"].push_back(std::string(to_string(st)));
  }
  j["payloads"] = s.payloads;
  j["interval_s"] = {s.interval_lo.count() / 1e6, s.interval_hi.count() / 1e6};
  j["packets_per_source"] = s.packets_per_source;
  j["seeds"] = s.seeds;
  j["link_pdr"] = s.link_pdr ? json(*s.link_pdr) : json(nullptr);
  j["unbounded"] = s.unbounded;
  j["buffers"] = {{"rbuf_entries", s.rbuf_entries},
                  {"sink_rbuf_entries", s.sink_rbuf_entries},
                  {"relay_rbuf_entries",
                   s.relay_rbuf_entries ? json(*s.relay_rbuf_entries) : json(nullptr)},
                  {"vrb_entries", s.vrb_entries},
                  {"reassembly_timeout_ms",
                   std::chrono::duration_cast<std::chrono::milliseconds>(s.stack.reassembly_timeout)
                       .count()},
                  {"arena_bytes", s.stack.arena_bytes},
                  {"frag_buffer_slots", s.stack.frag_buffer_slots}};
  j["mac"] = {{"max_retransmissions", s.mac.max_retransmissions},
              {"min_be", s.mac.min_be},
              {"max_be", s.mac.max_be},
              {"max_csma_backoffs", s.mac.max_csma_backoffs},
              {"queue_capacity", s.mac.queue_capacity},
              {"busy_through_csma", s.mac.busy_through_csma}};
  j["stack"] = {{"processing_delay_us", s.stack.processing_delay.count()},
                {"compression_growth", s.stack.compression_growth},
                {"first_fragment_needs_rbuf", s.stack.first_fragment_needs_rbuf}};
  j["frame"] = {{"max_psdu", s.stack.frame.max_psdu},
                {"mac_overhead", s.stack.frame.mac_overhead},
                {"compression_bytes", s.stack.frame.compression_bytes}};
  return j;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot read scenario " + path.string());
  }
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  Scenario s = scenario_from_json(j, path.parent_path());
  if (!std::filesystem::exists(s.topology)) {
    throw ConfigError("topology file not found: " + s.topology.string());
  }
  return s;
}

// ---------------------------------------------------------------------------
// Runs

NetworkSpec make_network_spec(const Scenario& s, const Topology& topo, Strategy strategy,
                              std::uint64_t seed) {
  NetworkSpec spec;
  spec.sink = topo.sink;
  spec.stack = s.stack;
  spec.mac = s.mac;
  spec.seed = seed;
  if (s.unbounded) {
    spec.stack.arena_bytes = kUnbounded;
    spec.stack.frag_buffer_slots = 4096;
    spec.mac.queue_capacity = kUnbounded;
    spec.mac.max_retransmissions = 1 << 20;
    spec.interference = false;
  }
  for (std::size_t i = 0; i < topo.size(); ++i) {
    const auto& n = topo.nodes[i];
    NodeConfig c;
    c.id = static_cast<NodeId>(i);
    c.strategy = strategy;
    c.hop_distance = n.hops;
    c.next_hop = n.parent;
    c.vrb_entries = s.unbounded ? kUnbounded : s.vrb_entries;
    if (i == topo.sink) {
      c.role = Role::sink;
      c.rbuf_entries = s.unbounded ? kUnbounded : s.sink_rbuf_entries;
    } else {
      c.role = n.hops >= 2 ? Role::source : Role::forwarder;
      const std::size_t entries = c.role == Role::source
                                      ? s.rbuf_entries
                                      : s.relay_rbuf_entries.value_or(s.rbuf_entries);
      c.rbuf_entries = s.unbounded ? kUnbounded : entries;
    }
    spec.nodes.push_back(c);
  }
  for (LinkModel l : topo.links) {
    if (s.link_pdr) {
      l.pdr = *s.link_pdr;
    }
    spec.links.push_back(l);
  }
  return spec;
}

std::size_t fragment_count(std::size_t payload, const FrameModel& frame,
                           frag::FragPolicy policy) {
  const auto datagram = make_datagram(1, 0, 0, payload);
  const auto comp = frag::compress(datagram, frame.uncompressed_header, frame.compression_bytes);
  return frag::fragment_datagram(datagram, comp, 0, frame.sdu(), policy).size();
}

RunMetrics run_once(const Scenario& s, const Topology& topo, Strategy strategy,
                    std::size_t payload, unsigned run) {
  const std::uint64_t seed = derive_seed(s.seeds.at(run), payload);
  Network net(make_network_spec(s, topo, strategy, seed));
  AppFlow flow;
  flow.payload_size = payload;
  flow.interval_lo = s.interval_lo;
  flow.interval_hi = s.interval_hi;
  flow.packet_count = s.packets_per_source;
  net.start_traffic(flow);
  net.run();
  RunMetrics m = net.collect();
  m.scenario = s.name;
  m.strategy = std::string(to_string(strategy));
  m.payload = payload;
  m.fragments = fragment_count(payload, s.stack.frame,
                               strategy == Strategy::hwr ? frag::FragPolicy::fill_first
                                                         : frag::FragPolicy::minimal_first);
  m.run = run;
  m.seed = s.seeds.at(run);
  return m;
}

std::string run_file_name(const RunMetrics& m) {
  return m.strategy + "_p" + std::to_string(m.payload) + "_r" + std::to_string(m.run) + ".csv";
}

// ---------------------------------------------------------------------------
// Metrics files

namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>);

using StatField = std::pair<const char*, std::uint64_t NodeStats::*>;

constexpr StatField kNodeFields[] = {
    {"sent", &NodeStats::sent},
    {"delivered", &NodeStats::delivered},
    {"tx_attempts", &NodeStats::tx_attempts},
    {"l2_retransmissions", &NodeStats::l2_retransmissions},
    {"busy_losses", &NodeStats::busy_losses},
    {"collisions", &NodeStats::collisions},
    {"queue_drops", &NodeStats::queue_drops},
    {"csma_failures", &NodeStats::csma_failures},
    {"rbuf_full", &NodeStats::rbuf_full},
    {"rbuf_timeouts", &NodeStats::rbuf_timeouts},
    {"rbuf_timeouts_first_missing", &NodeStats::rbuf_timeouts_first_missing},
    {"vrb_full", &NodeStats::vrb_full},
    {"vrb_expired", &NodeStats::vrb_expired},
    {"pktbuf_full", &NodeStats::pktbuf_full},
    {"forwarded_fragments", &NodeStats::forwarded_fragments},
    {"fallback_fragments", &NodeStats::fallback_fragments},
    {"pktbuf_high_water", &NodeStats::pktbuf_high_water},
    {"mem_high_water", &NodeStats::mem_high_water},
    {"rbuf_high_water", &NodeStats::rbuf_high_water},
};

using InvariantField = std::pair<const char*, std::uint64_t InvariantReport::*>;

constexpr InvariantField kInvariantFields[] = {
    {"path_violations", &InvariantReport::path_violations},
    {"byte_mismatches", &InvariantReport::byte_mismatches},
    {"conservation_violations", &InvariantReport::conservation_violations},
    {"arena_leaks", &InvariantReport::arena_leaks},
    {"delivered_after_loss", &InvariantReport::delivered_after_loss},
};

}  // namespace

void write_run_csv(const RunMetrics& m, std::ostream& out) {
  out << "series,node,hops,key,value\n";
  auto row = [&](const char* series, const std::string& node, const std::string& hops,
                 const std::string& key, const std::string& value) {
    out << series << ',' << node << ',' << hops << ',' << key << ',' << value << '\n';
  };
  row("meta", "", "", "scenario", m.scenario);
  row("meta", "", "", "strategy", m.strategy);
  row("meta", "", "", "payload", std::to_string(m.payload));
  row("meta", "", "", "fragments", std::to_string(m.fragments));
  row("meta", "", "", "run", std::to_string(m.run));
  row("meta", "", "", "seed", std::to_string(m.seed));

  row("summary", "", "", "sent", std::to_string(m.sent));
  row("summary", "", "", "delivered", std::to_string(m.delivered));
  row("summary", "", "", "pdr", fmt(m.pdr()));
  row("summary", "", "", "events", std::to_string(m.events));
  row("summary", "", "", "end_time_us", std::to_string(m.end_time_us));
  row("summary", "", "", "trace_digest", std::to_string(m.trace_digest));
  for (LossCause c : kAllLossCauses) {
    const auto it = m.losses.find(c);
    row("loss", "", "", std::string(to_string(c)),
        std::to_string(it == m.losses.end() ? 0 : it->second));
  }
  for (const auto& [name, field] : kInvariantFields) {
    row("invariant", "", "", name, std::to_string(m.invariants.*field));
  }
  for (const NodeStats& n : m.nodes) {
    for (const auto& [name, field] : kNodeFields) {
      row("node", std::to_string(n.id), std::to_string(n.hop_distance), name,
          std::to_string(n.*field));
    }
  }
  for (const LatencySample& l : m.latency) {
    row("latency", std::to_string(l.source), std::to_string(l.hop_distance), "latency_us",
        std::to_string(l.latency_us));
  }
  for (const RbufFullEvent& e : m.rbuf_full_events) {
    row("rbuf_full_event", std::to_string(e.node), "", std::to_string(e.time_us),
        std::to_string(e.pktbuf_used));
  }
}

namespace {

std::uint64_t to_u64(const std::string& s, std::size_t line) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) {
    throw ConfigError("metrics file line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

std::int64_t to_i64(const std::string& s, std::size_t line) {
  std::int64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) {
    throw ConfigError("metrics file line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace

RunMetrics read_run_csv(std::istream& in) {
  RunMetrics m;
  std::string line;
  std::size_t n = 0;
  if (!std::getline(in, line) || line != "series,node,hops,key,value") {
    throw ConfigError("metrics file: missing header");
  }
  ++n;
  std::map<NodeId, NodeStats> nodes;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) {
      f.push_back(cell);
    }
    if (f.size() == 4 && !line.empty() && line.back() == ',') {
      f.emplace_back();
    }
    if (f.size() != 5) {
      throw ConfigError("metrics file line " + std::to_string(n) + ": expected 5 columns");
    }
    const std::string& series = f[0];
    const std::string& key = f[3];
    const std::string& value = f[4];
    if (series == "meta") {
      if (key == "scenario") m.scenario = value;
      else if (key == "strategy") m.strategy = value;
      else if (key == "payload") m.payload = to_u64(value, n);
      else if (key == "fragments") m.fragments = to_u64(value, n);
      else if (key == "run") m.run = static_cast<unsigned>(to_u64(value, n));
      else if (key == "seed") m.seed = to_u64(value, n);
    } else if (series == "summary") {
      if (key == "sent") m.sent = to_u64(value, n);
      else if (key == "delivered") m.delivered = to_u64(value, n);
      else if (key == "events") m.events = to_u64(value, n);
      else if (key == "end_time_us") m.end_time_us = to_i64(value, n);
      else if (key == "trace_digest") m.trace_digest = to_u64(value, n);
    } else if (series == "loss") {
      auto c = parse_loss_cause(key);
      if (!c) {
        throw ConfigError("metrics file line " + std::to_string(n) + ": unknown loss cause");
      }
      m.losses[*c] = to_u64(value, n);
    } else if (series == "invariant") {
      for (const auto& [name, field] : kInvariantFields) {
        if (key == name) {
          m.invariants.*field = to_u64(value, n);
        }
      }
    } else if (series == "node") {
      const auto id = static_cast<NodeId>(to_u64(f[1], n));
      NodeStats& s = nodes[id];
      s.id = id;
      s.hop_distance = static_cast<unsigned>(to_u64(f[2], n));
      for (const auto& [name, field] : kNodeFields) {
        if (key == name) {
          s.*field = to_u64(value, n);
        }
      }
    } else if (series == "latency") {
      m.latency.push_back({static_cast<NodeId>(to_u64(f[1], n)),
                           static_cast<unsigned>(to_u64(f[2], n)), to_i64(value, n)});
    } else if (series == "rbuf_full_event") {
      m.rbuf_full_events.push_back(
          {to_i64(key, n), static_cast<NodeId>(to_u64(f[1], n)), to_u64(value, n)});
    } else {
      throw ConfigError("metrics file line " + std::to_string(n) + ": unknown series '" +
                        series + "'");
    }
  }
  for (auto& [_, s] : nodes) {
    m.nodes.push_back(s);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Aggregation

namespace {

/// Linear interpolation between closest ranks.
double percentile(std::vector<double> v, double p) {
  if (v.empty()) {
    return 0.0;
  }
  std::sort(v.begin(), v.end());
  const double rank = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = static_cast<std::size_t>(std::ceil(rank));
  return v[lo] + (v[hi] - v[lo]) * (rank - static_cast<double>(lo));
}

json describe(const std::vector<double>& v) {
  if (v.empty()) {
    return {{"count", 0}};
  }
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) {
    var += (x - mean) * (x - mean);
  }
  var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
  return {{"count", v.size()},
          {"mean", mean},
          {"stddev", std::sqrt(var)},
          {"min", *std::min_element(v.begin(), v.end())},
          {"median", percentile(v, 50)},
          {"p10", percentile(v, 10)},
          {"p90", percentile(v, 90)},
          {"max", *std::max_element(v.begin(), v.end())}};
}

}  // namespace

json aggregate(const std::vector<RunMetrics>& runs) {
  json out;
  out["series"] = json::array();
  if (runs.empty()) {
    return out;
  }
  const std::string scenario = runs.front().scenario;
  std::map<std::pair<std::string, std::size_t>, std::vector<const RunMetrics*>> groups;
  for (const auto& r : runs) {
    if (r.scenario != scenario) {
      throw ConfigError("refusing to aggregate runs of different scenarios ('" + scenario +
                        "' and '" + r.scenario + "')");
    }
    groups[{r.strategy, r.payload}].push_back(&r);
  }
  out["scenario"] = scenario;

  for (const auto& [key, group] : groups) {
    std::vector<double> pdr, retrans, pktbuf, rbuf_full, latency;
    std::map<unsigned, std::vector<double>> latency_by_hops;
    std::map<std::string, std::uint64_t> losses;
    std::uint64_t timeouts = 0, first_missing = 0, invariants = 0, sent = 0, delivered = 0;
    json digests = json::array();
    std::set<std::size_t> fragments;
    for (const RunMetrics* r : group) {
      pdr.push_back(r->pdr());
      sent += r->sent;
      delivered += r->delivered;
      fragments.insert(r->fragments);
      double retrans_sum = 0;
      std::size_t transmitters = 0;
      std::size_t pktbuf_max = 0;
      std::uint64_t full = 0;
      for (const NodeStats& n : r->nodes) {
        full += n.rbuf_full;
        pktbuf_max = std::max(pktbuf_max, n.pktbuf_high_water);
        if (n.hop_distance > 0) {
          retrans_sum += static_cast<double>(n.l2_retransmissions);
          ++transmitters;
          timeouts += n.rbuf_timeouts;
          first_missing += n.rbuf_timeouts_first_missing;
        }
      }
      retrans.push_back(transmitters ? retrans_sum / static_cast<double>(transmitters) : 0.0);
      pktbuf.push_back(static_cast<double>(pktbuf_max));
      rbuf_full.push_back(static_cast<double>(full));
      for (const auto& l : r->latency) {
        latency.push_back(static_cast<double>(l.latency_us) / 1000.0);
        latency_by_hops[l.hop_distance].push_back(static_cast<double>(l.latency_us) / 1000.0);
      }
      for (const auto& [c, count] : r->losses) {
        losses[std::string(to_string(c))] += count;
      }
      invariants += r->invariants.total();
      digests.push_back(std::to_string(r->trace_digest));
    }
    json s;
    s["strategy"] = key.first;
    s["payload"] = key.second;
    s["fragments"] = fragments.size() == 1 ? json(*fragments.begin()) : json(fragments);
    s["runs"] = group.size();
    s["sent"] = sent;
    s["delivered"] = delivered;
    s["pdr"] = describe(pdr);
    s["l2_retransmissions_per_node"] = describe(retrans);
    s["rbuf_full_events"] = describe(rbuf_full);
    s["pktbuf_high_water"] = describe(pktbuf);
    s["latency_ms"] = describe(latency);
    json by_hops = json::object();
    for (const auto& [h, v] : latency_by_hops) {
      by_hops[std::to_string(h)] = describe(v);
    }
    s["latency_ms_by_hops"] = by_hops;
    s["losses"] = losses;
    s["forwarder_rbuf_timeouts"] = timeouts;
    s["forwarder_rbuf_timeouts_first_missing"] = first_missing;
    s["first_missing_share"] =
        timeouts ? static_cast<double>(first_missing) / static_cast<double>(timeouts) : 0.0;
    s["invariant_violations"] = invariants;
    s["trace_digests"] = digests;
    out["series"].push_back(s);
  }
  return out;
}

ExperimentResult run_experiment(const Scenario& s, const std::filesystem::path& out_dir) {
  s.validate();
  const Topology topo = load_topology(s.topology);
  std::filesystem::create_directories(out_dir);
  ExperimentResult result;
  for (Strategy st : s.strategies) {
    for (std::size_t payload : s.payloads) {
      for (unsigned run = 0; run < s.runs(); ++run) {
        RunMetrics m = run_once(s, topo, st, payload, run);
        const auto path = out_dir / run_file_name(m);
        std::ofstream out(path, std::ios::binary);
        if (!out) {
          throw ConfigError("cannot write " + path.string());
        }
        write_run_csv(m, out);
        result.files.push_back(path);
        result.runs.push_back(std::move(m));
      }
    }
  }
  result.summary = aggregate(result.runs);
  std::ofstream agg(out_dir / "aggregate.json", std::ios::binary);
  agg << result.summary.dump(2) << '\n';
  return result;
}

std::vector<Table1Row> table1_check(const FrameModel& frame) {
  std::vector<Table1Row> rows;
  for (std::size_t i = 0; i < std::size(kTable1Payloads); ++i) {
    Table1Row r;
    r.payload = kTable1Payloads[i];
    r.expected = i + 1;
    r.fill_first = fragment_count(r.payload, frame, frag::FragPolicy::fill_first);
    r.minimal_first = fragment_count(r.payload, frame, frag::FragPolicy::minimal_first);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace fragsim
