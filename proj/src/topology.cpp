#include "fragsim/topology.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace fragsim {

double distance(const SiteNode& a, const SiteNode& b) {
  return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z);
}

namespace {

double round_mm(double v) { return std::round(v * 1000.0) / 1000.0; }

}  // namespace

SitePlan synthetic_site_plan(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x517e));
  SitePlan plan;
  NodeId next = 0;
  auto add = [&](double x, double y, double z) {
    plan.nodes.push_back({next++, round_mm(x), round_mm(y), round_mm(z)});
  };
  auto jitter = [&](double scale) { return (rng.unit() - 0.5) * scale; };

  // Dedicated room: 6 x 6 grid, 1.2 m pitch.
  for (int row = 0; row < 6; ++row) {
    for (int col = 0; col < 6; ++col) {
      add(col * 1.2 + jitter(0.2), row * 1.2 + jitter(0.2), 1.0);
    }
  }
  // Sink between the room and the offices.
  add(8.5, 3.0, 1.0);
  plan.sink = static_cast<NodeId>(next - 1);
  // Offices along a corridor on two floors, 2 or 3 nodes each.
  for (int floor = 0; floor < 2; ++floor) {
    for (int office = 0; office < 16; ++office) {
      const double x0 = 11.0 + office * 4.0;
      const double y0 = (office % 2 == 0) ? 0.5 : 5.5;
      const double z = 1.0 + floor * 3.2;
      const int count = 2 + static_cast<int>(rng.below(2));
      for (int k = 0; k < count; ++k) {
        add(x0 + k * 1.4 + jitter(0.6), y0 + jitter(1.0), z + jitter(0.4));
      }
    }
  }
  return plan;
}

TopologyParseError::TopologyParseError(std::size_t line, const std::string& what)
    : TopologyError("line " + std::to_string(line) + ": " + what), line_(line) {}

unsigned Topology::max_hops() const {
  unsigned m = 0;
  for (const auto& n : nodes) {
    m = std::max(m, n.hops);
  }
  return m;
}

std::vector<NodeId> Topology::children(NodeId id) const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].parent == id) {
      out.push_back(static_cast<NodeId>(i));
    }
  }
  return out;
}

bool Topology::has_bottleneck() const {
  std::vector<std::size_t> count(nodes.size(), 0);
  for (const auto& n : nodes) {
    if (n.parent != kNoNode) {
      ++count[n.parent];
    }
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (i != sink && count[i] >= 2) {
      return true;
    }
  }
  return false;
}

void Topology::validate() const {
  if (sink >= nodes.size()) {
    throw TopologyError("sink is not a node");
  }
  if (nodes[sink].parent != kNoNode || nodes[sink].hops != 0) {
    throw TopologyError("sink must have no next hop");
  }
  std::map<std::pair<NodeId, NodeId>, bool> in_range;
  for (const auto& l : links) {
    in_range[{std::min(l.src, l.dst), std::max(l.src, l.dst)}] = l.in_range;
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (i == sink) {
      continue;
    }
    const NodeId p = nodes[i].parent;
    if (p >= nodes.size()) {
      throw TopologyError("node " + std::to_string(i) + " has no valid next hop");
    }
    if (nodes[i].hops != nodes[p].hops + 1) {
      throw TopologyError("node " + std::to_string(i) + " has inconsistent hop count");
    }
    const auto key = std::pair{std::min<NodeId>(static_cast<NodeId>(i), p),
                               std::max<NodeId>(static_cast<NodeId>(i), p)};
    if (auto it = in_range.find(key); it == in_range.end() || !it->second) {
      throw TopologyError("route edge " + std::to_string(i) + "->" + std::to_string(p) +
                          " is not a link");
    }
  }
}

Topology build_topology(const SitePlan& plan, NodeId sink, std::uint64_t seed,
                        const BuildParams& params) {
  const std::size_t n = plan.nodes.size();
  std::size_t sink_index = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (plan.nodes[i].id == sink) {
      sink_index = i;
    }
  }
  if (sink_index == n) {
    throw TopologyError("sink not in site plan");
  }

  Rng rng(seed);
  std::vector<char> visited(n, 0);
  std::vector<std::size_t> order{sink_index};  // plan index per member
  std::vector<std::size_t> parent_of{n};
  std::vector<unsigned> hops_of{0};
  visited[sink_index] = 1;

  std::deque<std::size_t> frontier{0};  // member index
  while (!frontier.empty() && order.size() < params.members) {
    const std::size_t m = frontier.front();
    frontier.pop_front();
    const SiteNode& u = plan.nodes[order[m]];
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = distance(u, plan.nodes[i]);
      if (!visited[i] && d >= params.min_distance_m && d <= params.max_distance_m) {
        candidates.push_back(i);
      }
    }
    const std::size_t want =
        m == 0 ? params.sink_children
               : params.min_children +
                     rng.below(params.max_children - params.min_children + 1);
    // Partial Fisher-Yates: uniform sample without replacement.
    const std::size_t take =
        std::min({want, candidates.size(), params.members - order.size()});
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t j = k + rng.below(candidates.size() - k);
      std::swap(candidates[k], candidates[j]);
      const std::size_t c = candidates[k];
      visited[c] = 1;
      order.push_back(c);
      parent_of.push_back(m);
      hops_of.push_back(hops_of[m] + 1);
      frontier.push_back(order.size() - 1);
    }
  }
  if (order.size() < params.members) {
    throw TopologyError("site plan exhausted after " + std::to_string(order.size()) +
                        " members");
  }

  Topology topo;
  topo.sink = 0;
  for (std::size_t m = 0; m < order.size(); ++m) {
    SiteNode pos = plan.nodes[order[m]];
    Topology::Node node;
    node.site_id = pos.id;
    pos.id = static_cast<NodeId>(m);
    node.position = pos;
    node.parent = m == 0 ? kNoNode : static_cast<NodeId>(parent_of[m]);
    node.hops = hops_of[m];
    topo.nodes.push_back(node);
  }
  for (std::size_t a = 0; a < topo.nodes.size(); ++a) {
    for (std::size_t b = a + 1; b < topo.nodes.size(); ++b) {
      const double d = distance(topo.nodes[a].position, topo.nodes[b].position);
      if (d <= params.max_distance_m) {
        topo.links.push_back(
            {static_cast<NodeId>(a), static_cast<NodeId>(b), params.pdr(d), true});
      }
    }
  }
  return topo;
}

TopologySearch search_topology(const SitePlan& plan, NodeId sink, unsigned max_hops,
                               std::uint64_t first_seed, std::size_t max_attempts,
                               const BuildParams& params) {
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    const std::uint64_t seed = first_seed + attempt;
    try {
      Topology t = build_topology(plan, sink, seed, params);
      if (t.max_hops() == max_hops && t.has_bottleneck()) {
        return {seed, std::move(t), attempt + 1};
      }
    } catch (const TopologyError&) {
    }
  }
  throw TopologyError("no seed produced the requested topology");
}

// ---------------------------------------------------------------------------
// Text format
//
//   fragsim-topology 1
//   sink <id>
//   node <id> <site-id> <x> <y> <z>
//   route <id> <next-hop>
//   link <a> <b> <pdr>
//
// '#' starts a comment. Nodes must be listed in id order before routes and
// links that mention them.

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <typename T>
T parse_number(const std::string& token, std::size_t line, const char* what) {
  T v{};
  auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc{} || end != token.data() + token.size()) {
    throw TopologyParseError(line, std::string("bad ") + what + " '" + token + "'");
  }
  return v;
}

}  // namespace

void save_topology(const Topology& topo, std::ostream& out) {
  out << "fragsim-topology 1\n";
  out << "sink " << topo.sink << "\n";
  for (std::size_t i = 0; i < topo.nodes.size(); ++i) {
    const auto& n = topo.nodes[i];
    out << "node " << i << ' ' << n.site_id << ' ' << format_double(n.position.x) << ' '
        << format_double(n.position.y) << ' ' << format_double(n.position.z) << "\n";
  }
  for (std::size_t i = 0; i < topo.nodes.size(); ++i) {
    if (topo.nodes[i].parent != kNoNode) {
      out << "route " << i << ' ' << topo.nodes[i].parent << "\n";
    }
  }
  for (const auto& l : topo.links) {
    out << "link " << l.src << ' ' << l.dst << ' ' << format_double(l.pdr) << "\n";
  }
}

Topology load_topology(std::istream& in) {
  Topology topo;
  bool have_header = false;
  bool have_sink = false;
  std::string raw;
  std::size_t line = 0;
  auto node_ref = [&](const std::string& tok) {
    const auto id = parse_number<unsigned>(tok, line, "node id");
    if (id >= topo.nodes.size()) {
      throw TopologyParseError(line, "unknown node id " + tok);
    }
    return static_cast<NodeId>(id);
  };

  while (std::getline(in, raw)) {
    ++line;
    if (auto hash = raw.find('#'); hash != std::string::npos) {
      raw.erase(hash);
    }
    std::istringstream ls(raw);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) {
      tok.push_back(t);
    }
    if (tok.empty()) {
      continue;
    }
    if (!have_header) {
      if (tok.size() != 2 || tok[0] != "fragsim-topology" || tok[1] != "1") {
        throw TopologyParseError(line, "expected 'fragsim-topology 1'");
      }
      have_header = true;
      continue;
    }
    const std::string& kw = tok[0];
    auto expect = [&](std::size_t count) {
      if (tok.size() != count) {
        throw TopologyParseError(line, "'" + kw + "' takes " + std::to_string(count - 1) +
                                           " fields");
      }
    };
    if (kw == "sink") {
      expect(2);
      topo.sink = static_cast<NodeId>(parse_number<unsigned>(tok[1], line, "sink id"));
      have_sink = true;
    } else if (kw == "node") {
      expect(6);
      const auto id = parse_number<unsigned>(tok[1], line, "node id");
      if (id != topo.nodes.size()) {
        throw TopologyParseError(line, "node ids must be dense and in order");
      }
      Topology::Node n;
      n.site_id = static_cast<NodeId>(parse_number<unsigned>(tok[2], line, "site id"));
      n.position = {static_cast<NodeId>(id), parse_number<double>(tok[3], line, "x"),
                    parse_number<double>(tok[4], line, "y"),
                    parse_number<double>(tok[5], line, "z")};
      topo.nodes.push_back(n);
    } else if (kw == "route") {
      expect(3);
      const NodeId a = node_ref(tok[1]);
      const NodeId b = node_ref(tok[2]);
      if (topo.nodes[a].parent != kNoNode) {
        throw TopologyParseError(line, "duplicate route for node " + tok[1]);
      }
      topo.nodes[a].parent = b;
    } else if (kw == "link") {
      expect(4);
      const NodeId a = node_ref(tok[1]);
      const NodeId b = node_ref(tok[2]);
      const double pdr = parse_number<double>(tok[3], line, "pdr");
      if (a == b || !(pdr >= 0.0 && pdr <= 1.0)) {
        throw TopologyParseError(line, "invalid link");
      }
      topo.links.push_back({a, b, pdr, true});
    } else {
      throw TopologyParseError(line, "unknown record '" + kw + "'");
    }
  }
  if (!have_header || !have_sink) {
    throw TopologyParseError(line, "missing header or sink record");
  }
  if (topo.sink >= topo.nodes.size()) {
    throw TopologyParseError(line, "sink is not a node");
  }

  // Hop counts from the parent chain; a cycle never reaches the sink.
  for (std::size_t i = 0; i < topo.nodes.size(); ++i) {
    unsigned hops = 0;
    NodeId cur = static_cast<NodeId>(i);
    while (cur != topo.sink) {
      cur = topo.nodes[cur].parent;
      if (cur == kNoNode || ++hops > topo.nodes.size()) {
        throw TopologyError("node " + std::to_string(i) + " does not route to the sink");
      }
    }
    topo.nodes[i].hops = hops;
  }
  topo.validate();
  return topo;
}

void save_topology(const Topology& topo, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw TopologyError("cannot write " + path.string());
  }
  save_topology(topo, out);
}

Topology load_topology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw TopologyError("cannot read " + path.string());
  }
  return load_topology(in);
}

}  // namespace fragsim
