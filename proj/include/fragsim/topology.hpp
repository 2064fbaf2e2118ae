#pragma once

// Site plans, BFS-sampled experiment topologies and their text format.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "fragsim/sim_core.hpp"
#include "fragsim/types.hpp"

namespace fragsim {

struct SiteNode {
  NodeId id = kNoNode;
  double x = 0;
  double y = 0;
  double z = 0;
  bool operator==(const SiteNode&) const = default;
};

double distance(const SiteNode& a, const SiteNode& b);

struct SitePlan {
  std::vector<SiteNode> nodes;
  /// Suggested sink: between the dense room and the office strip.
  NodeId sink = kNoNode;
};

/// Dense grid room next to a sparse strip of offices over two floors.
/// Coordinates are jittered by `seed`.
SitePlan synthetic_site_plan(std::uint64_t seed = 1);

class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parse error carrying the 1-based line number.
class TopologyParseError : public TopologyError {
 public:
  TopologyParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Experiment network. Node ids are dense (index == id) and the sink is
/// always node 0; `site_id` keeps the plan identity.
struct Topology {
  struct Node {
    SiteNode position;
    NodeId site_id = kNoNode;
    NodeId parent = kNoNode;  // next hop toward the sink
    unsigned hops = 0;
    bool operator==(const Node&) const = default;
  };

  NodeId sink = 0;
  std::vector<Node> nodes;
  /// Undirected in-range pairs (src < dst) with their delivery ratio.
  std::vector<LinkModel> links;

  std::size_t size() const { return nodes.size(); }
  unsigned max_hops() const;
  std::vector<NodeId> children(NodeId id) const;
  /// Some forwarder other than the sink has two or more children.
  bool has_bottleneck() const;
  /// Throws TopologyError unless parents form a tree rooted at the sink with
  /// consistent hop counts and every tree edge is an in-range link.
  void validate() const;

  bool operator==(const Topology&) const = default;
};

struct BuildParams {
  std::size_t members = 50;  // including the sink
  double min_distance_m = 2.2;
  double max_distance_m = 6.6;
  std::size_t sink_children = 2;
  std::size_t min_children = 1;
  std::size_t max_children = 3;
  PdrCurve pdr;
};

/// Breadth-first sampled tree from `sink` over `plan`. Throws TopologyError
/// when the candidates run out before enough members were found.
Topology build_topology(const SitePlan& plan, NodeId sink, std::uint64_t seed,
                        const BuildParams& params = {});

struct TopologySearch {
  std::uint64_t seed = 0;
  Topology topology;
  std::size_t attempts = 0;
};

/// Tries seeds from `first_seed` until the tree has exactly `max_hops` hops
/// and a bottleneck.
TopologySearch search_topology(const SitePlan& plan, NodeId sink, unsigned max_hops,
                               std::uint64_t first_seed, std::size_t max_attempts = 100000,
                               const BuildParams& params = {});

void save_topology(const Topology& topo, std::ostream& out);
Topology load_topology(std::istream& in);
void save_topology(const Topology& topo, const std::filesystem::path& path);
Topology load_topology(const std::filesystem::path& path);

}  // namespace fragsim
