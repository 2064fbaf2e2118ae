#pragma once

// Per-node 6LoWPAN layer (HWR, FF, FF-queued) and the network that wires
// nodes, MAC and medium into one simulation run.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "fragsim/buffers.hpp"
#include "fragsim/frag_codec.hpp"
#include "fragsim/link_mac.hpp"
#include "fragsim/metrics.hpp"
#include "fragsim/sim_core.hpp"
#include "fragsim/vrb.hpp"

namespace fragsim {

enum class Strategy { hwr, ff, ff_queued };

std::string_view to_string(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view s);

enum class Role { source, forwarder, sink };

struct NodeConfig {
  NodeId id = kNoNode;
  Role role = Role::forwarder;
  NodeId next_hop = kNoNode;  // toward the sink; none for the sink
  Strategy strategy = Strategy::hwr;
  std::size_t rbuf_entries = 1;
  std::size_t vrb_entries = 16;
  unsigned hop_distance = 0;
};

struct StackParams {
  FrameModel frame;
  SimTime processing_delay = 2ms;
  SimTime reassembly_timeout = 10s;
  std::size_t frag_buffer_slots = 64;
  std::size_t arena_bytes = MemoryModel::kDefaultArenaCapacity;
  /// Bytes the compression header grows by at every forwarding hop.
  std::size_t compression_growth = 0;
  /// A first fragment is decompressed inside a reassembly entry before its
  /// VRB entry replaces it, so a full reassembly buffer drops it.
  bool first_fragment_needs_rbuf = true;
};

struct AppFlow {
  std::size_t payload_size = 80;
  SimTime interval_lo = 5s;
  SimTime interval_hi = 15s;
  unsigned packet_count = 100;
};

/// Uncompressed IPv6 + UDP datagram from `src` to `dst` with a payload
/// derived deterministically from (src, seq).
std::vector<std::uint8_t> make_datagram(NodeId src, NodeId dst, std::uint32_t seq,
                                        std::size_t payload_size);

class Node {
 public:
  Node(const NodeConfig& config, const StackParams& params, Simulator& sim, Medium& medium,
       const MacParams& mac_params, MetricsCollector& metrics, NodeId sink, std::uint64_t seed);
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  /// Sends one datagram with a `payload_size`-byte UDP payload to the sink.
  void app_send(std::size_t payload_size);
  /// Schedules `flow.packet_count` sends at uniformly drawn intervals.
  void start_app(const AppFlow& flow);

  /// Expires reassembly and VRB entries past their deadline.
  void gc();
  /// Nothing buffered, queued or scheduled by this node's stack.
  bool quiescent() const;

  NodeStats stats() const;
  const NodeConfig& config() const { return config_; }
  Mac& mac() { return mac_; }
  const Mac& mac() const { return mac_; }
  const ReassemblyBuffer& rbuf() const { return rbuf_; }
  const VirtualReassemblyBuffer& vrb() const { return vrb_; }
  const PacketArena& arena() const { return arena_; }
  const TagRegistry& tags() const { return tags_; }
  /// Datagram ids in the order their frames were handed to the MAC
  /// (consecutive repeats collapsed).
  const std::vector<DatagramId>& transmit_order() const { return transmit_order_; }

 private:
  void on_frame(const Frame& frame);
  void reassemble(const DatagramKey& key, const frag::Fragment& f, const Provenance& prov);
  void fragment_forward(const DatagramKey& key, frag::Fragment f, const Provenance& prov);
  void emit(VrbEntry& entry, frag::Fragment f, const Provenance& prov);
  void flush_if_complete(VrbEntry& entry);
  /// Fragments and transmits a whole datagram toward the next hop (local
  /// send, HWR forwarding, FF fallback after reassembly).
  void send_datagram(const std::vector<std::uint8_t>& datagram, const Provenance& prov);
  void transmit(const frag::Fragment& f, const Provenance& prov, ArenaLease lease,
                std::function<void(TxStatus)> after = {});
  void deliver(const std::vector<std::uint8_t>& datagram, const Provenance& prov, bool path_ok);
  void drop_rbuf_full(const Provenance& prov);
  void handle_expired(const std::vector<ExpiredEntry>& expired);
  void expire_vrb();
  void lose(DatagramId id, LossCause cause);
  void note_memory();
  frag::CompressionHeader compression_for(const std::vector<std::uint8_t>& datagram,
                                          const Provenance& prov) const;
  frag::FragPolicy policy() const;

  NodeConfig config_;
  StackParams params_;
  NodeId sink_;
  Simulator& sim_;
  MetricsCollector& metrics_;
  Rng rng_;
  Mac mac_;
  PacketArena arena_;
  ReassemblyBuffer rbuf_;
  TagRegistry tags_;
  VirtualReassemblyBuffer vrb_;
  FragmentationBuffer fragbuf_;

  std::uint32_t next_seq_ = 0;
  unsigned sends_remaining_ = 0;
  std::size_t processing_ = 0;
  NodeStats stats_;
  std::vector<DatagramId> transmit_order_;
};

struct NetworkSpec {
  std::vector<NodeConfig> nodes;  // nodes[i].id == i
  std::vector<LinkModel> links;
  NodeId sink = 0;
  StackParams stack;
  MacParams mac;
  std::uint64_t seed = 1;
  SimTime gc_interval = 1s;
  bool interference = true;
};

class Network {
 public:
  explicit Network(const NetworkSpec& spec);
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  void start_traffic(const AppFlow& flow);
  /// Runs until no events remain, expiring buffers every gc interval.
  void run();
  /// Per-node stats, datagram fates and invariant checks for this run.
  RunMetrics collect() const;

  Simulator& sim() { return sim_; }
  Medium& medium() { return medium_; }
  Node& node(NodeId id) { return *nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }
  MetricsCollector& metrics() { return metrics_; }

 private:
  void gc_tick();

  NetworkSpec spec_;
  Simulator sim_;
  Medium medium_;
  MetricsCollector metrics_;
  std::vector<std::unique_ptr<Node>> nodes_;
};

}  // namespace fragsim
