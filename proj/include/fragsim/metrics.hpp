#pragma once

// Per-run counters, samples and invariant checks.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fragsim/types.hpp"

namespace fragsim {

enum class LossCause { rbuf_full, rbuf_timeout, pktbuf_full, queue_drop, retrans_exhausted };

inline constexpr LossCause kAllLossCauses[] = {LossCause::rbuf_full, LossCause::rbuf_timeout,
                                               LossCause::pktbuf_full, LossCause::queue_drop,
                                               LossCause::retrans_exhausted};

std::string_view to_string(LossCause cause);
std::optional<LossCause> parse_loss_cause(std::string_view s);

struct NodeStats {
  NodeId id = kNoNode;
  unsigned hop_distance = 0;
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t tx_attempts = 0;
  std::uint64_t l2_retransmissions = 0;
  std::uint64_t busy_losses = 0;
  std::uint64_t collisions = 0;
  std::uint64_t queue_drops = 0;
  std::uint64_t csma_failures = 0;
  std::uint64_t rbuf_full = 0;
  std::uint64_t rbuf_timeouts = 0;
  std::uint64_t rbuf_timeouts_first_missing = 0;
  std::uint64_t vrb_full = 0;
  std::uint64_t vrb_expired = 0;
  std::uint64_t pktbuf_full = 0;
  std::uint64_t forwarded_fragments = 0;
  std::uint64_t fallback_fragments = 0;
  std::size_t pktbuf_high_water = 0;
  std::size_t mem_high_water = 0;
  std::size_t rbuf_high_water = 0;
};

struct LatencySample {
  NodeId source = kNoNode;
  unsigned hop_distance = 0;
  std::int64_t latency_us = 0;
};

struct RbufFullEvent {
  std::int64_t time_us = 0;
  NodeId node = kNoNode;
  std::size_t pktbuf_used = 0;
};

struct InvariantReport {
  std::uint64_t path_violations = 0;
  std::uint64_t byte_mismatches = 0;
  std::uint64_t conservation_violations = 0;
  std::uint64_t arena_leaks = 0;
  std::uint64_t delivered_after_loss = 0;
  std::uint64_t total() const {
    return path_violations + byte_mismatches + conservation_violations + arena_leaks +
           delivered_after_loss;
  }
};

/// Everything one simulation run produces.
struct RunMetrics {
  std::string scenario;
  std::string strategy;
  std::size_t payload = 0;
  std::size_t fragments = 0;
  unsigned run = 0;
  std::uint64_t seed = 0;

  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::map<LossCause, std::uint64_t> losses;
  std::vector<LatencySample> latency;
  std::vector<NodeStats> nodes;
  std::vector<RbufFullEvent> rbuf_full_events;
  InvariantReport invariants;
  std::uint64_t trace_digest = 0;
  std::uint64_t events = 0;
  std::int64_t end_time_us = 0;

  double pdr() const { return sent == 0 ? 0.0 : static_cast<double>(delivered) / sent; }
};

/// Collects datagram fates during a run. Every sent datagram ends either
/// delivered or lost with exactly one cause (the first loss observed).
class MetricsCollector {
 public:
  void datagram_sent(DatagramId id, unsigned hop_distance, SimTime t, std::uint64_t content_hash);
  /// Returns false when the datagram was unknown or already resolved.
  bool datagram_delivered(DatagramId id, SimTime t, std::uint64_t content_hash, bool path_ok);
  void datagram_lost(DatagramId id, LossCause cause);

  void rbuf_full(NodeId node, SimTime t, std::size_t pktbuf_used);

  /// Folds datagram fates into `out` and checks loss-cause conservation.
  void finish(RunMetrics& out) const;

 private:
  struct Fate {
    unsigned hop_distance = 0;
    SimTime sent_at{};
    std::uint64_t hash = 0;
    bool delivered = false;
    std::optional<LossCause> cause;
  };
  std::unordered_map<DatagramId, Fate> fates_;
  std::vector<DatagramId> order_;
  std::vector<LatencySample> latency_;
  std::vector<RbufFullEvent> rbuf_full_;
  std::uint64_t path_violations_ = 0;
  std::uint64_t byte_mismatches_ = 0;
  std::uint64_t delivered_after_loss_ = 0;
};

/// FNV-1a over a byte range.
std::uint64_t content_hash(const std::uint8_t* data, std::size_t n);

}  // namespace fragsim
