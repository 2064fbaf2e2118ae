#pragma once

// Deterministic discrete-event engine and the shared radio medium.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string_view>
#include <vector>

#include "fragsim/buffers.hpp"
#include "fragsim/frag_codec.hpp"
#include "fragsim/rng.hpp"
#include "fragsim/types.hpp"

namespace fragsim {

using namespace std::chrono_literals;

// ---------------------------------------------------------------------------
// Trace

enum class TraceKind : std::uint8_t {
  app_send,
  tx_start,
  tx_end,
  ack,
  no_ack,
  rx,
  busy_loss,
  collision,
  queue_drop,
  retrans_exhausted,
  csma_fail,
  deliver,
  forward,
  rbuf_full,
  rbuf_timeout,
  vrb_full,
  vrb_expired,
  pktbuf_full,
};

std::string_view to_string(TraceKind kind);

/// Running FNV-1a digest over structured trace records, with an optional
/// text dump (one line per record: time node kind a b).
class Tracer {
 public:
  void record(SimTime t, NodeId node, TraceKind kind, std::uint64_t a = 0, std::uint64_t b = 0);
  void set_sink(std::ostream* out) { sink_ = out; }
  std::uint64_t digest() const { return digest_; }
  std::uint64_t records() const { return records_; }

 private:
  void mix(std::uint64_t v);
  std::uint64_t digest_ = 0xcbf29ce484222325ULL;
  std::uint64_t records_ = 0;
  std::ostream* sink_ = nullptr;
};

// ---------------------------------------------------------------------------
// Event engine

class Simulator {
 public:
  using Action = std::function<void()>;

  SimTime now() const { return now_; }

  /// Schedules `action` at absolute time `t`; throws std::logic_error if t < now.
  void at(SimTime t, Action action);
  void after(SimTime delay, Action action) { at(now_ + delay, std::move(action)); }

  /// Executes the next event; false when none is pending.
  bool step();
  /// Executes events in (time, seq) order until none remain.
  std::uint64_t run_until_idle();

  std::size_t pending() const { return heap_.size(); }
  std::uint64_t executed() const { return executed_; }
  Tracer& trace() { return trace_; }
  const Tracer& trace() const { return trace_; }

 private:
  struct Event {
    SimTime time;
    std::uint64_t seq;
    Action action;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  SimTime now_{0};
  std::uint64_t next_seq_ = 0;
  std::uint64_t executed_ = 0;
  std::vector<Event> heap_;
  Tracer trace_;
};

// ---------------------------------------------------------------------------
// Frames

/// IEEE 802.15.4-like frame model. Defaults: 127-byte PSDU, 25 bytes of MAC
/// header + FCS (EUI-64 addressing, no PAN-ID compression), leaving a
/// 102-byte SDU; compressed IPv6+UDP header of 24 bytes standing for the 48
/// uncompressed bytes.
struct FrameModel {
  std::size_t max_psdu = 127;
  std::size_t mac_overhead = 25;
  std::size_t phy_overhead = 6;
  std::size_t compression_bytes = 24;
  std::size_t uncompressed_header = 48;  // IPv6 (40) + UDP (8)

  std::size_t sdu() const { return max_psdu - mac_overhead; }
};

struct Frame {
  NodeId src = kNoNode;
  NodeId dst = kNoNode;
  /// 6LoWPAN payload as sent: fragment header, compression header, data.
  std::vector<std::uint8_t> bytes;
  /// Decompression context for first fragments (not counted on the wire).
  std::optional<frag::CompressionHeader> context;
  Provenance provenance;

  std::size_t psdu_length(const FrameModel& model) const { return model.mac_overhead + bytes.size(); }
};

/// Time on air at 250 kbit/s for a PSDU of `psdu_length` bytes plus PHY overhead.
constexpr SimTime airtime(std::size_t psdu_length, std::size_t phy_overhead = 6) {
  return SimTime{static_cast<std::int64_t>((phy_overhead + psdu_length) * 32)};
}

// ---------------------------------------------------------------------------
// Medium

struct LinkModel {
  NodeId src = kNoNode;
  NodeId dst = kNoNode;
  double pdr = 0.0;
  bool in_range = false;
  bool operator==(const LinkModel&) const = default;
};

/// Piecewise-linear distance -> delivery probability table.
struct PdrCurve {
  double full_until_m = 2.2;
  double edge_m = 6.6;
  double edge_pdr = 0.975;

  double operator()(double meters) const;
};

struct Transmission {
  std::uint64_t id = 0;
  NodeId sender = kNoNode;
  NodeId destination = kNoNode;
  SimTime start{};
  SimTime end{};
  std::shared_ptr<const Frame> frame;
};

class RadioListener {
 public:
  virtual ~RadioListener() = default;
  /// An in-range transmission started. `audible` is the link delivery draw.
  virtual void on_signal_start(const Transmission& tx, bool audible) = 0;
  /// Transmission ended; return true if received intact (acknowledged).
  virtual bool on_signal_end(const Transmission& tx) = 0;
  /// Interference-free delivery at the end of `tx`; return true if accepted.
  virtual bool on_clean_frame(const Transmission& tx, bool audible) = 0;
};

class Medium {
 public:
  Medium(Simulator& sim, std::size_t node_count, std::uint64_t seed);

  /// Symmetric link; nodes become mutually in range.
  void set_link(NodeId a, NodeId b, double pdr);
  void attach(NodeId node, RadioListener* listener);

  bool in_range(NodeId a, NodeId b) const;
  double pdr(NodeId a, NodeId b) const;
  const std::vector<NodeId>& neighbors(NodeId n) const { return neighbors_.at(n); }
  std::vector<LinkModel> links() const;

  /// Clear channel assessment: any in-range node transmitting right now.
  bool channel_busy(NodeId at) const;

  /// Puts `frame` on the air for `duration`. Every in-range node gets an
  /// independent audibility draw; `on_end(acked)` fires at the end.
  std::uint64_t transmit(NodeId sender, std::shared_ptr<const Frame> frame, SimTime duration,
                         std::function<void(bool)> on_end);

  std::size_t node_count() const { return listeners_.size(); }

  /// Without interference only the addressee hears a frame, CCA sees only
  /// the node's own transmission and receptions never collide.
  void set_interference(bool on) { interference_ = on; }
  bool interference() const { return interference_; }

 private:
  Simulator& sim_;
  Rng rng_;
  std::vector<RadioListener*> listeners_;
  std::vector<std::vector<NodeId>> neighbors_;
  std::vector<double> pdr_;      // dense node_count^2
  std::vector<char> in_range_;  // dense node_count^2
  std::vector<Transmission> active_;
  std::uint64_t next_id_ = 1;
  bool interference_ = true;
};

}  // namespace fragsim
