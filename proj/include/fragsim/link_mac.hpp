#pragma once

// Thin CSMA/CA MAC with acknowledgements, bounded retransmissions, a
// single-frame transceiver and a busy queue with a 5 ms retry bound.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "fragsim/buffers.hpp"
#include "fragsim/rng.hpp"
#include "fragsim/sim_core.hpp"

namespace fragsim {

struct MacParams {
  int max_retransmissions = 3;
  int min_be = 3;  // macMinBE
  int max_be = 5;  // macMaxBE
  int max_csma_backoffs = 4;  // macMaxCSMABackoffs
  SimTime unit_backoff = 320us;  // 20 symbols
  SimTime cca_duration = 128us;  // 8 symbols
  SimTime turnaround = 192us;  // 12 symbols
  SimTime ack_wait = 864us;  // macAckWaitDuration, 54 symbols
  std::size_t queue_capacity = 64;
  SimTime busy_retry = 5ms;
  /// Radio stays in its transmit state from the first backoff until the
  /// frame is acknowledged or given up; otherwise only while on air.
  bool busy_through_csma = true;
};

enum class TxStatus { acked, retrans_exhausted, queue_drop };

enum class TransceiverState { idle, tx_busy, rx_busy };

struct MacCounters {
  std::uint64_t tx_attempts = 0;
  std::uint64_t first_attempts = 0;
  std::uint64_t l2_retransmissions = 0;
  std::uint64_t acked = 0;
  std::uint64_t retrans_exhausted = 0;
  std::uint64_t csma_failures = 0;
  std::uint64_t queue_drops = 0;
  std::uint64_t busy_losses = 0;
  std::uint64_t collisions = 0;
  std::uint64_t link_losses = 0;
  std::uint64_t frames_received = 0;
};

/// One transceiver busy period [start, end).
struct BusySegment {
  TransceiverState state;
  SimTime start;
  SimTime end;
};

class Mac : public RadioListener {
 public:
  using DoneHandler = std::function<void(TxStatus)>;
  using ReceiveHandler = std::function<void(std::shared_ptr<const Frame>)>;

  Mac(NodeId id, Simulator& sim, Medium& medium, const MacParams& params,
      const FrameModel& frames, std::uint64_t seed);
  Mac(const Mac&) = delete;
  Mac& operator=(const Mac&) = delete;

  /// Queues `frame` (and the packet-buffer bytes backing it) for
  /// transmission. On overflow the frame is dropped: `done(queue_drop)` runs
  /// before this returns false.
  bool send(std::shared_ptr<const Frame> frame, DoneHandler done, ArenaLease lease = {});

  void set_receive_handler(ReceiveHandler handler) { on_receive_ = std::move(handler); }
  void record_timeline(bool on) { record_timeline_ = on; }

  NodeId id() const { return id_; }
  TransceiverState state() const { return state_; }
  bool busy() const { return state_ != TransceiverState::idle || active_.has_value(); }
  std::size_t queued() const { return queue_.size(); }
  const MacCounters& counters() const { return counters_; }
  const std::vector<BusySegment>& timeline() const { return timeline_; }

  void on_signal_start(const Transmission& tx, bool audible) override;
  bool on_signal_end(const Transmission& tx) override;
  bool on_clean_frame(const Transmission& tx, bool audible) override;

 private:
  struct Pending {
    std::shared_ptr<const Frame> frame;
    DoneHandler done;
    ArenaLease lease;
  };

  void try_start();
  void schedule_busy_retry();
  void begin_attempt();
  void backoff();
  void clear_channel_assessment();
  void transmit();
  void on_tx_end(bool acked);
  void attempt_failed();
  void finish(TxStatus status);
  void set_state(TransceiverState s);

  NodeId id_;
  Simulator& sim_;
  Medium& medium_;
  MacParams params_;
  FrameModel frames_;
  Rng rng_;

  std::deque<Pending> queue_;
  std::optional<Pending> active_;
  int attempt_ = 0;
  int backoffs_ = 0;
  int backoff_exponent_ = 0;
  bool retry_pending_ = false;

  TransceiverState state_ = TransceiverState::idle;
  SimTime state_since_{0};
  SimTime rx_until_{0};
  std::uint64_t receiving_ = 0;
  bool rx_corrupted_ = false;
  std::vector<std::uint64_t> signals_;  // in-range transmissions on the air

  MacCounters counters_;
  bool record_timeline_ = false;
  std::vector<BusySegment> timeline_;
  ReceiveHandler on_receive_;
};

}  // namespace fragsim
