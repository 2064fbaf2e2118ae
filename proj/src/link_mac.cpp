#include "fragsim/link_mac.hpp"

#include <algorithm>
#include <stdexcept>

namespace fragsim {

Mac::Mac(NodeId id, Simulator& sim, Medium& medium, const MacParams& params,
         const FrameModel& frames, std::uint64_t seed)
    : id_(id), sim_(sim), medium_(medium), params_(params), frames_(frames), rng_(seed) {
  medium_.attach(id_, this);
}

bool Mac::send(std::shared_ptr<const Frame> frame, DoneHandler done, ArenaLease lease) {
  if (frame->psdu_length(frames_) > frames_.max_psdu) {
    throw std::invalid_argument("frame exceeds maximum PSDU");
  }
  if (queue_.size() >= params_.queue_capacity) {
    ++counters_.queue_drops;
    sim_.trace().record(sim_.now(), id_, TraceKind::queue_drop, frame->provenance.datagram);
    if (done) {
      done(TxStatus::queue_drop);
    }
    return false;
  }
  queue_.push_back(Pending{std::move(frame), std::move(done), std::move(lease)});
  try_start();
  return true;
}

void Mac::set_state(TransceiverState s) {
  if (s == state_) {
    return;
  }
  if (record_timeline_ && state_ != TransceiverState::idle) {
    timeline_.push_back({state_, state_since_, sim_.now()});
  }
  state_ = s;
  state_since_ = sim_.now();
}

void Mac::try_start() {
  if (active_ || queue_.empty()) {
    return;
  }
  if (state_ != TransceiverState::idle) {
    schedule_busy_retry();
    return;
  }
  active_ = std::move(queue_.front());
  queue_.pop_front();
  attempt_ = 0;
  if (params_.busy_through_csma) {
    set_state(TransceiverState::tx_busy);
  }
  begin_attempt();
}

void Mac::schedule_busy_retry() {
  if (retry_pending_) {
    return;
  }
  retry_pending_ = true;
  const SimTime when = std::min(std::max(rx_until_, sim_.now()), sim_.now() + params_.busy_retry);
  sim_.at(when, [this] {
    retry_pending_ = false;
    try_start();
  });
}

void Mac::begin_attempt() {
  ++counters_.tx_attempts;
  if (attempt_ == 0) {
    ++counters_.first_attempts;
  } else {
    ++counters_.l2_retransmissions;
  }
  backoffs_ = 0;
  backoff_exponent_ = params_.min_be;
  backoff();
}

void Mac::backoff() {
  const auto periods = static_cast<std::int64_t>(rng_.below(std::uint64_t{1} << backoff_exponent_));
  sim_.after(params_.unit_backoff * periods, [this] {
    sim_.after(params_.cca_duration, [this] { clear_channel_assessment(); });
  });
}

void Mac::clear_channel_assessment() {
  if (!medium_.channel_busy(id_)) {
    sim_.after(params_.turnaround, [this] { transmit(); });
    return;
  }
  ++backoffs_;
  backoff_exponent_ = std::min(backoff_exponent_ + 1, params_.max_be);
  if (backoffs_ > params_.max_csma_backoffs) {
    // Channel access failure consumes the attempt.
    ++counters_.csma_failures;
    sim_.trace().record(sim_.now(), id_, TraceKind::csma_fail, active_->frame->provenance.datagram);
    attempt_failed();
    return;
  }
  backoff();
}

void Mac::transmit() {
  if (state_ == TransceiverState::rx_busy) {
    // Switching to transmit drops the frame being received.
    ++counters_.busy_losses;
    sim_.trace().record(sim_.now(), id_, TraceKind::busy_loss, 0, id_);
    receiving_ = 0;
  }
  set_state(TransceiverState::tx_busy);
  const auto& frame = active_->frame;
  sim_.trace().record(sim_.now(), id_, TraceKind::tx_start, frame->provenance.datagram,
                      static_cast<std::uint64_t>(frame->dst) << 8 | static_cast<unsigned>(attempt_));
  medium_.transmit(id_, frame, airtime(frame->psdu_length(frames_), frames_.phy_overhead),
                   [this](bool acked) { on_tx_end(acked); });
}

void Mac::on_tx_end(bool acked) {
  if (!params_.busy_through_csma) {
    set_state(TransceiverState::idle);
  }
  if (acked) {
    sim_.trace().record(sim_.now(), id_, TraceKind::ack, active_->frame->provenance.datagram);
    finish(TxStatus::acked);
    return;
  }
  sim_.trace().record(sim_.now(), id_, TraceKind::no_ack, active_->frame->provenance.datagram);
  sim_.after(params_.ack_wait, [this] { attempt_failed(); });
}

void Mac::attempt_failed() {
  if (attempt_ >= params_.max_retransmissions) {
    sim_.trace().record(sim_.now(), id_, TraceKind::retrans_exhausted,
                        active_->frame->provenance.datagram);
    finish(TxStatus::retrans_exhausted);
    return;
  }
  ++attempt_;
  begin_attempt();
}

void Mac::finish(TxStatus status) {
  if (status == TxStatus::acked) {
    ++counters_.acked;
  } else {
    ++counters_.retrans_exhausted;
  }
  Pending done = std::move(*active_);
  active_.reset();
  set_state(TransceiverState::idle);
  if (done.done) {
    done.done(status);
  }
  done.lease.reset();
  try_start();
}

void Mac::on_signal_start(const Transmission& tx, bool audible) {
  signals_.push_back(tx.id);
  if (signals_.size() > 1 && receiving_ != 0) {
    rx_corrupted_ = true;
  }
  if (tx.destination != id_) {
    return;
  }
  if (!audible) {
    ++counters_.link_losses;
    return;
  }
  if (state_ != TransceiverState::idle) {
    ++counters_.busy_losses;
    sim_.trace().record(sim_.now(), id_, TraceKind::busy_loss, tx.frame->provenance.datagram,
                        tx.sender);
    return;
  }
  if (signals_.size() > 1) {
    ++counters_.collisions;
    sim_.trace().record(sim_.now(), id_, TraceKind::collision, tx.frame->provenance.datagram,
                        tx.sender);
    return;
  }
  receiving_ = tx.id;
  rx_corrupted_ = false;
  rx_until_ = tx.end;
  set_state(TransceiverState::rx_busy);
}

bool Mac::on_signal_end(const Transmission& tx) {
  std::erase(signals_, tx.id);
  if (receiving_ != tx.id) {
    return false;
  }
  receiving_ = 0;
  set_state(TransceiverState::idle);
  const bool intact = !rx_corrupted_;
  if (intact) {
    ++counters_.frames_received;
    sim_.trace().record(sim_.now(), id_, TraceKind::rx, tx.frame->provenance.datagram, tx.sender);
    if (on_receive_) {
      on_receive_(tx.frame);
    }
  } else {
    ++counters_.collisions;
    sim_.trace().record(sim_.now(), id_, TraceKind::collision, tx.frame->provenance.datagram,
                        tx.sender);
  }
  try_start();
  return intact;
}

bool Mac::on_clean_frame(const Transmission& tx, bool audible) {
  if (!audible) {
    ++counters_.link_losses;
    return false;
  }
  ++counters_.frames_received;
  sim_.trace().record(sim_.now(), id_, TraceKind::rx, tx.frame->provenance.datagram, tx.sender);
  if (on_receive_) {
    on_receive_(tx.frame);
  }
  return true;
}

}  // namespace fragsim
