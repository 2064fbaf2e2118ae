#include "fragsim/metrics.hpp"

namespace fragsim {

std::string_view to_string(LossCause cause) {
  switch (cause) {
    case LossCause::rbuf_full: return "rbuf_full";
    case LossCause::rbuf_timeout: return "rbuf_timeout";
    case LossCause::pktbuf_full: return "pktbuf_full";
    case LossCause::queue_drop: return "queue_drop";
    case LossCause::retrans_exhausted: return "retrans_exhausted";
  }
  return "unknown";
}

std::optional<LossCause> parse_loss_cause(std::string_view s) {
  for (LossCause c : kAllLossCauses) {
    if (to_string(c) == s) {
      return c;
    }
  }
  return std::nullopt;
}

std::uint64_t content_hash(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void MetricsCollector::datagram_sent(DatagramId id, unsigned hop_distance, SimTime t,
                                     std::uint64_t hash) {
  fates_[id] = Fate{hop_distance, t, hash, false, std::nullopt};
  order_.push_back(id);
}

bool MetricsCollector::datagram_delivered(DatagramId id, SimTime t, std::uint64_t hash,
                                          bool path_ok) {
  auto it = fates_.find(id);
  if (it == fates_.end() || it->second.delivered) {
    return false;
  }
  Fate& f = it->second;
  if (f.hash != hash) {
    ++byte_mismatches_;
  }
  if (!path_ok) {
    ++path_violations_;
  }
  if (f.cause) {
    // Reassembly succeeded after a loss was attributed: bookkeeping error.
    ++delivered_after_loss_;
    return false;
  }
  f.delivered = true;
  latency_.push_back({datagram_source(id), f.hop_distance, (t - f.sent_at).count()});
  return true;
}

void MetricsCollector::datagram_lost(DatagramId id, LossCause cause) {
  auto it = fates_.find(id);
  if (it == fates_.end() || it->second.delivered || it->second.cause) {
    return;
  }
  it->second.cause = cause;
}

void MetricsCollector::rbuf_full(NodeId node, SimTime t, std::size_t pktbuf_used) {
  rbuf_full_.push_back({t.count(), node, pktbuf_used});
}

void MetricsCollector::finish(RunMetrics& out) const {
  out.sent = order_.size();
  out.delivered = 0;
  out.losses.clear();
  for (LossCause c : kAllLossCauses) {
    out.losses[c] = 0;
  }
  std::uint64_t unresolved = 0;
  for (DatagramId id : order_) {
    const Fate& f = fates_.at(id);
    if (f.delivered) {
      ++out.delivered;
    } else if (f.cause) {
      ++out.losses[*f.cause];
    } else {
      ++unresolved;
    }
  }
  out.latency = latency_;
  out.rbuf_full_events = rbuf_full_;
  out.invariants.path_violations = path_violations_;
  out.invariants.byte_mismatches = byte_mismatches_;
  out.invariants.delivered_after_loss = delivered_after_loss_;
  out.invariants.conservation_violations = unresolved;
}

}  // namespace fragsim
