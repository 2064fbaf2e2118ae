#include "fragsim/sim_core.hpp"

#include <algorithm>
#include <stdexcept>

namespace fragsim {

std::string_view to_string(TraceKind kind) {
  switch (kind) {
    case TraceKind::app_send: return "app_send";
    case TraceKind::tx_start: return "tx_start";
    case TraceKind::tx_end: return "tx_end";
    case TraceKind::ack: return "ack";
    case TraceKind::no_ack: return "no_ack";
    case TraceKind::rx: return "rx";
    case TraceKind::busy_loss: return "busy_loss";
    case TraceKind::collision: return "collision";
    case TraceKind::queue_drop: return "queue_drop";
    case TraceKind::retrans_exhausted: return "retrans_exhausted";
    case TraceKind::csma_fail: return "csma_fail";
    case TraceKind::deliver: return "deliver";
    case TraceKind::forward: return "forward";
    case TraceKind::rbuf_full: return "rbuf_full";
    case TraceKind::rbuf_timeout: return "rbuf_timeout";
    case TraceKind::vrb_full: return "vrb_full";
    case TraceKind::vrb_expired: return "vrb_expired";
    case TraceKind::pktbuf_full: return "pktbuf_full";
  }
  return "unknown";
}

// --- Tracer -----------------------------------------------------------------

void Tracer::mix(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    digest_ ^= (v >> (8 * i)) & 0xFF;
    digest_ *= 0x100000001b3ULL;
  }
}

void Tracer::record(SimTime t, NodeId node, TraceKind kind, std::uint64_t a, std::uint64_t b) {
  mix(static_cast<std::uint64_t>(t.count()));
  mix((std::uint64_t{node} << 8) | static_cast<std::uint64_t>(kind));
  mix(a);
  mix(b);
  ++records_;
  if (sink_ != nullptr) {
    *sink_ << t.count() << ' ' << node << ' ' << to_string(kind) << ' ' << a << ' ' << b << '\n';
  }
}

// --- Simulator --------------------------------------------------------------

void Simulator::at(SimTime t, Action action) {
  if (t < now_) {
    throw std::logic_error("event scheduled in the past");
  }
  heap_.push_back(Event{t, next_seq_++, std::move(action)});
  std::push_heap(heap_.begin(), heap_.end(), Later{});
}

bool Simulator::step() {
  if (heap_.empty()) {
    return false;
  }
  std::pop_heap(heap_.begin(), heap_.end(), Later{});
  Event ev = std::move(heap_.back());
  heap_.pop_back();
  now_ = ev.time;
  ++executed_;
  ev.action();
  return true;
}

std::uint64_t Simulator::run_until_idle() {
  const std::uint64_t before = executed_;
  while (step()) {
  }
  return executed_ - before;
}

// --- Medium -----------------------------------------------------------------

double PdrCurve::operator()(double meters) const {
  if (meters <= full_until_m) {
    return 1.0;
  }
  if (meters > edge_m) {
    return 0.0;
  }
  const double frac = (meters - full_until_m) / (edge_m - full_until_m);
  return 1.0 - frac * (1.0 - edge_pdr);
}

Medium::Medium(Simulator& sim, std::size_t node_count, std::uint64_t seed)
    : sim_(sim),
      rng_(seed),
      listeners_(node_count, nullptr),
      neighbors_(node_count),
      pdr_(node_count * node_count, 0.0),
      in_range_(node_count * node_count, 0) {}

void Medium::set_link(NodeId a, NodeId b, double pdr) {
  const std::size_t n = listeners_.size();
  if (a >= n || b >= n || a == b) {
    throw std::out_of_range("link endpoint out of range");
  }
  for (auto [x, y] : {std::pair{a, b}, std::pair{b, a}}) {
    if (!in_range_[x * n + y]) {
      neighbors_[x].push_back(y);
    }
    in_range_[x * n + y] = 1;
    pdr_[x * n + y] = pdr;
  }
}

void Medium::attach(NodeId node, RadioListener* listener) { listeners_.at(node) = listener; }

bool Medium::in_range(NodeId a, NodeId b) const {
  return in_range_[a * listeners_.size() + b] != 0;
}

double Medium::pdr(NodeId a, NodeId b) const { return pdr_[a * listeners_.size() + b]; }

std::vector<LinkModel> Medium::links() const {
  std::vector<LinkModel> out;
  for (NodeId a = 0; a < listeners_.size(); ++a) {
    for (NodeId b : neighbors_[a]) {
      out.push_back({a, b, pdr(a, b), true});
    }
  }
  return out;
}

bool Medium::channel_busy(NodeId at) const {
  return std::any_of(active_.begin(), active_.end(), [&](const Transmission& tx) {
    return tx.sender == at || (interference_ && in_range(at, tx.sender));
  });
}

std::uint64_t Medium::transmit(NodeId sender, std::shared_ptr<const Frame> frame,
                               SimTime duration, std::function<void(bool)> on_end) {
  Transmission tx;
  tx.id = next_id_++;
  tx.sender = sender;
  tx.destination = frame->dst;
  tx.start = sim_.now();
  tx.end = sim_.now() + duration;
  tx.frame = std::move(frame);
  active_.push_back(tx);

  if (!interference_) {
    const double p = in_range(sender, tx.destination) ? pdr(sender, tx.destination) : 0.0;
    const bool audible = p >= 1.0 || (p > 0.0 && rng_.bernoulli(p));
    sim_.at(tx.end, [this, tx, audible, on_end = std::move(on_end)] {
      std::erase_if(active_, [&](const Transmission& t) { return t.id == tx.id; });
      RadioListener* l = tx.destination < listeners_.size() ? listeners_[tx.destination] : nullptr;
      on_end(l != nullptr && l->on_clean_frame(tx, audible));
    });
    return tx.id;
  }

  for (NodeId r : neighbors_[sender]) {
    const double p = pdr(sender, r);
    const bool audible = p >= 1.0 || (p > 0.0 && rng_.bernoulli(p));
    if (listeners_[r] != nullptr) {
      listeners_[r]->on_signal_start(tx, audible);
    }
  }

  sim_.at(tx.end, [this, tx, on_end = std::move(on_end)] {
    std::erase_if(active_, [&](const Transmission& t) { return t.id == tx.id; });
    bool acked = false;
    for (NodeId r : neighbors_[tx.sender]) {
      if (listeners_[r] != nullptr && listeners_[r]->on_signal_end(tx) && r == tx.destination) {
        acked = true;
      }
    }
    on_end(acked);
  });
  return tx.id;
}

}  // namespace fragsim
