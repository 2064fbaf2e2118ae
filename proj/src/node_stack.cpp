#include "fragsim/node_stack.hpp"

#include <algorithm>
#include <stdexcept>

namespace fragsim {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::hwr: return "hwr";
    case Strategy::ff: return "ff";
    case Strategy::ff_queued: return "ff_queued";
  }
  return "unknown";
}

std::optional<Strategy> parse_strategy(std::string_view s) {
  for (Strategy v : {Strategy::hwr, Strategy::ff, Strategy::ff_queued}) {
    if (to_string(v) == s) {
      return v;
    }
  }
  return std::nullopt;
}

std::vector<std::uint8_t> make_datagram(NodeId src, NodeId dst, std::uint32_t seq,
                                        std::size_t payload_size) {
  const std::size_t udp_length = 8 + payload_size;
  std::vector<std::uint8_t> d(40 + udp_length);
  d[0] = 0x60;
  d[4] = static_cast<std::uint8_t>(udp_length >> 8);
  d[5] = static_cast<std::uint8_t>(udp_length);
  d[6] = 17;  // UDP
  d[7] = 64;
  // fe80::ff:fe00:<id> link-local style addresses
  for (auto [base, id] : {std::pair{8, src}, std::pair{24, dst}}) {
    d[base] = 0xfe;
    d[base + 1] = 0x80;
    d[base + 11] = 0xff;
    d[base + 12] = 0xfe;
    d[base + 14] = static_cast<std::uint8_t>(id >> 8);
    d[base + 15] = static_cast<std::uint8_t>(id);
  }
  d[40] = 0xf0;
  d[41] = 0xb1;
  d[42] = 0xf0;
  d[43] = 0xb1;
  d[44] = static_cast<std::uint8_t>(udp_length >> 8);
  d[45] = static_cast<std::uint8_t>(udp_length);
  Rng fill(derive_seed(make_datagram_id(src, seq), 0x5eed));
  for (std::size_t i = 48; i < d.size(); ++i) {
    d[i] = static_cast<std::uint8_t>(fill.next());
  }
  return d;
}

// ---------------------------------------------------------------------------
// Node

Node::Node(const NodeConfig& config, const StackParams& params, Simulator& sim, Medium& medium,
           const MacParams& mac_params, MetricsCollector& metrics, NodeId sink,
           std::uint64_t seed)
    : config_(config),
      params_(params),
      sink_(sink),
      sim_(sim),
      metrics_(metrics),
      rng_(derive_seed(seed, 2)),
      mac_(config.id, sim, medium, mac_params, params.frame, derive_seed(seed, 1)),
      arena_(params.arena_bytes),
      rbuf_(config.rbuf_entries, params.reassembly_timeout, arena_),
      vrb_(config.vrb_entries, params.reassembly_timeout, tags_),
      fragbuf_(params.frag_buffer_slots) {
  if (config_.role != Role::sink && config_.next_hop == kNoNode) {
    throw std::invalid_argument("non-sink node without a next hop");
  }
  stats_.id = config_.id;
  stats_.hop_distance = config_.hop_distance;
  mac_.set_receive_handler([this](std::shared_ptr<const Frame> frame) {
    ++processing_;
    sim_.after(params_.processing_delay, [this, frame] {
      --processing_;
      on_frame(*frame);
    });
  });
}

frag::FragPolicy Node::policy() const {
  return config_.strategy == Strategy::hwr ? frag::FragPolicy::fill_first
                                           : frag::FragPolicy::minimal_first;
}

frag::CompressionHeader Node::compression_for(const std::vector<std::uint8_t>& datagram,
                                              const Provenance& prov) const {
  const std::size_t covered = std::min(params_.frame.uncompressed_header, datagram.size());
  const std::size_t size = std::min(
      params_.frame.compression_bytes + params_.compression_growth * prov.path.size(), covered);
  return frag::compress(datagram, covered, size);
}

void Node::start_app(const AppFlow& flow) {
  sends_remaining_ = flow.packet_count;
  auto schedule = std::make_shared<std::function<void()>>();
  *schedule = [this, flow, schedule] {
    if (sends_remaining_ == 0) {
      return;
    }
    const SimTime gap{rng_.between(flow.interval_lo.count(), flow.interval_hi.count())};
    sim_.after(gap, [this, flow, schedule] {
      --sends_remaining_;
      app_send(flow.payload_size);
      (*schedule)();
    });
  };
  (*schedule)();
}

void Node::app_send(std::size_t payload_size) {
  const std::uint32_t seq = next_seq_++;
  const DatagramId id = make_datagram_id(config_.id, seq);
  const auto datagram = make_datagram(config_.id, sink_, seq, payload_size);
  ++stats_.sent;
  metrics_.datagram_sent(id, config_.hop_distance, sim_.now(),
                         content_hash(datagram.data(), datagram.size()));
  sim_.trace().record(sim_.now(), config_.id, TraceKind::app_send, id, datagram.size());
  send_datagram(datagram, Provenance{id, {}});
}

void Node::send_datagram(const std::vector<std::uint8_t>& datagram, const Provenance& prov) {
  const NodeId next = config_.next_hop;
  const auto comp = compression_for(datagram, prov);
  const std::uint16_t tag = tags_.acquire(next);
  std::vector<frag::Fragment> fragments;
  try {
    fragments = frag::fragment_datagram(datagram, comp, tag, params_.frame.sdu(), policy());
  } catch (const frag::FragmentationError&) {
    tags_.release(next, tag);
    ++stats_.pktbuf_full;
    lose(prov.datagram, LossCause::pktbuf_full);
    return;
  }

  auto lease = arena_.allocate(datagram.size());
  if (!lease) {
    tags_.release(next, tag);
    ++stats_.pktbuf_full;
    sim_.trace().record(sim_.now(), config_.id, TraceKind::pktbuf_full, prov.datagram);
    lose(prov.datagram, LossCause::pktbuf_full);
    return;
  }
  note_memory();
  const auto slot = fragbuf_.acquire(prov.datagram, static_cast<std::uint16_t>(datagram.size()),
                                     next, tag, fragments.size(), std::move(*lease));
  if (!slot) {
    // Fragmentation buffer exhausted: same fate as packet buffer exhaustion.
    tags_.release(next, tag);
    ++stats_.pktbuf_full;
    sim_.trace().record(sim_.now(), config_.id, TraceKind::pktbuf_full, prov.datagram, 1);
    lose(prov.datagram, LossCause::pktbuf_full);
    return;
  }
  const FragmentationBuffer::SlotId id = *slot;
  for (const auto& f : fragments) {
    auto frame_lease = arena_.allocate(f.wire_size());
    if (!frame_lease) {
      ++stats_.pktbuf_full;
      sim_.trace().record(sim_.now(), config_.id, TraceKind::pktbuf_full, prov.datagram);
      lose(prov.datagram, LossCause::pktbuf_full);
      if (fragbuf_.fragment_done(id)) {
        tags_.release(next, tag);
      }
      continue;
    }
    note_memory();
    transmit(f, prov, std::move(*frame_lease), [this, id, next, tag](TxStatus) {
      if (fragbuf_.fragment_done(id)) {
        tags_.release(next, tag);
      }
    });
  }
}

void Node::transmit(const frag::Fragment& f, const Provenance& prov, ArenaLease lease,
                    std::function<void(TxStatus)> after) {
  auto frame = std::make_shared<Frame>();
  frame->src = config_.id;
  frame->dst = config_.next_hop;
  frame->bytes = f.encode();
  frame->context = f.compression;
  frame->provenance = prov;
  frame->provenance.path.push_back(config_.id);
  if (transmit_order_.empty() || transmit_order_.back() != prov.datagram) {
    transmit_order_.push_back(prov.datagram);
  }
  const DatagramId id = prov.datagram;
  mac_.send(
      std::move(frame),
      [this, id, after = std::move(after)](TxStatus status) {
        if (status == TxStatus::retrans_exhausted) {
          lose(id, LossCause::retrans_exhausted);
        } else if (status == TxStatus::queue_drop) {
          lose(id, LossCause::queue_drop);
        }
        if (after) {
          after(status);
        }
      },
      std::move(lease));
}

void Node::on_frame(const Frame& frame) {
  frag::Fragment f;
  try {
    f = frag::parse_fragment(frame.bytes, frame.context);
  } catch (const frag::CodecError&) {
    return;
  }
  const Provenance& prov = frame.provenance;
  if (!f.is_fragmented()) {
    std::vector<std::uint8_t> datagram;
    if (f.compression) {
      datagram = f.compression->elided;
    }
    datagram.insert(datagram.end(), f.payload.begin(), f.payload.end());
    if (config_.role == Role::sink) {
      deliver(datagram, prov, true);
    } else {
      send_datagram(datagram, prov);
    }
    return;
  }
  const DatagramKey key{L2Address::from_node(frame.src), L2Address::from_node(config_.id),
                        f.datagram_size(), f.tag()};
  if (config_.role == Role::sink || config_.strategy == Strategy::hwr) {
    reassemble(key, f, prov);
    return;
  }
  fragment_forward(key, std::move(f), prov);
}

void Node::fragment_forward(const DatagramKey& key, frag::Fragment f, const Provenance& prov) {
  const SimTime now = sim_.now();
  if (f.is_first()) {
    // Only an in-order first fragment opens a forwarding stream.
    if (rbuf_.contains(key)) {
      ++stats_.fallback_fragments;
      reassemble(key, f, prov);
      return;
    }
    if (params_.first_fragment_needs_rbuf) {
      handle_expired(rbuf_.gc(now));
      if (rbuf_.size() >= rbuf_.capacity()) {
        drop_rbuf_full(prov);
        return;
      }
    }
    expire_vrb();
    VrbEntry* entry = nullptr;
    try {
      entry = vrb_.create(key, config_.next_hop, now);
    } catch (const VrbError&) {
      entry = nullptr;
    }
    if (!entry) {
      ++stats_.vrb_full;
      ++stats_.fallback_fragments;
      sim_.trace().record(now, config_.id, TraceKind::vrb_full, prov.datagram);
      reassemble(key, f, prov);
      return;
    }
    const std::size_t covered = f.uncompressed_length();
    frag::CompressionHeader grown = *f.compression;
    grown.size_bytes = std::min(grown.size_bytes + params_.compression_growth, grown.elided.size());
    std::vector<frag::Fragment> pieces;
    try {
      pieces = frag::refragment_first(f, grown, params_.frame.sdu());
    } catch (const frag::FragmentationError&) {
      ++stats_.pktbuf_full;
      lose(prov.datagram, LossCause::pktbuf_full);
      return;
    }
    sim_.trace().record(now, config_.id, TraceKind::forward, prov.datagram, entry->out_tag);
    for (auto& piece : pieces) {
      emit(*entry, std::move(piece), prov);
    }
    entry->bytes_seen += covered;
    flush_if_complete(*entry);
    return;
  }

  VrbEntry* entry = vrb_.lookup(key, now);
  if (!entry) {
    ++stats_.fallback_fragments;
    reassemble(key, f, prov);
    return;
  }
  const std::size_t covered = f.uncompressed_length();
  emit(*entry, std::move(f), prov);
  entry->bytes_seen += covered;
  flush_if_complete(*entry);
}

void Node::emit(VrbEntry& entry, frag::Fragment f, const Provenance& prov) {
  f.set_tag(entry.out_tag);
  ++stats_.forwarded_fragments;
  auto lease = arena_.allocate(f.wire_size());
  if (!lease) {
    ++stats_.pktbuf_full;
    sim_.trace().record(sim_.now(), config_.id, TraceKind::pktbuf_full, prov.datagram);
    lose(prov.datagram, LossCause::pktbuf_full);
    return;
  }
  note_memory();
  if (config_.strategy == Strategy::ff_queued) {
    entry.queued.push_back(QueuedFragment{std::move(f), prov, std::move(*lease)});
    return;
  }
  transmit(f, prov, std::move(*lease));
}

void Node::flush_if_complete(VrbEntry& entry) {
  if (config_.strategy != Strategy::ff_queued || entry.bytes_seen < entry.key.datagram_size) {
    return;
  }
  auto queued = std::move(entry.queued);
  entry.queued.clear();
  for (auto& q : queued) {
    transmit(q.fragment, q.provenance, std::move(q.lease));
  }
}

void Node::reassemble(const DatagramKey& key, const frag::Fragment& f, const Provenance& prov) {
  std::span<const std::uint8_t> elided;
  if (f.compression) {
    elided = f.compression->elided;
  }
  RbufInsert r = rbuf_.insert(key, f.offset(), elided, f.payload, prov, sim_.now());
  handle_expired(r.expired);
  stats_.rbuf_high_water = std::max(stats_.rbuf_high_water, rbuf_.size());
  note_memory();

  if (auto* done = std::get_if<RbufCompleted>(&r.result)) {
    if (config_.role == Role::sink) {
      deliver(done->datagram, done->provenance, done->path_consistent);
    } else {
      send_datagram(done->datagram, done->provenance);
    }
    return;
  }
  if (auto* drop = std::get_if<RbufDropped>(&r.result)) {
    switch (drop->reason) {
      case RbufDropReason::rbuf_full:
        drop_rbuf_full(prov);
        break;
      case RbufDropReason::pktbuf_full:
        ++stats_.pktbuf_full;
        sim_.trace().record(sim_.now(), config_.id, TraceKind::pktbuf_full, prov.datagram);
        lose(prov.datagram, LossCause::pktbuf_full);
        break;
      case RbufDropReason::out_of_range:
        break;
    }
  }
}

void Node::drop_rbuf_full(const Provenance& prov) {
  ++stats_.rbuf_full;
  metrics_.rbuf_full(config_.id, sim_.now(), arena_.used());
  sim_.trace().record(sim_.now(), config_.id, TraceKind::rbuf_full, prov.datagram);
  lose(prov.datagram, LossCause::rbuf_full);
}

void Node::deliver(const std::vector<std::uint8_t>& datagram, const Provenance& prov,
                   bool path_ok) {
  ++stats_.delivered;
  sim_.trace().record(sim_.now(), config_.id, TraceKind::deliver, prov.datagram,
                      datagram.size());
  metrics_.datagram_delivered(prov.datagram, sim_.now(),
                              content_hash(datagram.data(), datagram.size()), path_ok);
}

void Node::handle_expired(const std::vector<ExpiredEntry>& expired) {
  for (const auto& e : expired) {
    ++stats_.rbuf_timeouts;
    if (!e.first_fragment_seen) {
      ++stats_.rbuf_timeouts_first_missing;
    }
    sim_.trace().record(sim_.now(), config_.id, TraceKind::rbuf_timeout,
                        e.datagrams.empty() ? 0 : e.datagrams.front(), e.first_fragment_seen);
    for (DatagramId id : e.datagrams) {
      lose(id, LossCause::rbuf_timeout);
    }
  }
}

void Node::expire_vrb() {
  for (const auto& e : vrb_.expire(sim_.now())) {
    ++stats_.vrb_expired;
    sim_.trace().record(sim_.now(), config_.id, TraceKind::vrb_expired, e.out_tag,
                        e.queued.size());
    for (const auto& q : e.queued) {
      lose(q.provenance.datagram, LossCause::rbuf_timeout);
    }
  }
}

void Node::gc() {
  handle_expired(rbuf_.gc(sim_.now()));
  expire_vrb();
}

void Node::lose(DatagramId id, LossCause cause) { metrics_.datagram_lost(id, cause); }

void Node::note_memory() {
  const MemoryModel model{MemoryMode::arena, arena_.capacity()};
  stats_.mem_high_water =
      std::max(stats_.mem_high_water, mem_usage(model, rbuf_.size(), arena_.used()));
}

bool Node::quiescent() const {
  return sends_remaining_ == 0 && processing_ == 0 && rbuf_.size() == 0 && vrb_.size() == 0 &&
         !mac_.busy() && mac_.queued() == 0 && fragbuf_.in_use() == 0;
}

NodeStats Node::stats() const {
  NodeStats s = stats_;
  const MacCounters& c = mac_.counters();
  s.tx_attempts = c.tx_attempts;
  s.l2_retransmissions = c.l2_retransmissions;
  s.busy_losses = c.busy_losses;
  s.collisions = c.collisions;
  s.queue_drops = c.queue_drops;
  s.csma_failures = c.csma_failures;
  s.pktbuf_high_water = arena_.high_water();
  return s;
}

// ---------------------------------------------------------------------------
// Network

Network::Network(const NetworkSpec& spec)
    : spec_(spec), medium_(sim_, spec.nodes.size(), derive_seed(spec.seed, 0)) {
  medium_.set_interference(spec_.interference);
  nodes_.reserve(spec_.nodes.size());
  for (std::size_t i = 0; i < spec_.nodes.size(); ++i) {
    const NodeConfig& cfg = spec_.nodes[i];
    if (cfg.id != i) {
      throw std::invalid_argument("node ids must equal their index");
    }
    nodes_.push_back(std::make_unique<Node>(cfg, spec_.stack, sim_, medium_, spec_.mac, metrics_,
                                            spec_.sink, derive_seed(spec_.seed, 1000 + i)));
  }
  for (const LinkModel& l : spec_.links) {
    if (l.in_range) {
      medium_.set_link(l.src, l.dst, l.pdr);
    }
  }
}

void Network::start_traffic(const AppFlow& flow) {
  for (auto& n : nodes_) {
    if (n->config().role == Role::source) {
      n->start_app(flow);
    }
  }
}

void Network::gc_tick() {
  bool settled = sim_.pending() == 0;
  for (auto& n : nodes_) {
    n->gc();
    settled = settled && n->quiescent();
  }
  if (!settled) {
    sim_.after(spec_.gc_interval, [this] { gc_tick(); });
  }
}

void Network::run() {
  sim_.after(spec_.gc_interval, [this] { gc_tick(); });
  sim_.run_until_idle();
}

RunMetrics Network::collect() const {
  RunMetrics out;
  metrics_.finish(out);
  out.nodes.reserve(nodes_.size());
  for (const auto& n : nodes_) {
    out.nodes.push_back(n->stats());
    if (n->arena().used() != 0) {
      ++out.invariants.arena_leaks;
    }
  }
  out.trace_digest = sim_.trace().digest();
  out.events = sim_.executed();
  out.end_time_us = sim_.now().count();
  out.seed = spec_.seed;
  return out;
}

}  // namespace fragsim
