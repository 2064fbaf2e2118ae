#include "fragsim/frag_codec.hpp"

#include <algorithm>
#include <string>

namespace fragsim::frag {
namespace {

void check_fields(std::uint16_t size) {
  if (size > kMaxDatagramSize) {
    throw CodecError("datagram_size " + std::to_string(size) + " exceeds 11 bits");
  }
}

std::size_t round_down8(std::size_t n) { return n / kOffsetUnit * kOffsetUnit; }

// Smallest x >= 0 such that (base + x) is a multiple of 8.
std::size_t align_pad(std::size_t base) {
  return (kOffsetUnit - base % kOffsetUnit) % kOffsetUnit;
}

}  // namespace

std::array<std::uint8_t, kFrag1HeaderSize> encode_frag1(const Frag1Header& h) {
  check_fields(h.datagram_size);
  return {static_cast<std::uint8_t>((kFrag1Dispatch << 3) | (h.datagram_size >> 8)),
          static_cast<std::uint8_t>(h.datagram_size & 0xFF),
          static_cast<std::uint8_t>(h.datagram_tag >> 8),
          static_cast<std::uint8_t>(h.datagram_tag & 0xFF)};
}

std::array<std::uint8_t, kFragNHeaderSize> encode_fragn(const FragNHeader& h) {
  check_fields(h.datagram_size);
  return {static_cast<std::uint8_t>((kFragNDispatch << 3) | (h.datagram_size >> 8)),
          static_cast<std::uint8_t>(h.datagram_size & 0xFF),
          static_cast<std::uint8_t>(h.datagram_tag >> 8),
          static_cast<std::uint8_t>(h.datagram_tag & 0xFF), h.offset_units};
}

DecodedHeader decode(std::span<const std::uint8_t> in) {
  if (in.empty()) {
    return NotAFragment{};
  }
  const std::uint8_t dispatch = in[0] >> 3;
  if (dispatch != kFrag1Dispatch && dispatch != kFragNDispatch) {
    return NotAFragment{};
  }
  const std::size_t need = dispatch == kFrag1Dispatch ? kFrag1HeaderSize : kFragNHeaderSize;
  if (in.size() < need) {
    throw CodecError("truncated fragment header: " + std::to_string(in.size()) + " < " +
                     std::to_string(need) + " bytes");
  }
  const auto size = static_cast<std::uint16_t>(((in[0] & 0x07) << 8) | in[1]);
  const auto tag = static_cast<std::uint16_t>((in[2] << 8) | in[3]);
  if (dispatch == kFrag1Dispatch) {
    return Frag1Header{size, tag};
  }
  return FragNHeader{size, tag, in[4]};
}

CompressionHeader compress(std::span<const std::uint8_t> datagram, std::size_t covered,
                           std::size_t size_bytes) {
  if (covered > datagram.size()) {
    throw FragmentationError("compression covers more than the datagram");
  }
  if (size_bytes > kMaxCompressionHeader) {
    throw FragmentationError("compression header larger than " +
                             std::to_string(kMaxCompressionHeader) + " bytes");
  }
  return {size_bytes, {datagram.begin(), datagram.begin() + static_cast<std::ptrdiff_t>(covered)}};
}

bool Fragment::is_first() const {
  return !header || std::holds_alternative<Frag1Header>(*header);
}

std::size_t Fragment::offset() const {
  if (header) {
    if (const auto* n = std::get_if<FragNHeader>(&*header)) {
      return n->offset_bytes();
    }
  }
  return 0;
}

std::size_t Fragment::uncompressed_length() const {
  return (compression ? compression->elided.size() : 0) + payload.size();
}

std::size_t Fragment::header_size() const {
  if (!header) {
    return 0;
  }
  return std::holds_alternative<Frag1Header>(*header) ? kFrag1HeaderSize : kFragNHeaderSize;
}

std::size_t Fragment::wire_size() const {
  return header_size() + (compression ? compression->size_bytes : 0) + payload.size();
}

std::uint16_t Fragment::datagram_size() const {
  if (!header) {
    return static_cast<std::uint16_t>(uncompressed_length());
  }
  return std::visit([](const auto& h) { return h.datagram_size; }, *header);
}

std::uint16_t Fragment::tag() const {
  if (!header) {
    return 0;
  }
  return std::visit([](const auto& h) { return h.datagram_tag; }, *header);
}

void Fragment::set_tag(std::uint16_t tag) {
  if (header) {
    std::visit([tag](auto& h) { h.datagram_tag = tag; }, *header);
  }
}

std::vector<std::uint8_t> Fragment::encode() const {
  std::vector<std::uint8_t> out;
  out.reserve(wire_size());
  if (header) {
    if (const auto* f1 = std::get_if<Frag1Header>(&*header)) {
      const auto h = encode_frag1(*f1);
      out.insert(out.end(), h.begin(), h.end());
    } else {
      const auto h = encode_fragn(std::get<FragNHeader>(*header));
      out.insert(out.end(), h.begin(), h.end());
    }
  }
  if (compression && compression->size_bytes > 0) {
    out.push_back(kCompressionDispatch);
    out.resize(out.size() + compression->size_bytes - 1, 0);
  }
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Fragment parse_fragment(std::span<const std::uint8_t> bytes,
                        const std::optional<CompressionHeader>& context) {
  Fragment f;
  std::size_t pos = 0;
  const DecodedHeader decoded = decode(bytes);
  if (const auto* f1 = std::get_if<Frag1Header>(&decoded)) {
    f.header = *f1;
    pos = kFrag1HeaderSize;
  } else if (const auto* fn = std::get_if<FragNHeader>(&decoded)) {
    f.header = *fn;
    pos = kFragNHeaderSize;
  }
  if (f.is_first()) {
    if (!context) {
      throw CodecError("first fragment without decompression context");
    }
    if (bytes.size() - pos < context->size_bytes) {
      throw CodecError("truncated compression header");
    }
    f.compression = context;
    pos += context->size_bytes;
  }
  f.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return f;
}

std::vector<Fragment> fragment_datagram(std::span<const std::uint8_t> datagram,
                                        const CompressionHeader& comp, std::uint16_t tag,
                                        std::size_t sdu, FragPolicy policy) {
  const std::size_t total = datagram.size();
  const std::size_t elided = comp.elided.size();
  if (elided > total || !std::equal(comp.elided.begin(), comp.elided.end(), datagram.begin())) {
    throw FragmentationError("compression context does not match datagram head");
  }
  if (total > kMaxDatagramSize) {
    throw FragmentationError("datagram of " + std::to_string(total) +
                             " bytes does not fit the 11-bit size field");
  }

  const auto data_begin = datagram.begin();
  auto slice = [&](std::size_t from, std::size_t to) {
    return std::vector<std::uint8_t>(data_begin + static_cast<std::ptrdiff_t>(from),
                                     data_begin + static_cast<std::ptrdiff_t>(to));
  };

  std::vector<Fragment> out;
  if (comp.size_bytes + (total - elided) <= sdu) {
    out.push_back({std::nullopt, comp, slice(elided, total)});
    return out;
  }

  if (sdu < kFragNHeaderSize + kOffsetUnit) {
    throw FragmentationError("sdu " + std::to_string(sdu) + " cannot carry a FRAGN");
  }
  if (kFrag1HeaderSize + comp.size_bytes > sdu) {
    throw FragmentationError("compression header does not fit the first fragment");
  }
  const std::size_t room = sdu - kFrag1HeaderSize - comp.size_bytes;
  std::size_t first_data = align_pad(elided);
  if (policy == FragPolicy::fill_first) {
    first_data = room >= first_data ? first_data + round_down8(room - first_data) : first_data;
  }
  if (first_data > room) {
    throw FragmentationError("first fragment cannot reach an 8-byte boundary");
  }
  first_data = std::min(first_data, total - elided);

  const auto size16 = static_cast<std::uint16_t>(total);
  out.push_back({Frag1Header{size16, tag}, comp, slice(elided, elided + first_data)});

  const std::size_t chunk = round_down8(sdu - kFragNHeaderSize);
  for (std::size_t offset = elided + first_data; offset < total; offset += chunk) {
    const std::size_t units = offset / kOffsetUnit;
    if (units > kMaxOffsetUnits) {
      throw FragmentationError("offset exceeds 255 units");
    }
    const std::size_t end = std::min(total, offset + chunk);
    out.push_back({FragNHeader{size16, tag, static_cast<std::uint8_t>(units)}, std::nullopt,
                   slice(offset, end)});
  }
  return out;
}

std::vector<Fragment> refragment_first(const Fragment& first, const CompressionHeader& new_comp,
                                       std::size_t sdu) {
  if (!first.header || !std::holds_alternative<Frag1Header>(*first.header)) {
    throw FragmentationError("refragment_first needs a FRAG1 fragment");
  }
  Fragment head = first;
  head.compression = new_comp;
  if (head.wire_size() <= sdu) {
    return {head};
  }
  if (kFrag1HeaderSize + new_comp.size_bytes > sdu) {
    throw FragmentationError("grown compression header does not fit a FRAG1");
  }
  // The displaced payload starts at an 8-byte boundary; alignment bytes stay.
  const std::size_t keep = std::min(align_pad(new_comp.elided.size()), first.payload.size());
  const auto split = first.payload.begin() + static_cast<std::ptrdiff_t>(keep);
  head.payload.assign(first.payload.begin(), split);
  const std::size_t offset = new_comp.elided.size() + keep;
  Fragment tail{FragNHeader{first.datagram_size(), first.tag(),
                            static_cast<std::uint8_t>(offset / kOffsetUnit)},
                std::nullopt,
                {split, first.payload.end()}};
  if (tail.wire_size() > sdu || head.wire_size() > sdu) {
    throw FragmentationError("displaced payload does not fit one FRAGN");
  }
  return {head, tail};
}

}  // namespace fragsim::frag
