#pragma once

// 6LoWPAN FRAG1/FRAGN header codec and datagram fragmentation (RFC 4944 layout).

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

namespace fragsim::frag {

inline constexpr std::size_t kFrag1HeaderSize = 4;
inline constexpr std::size_t kFragNHeaderSize = 5;
inline constexpr std::size_t kOffsetUnit = 8;
inline constexpr std::uint16_t kMaxDatagramSize = 0x07FF;  // 11 bits
inline constexpr std::size_t kMaxOffsetUnits = 0xFF;
inline constexpr std::uint8_t kFrag1Dispatch = 0b11000;
inline constexpr std::uint8_t kFragNDispatch = 0b11100;
/// Uncompressed IPv6 header; upper bound for the abstract compression header.
inline constexpr std::size_t kMaxCompressionHeader = 40;
/// First byte of the opaque compression header (an IPHC-class dispatch).
inline constexpr std::uint8_t kCompressionDispatch = 0x78;

class CodecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FragmentationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Frag1Header {
  std::uint16_t datagram_size = 0;
  std::uint16_t datagram_tag = 0;
  bool operator==(const Frag1Header&) const = default;
};

struct FragNHeader {
  std::uint16_t datagram_size = 0;
  std::uint16_t datagram_tag = 0;
  std::uint8_t offset_units = 0;
  std::size_t offset_bytes() const { return std::size_t{offset_units} * kOffsetUnit; }
  bool operator==(const FragNHeader&) const = default;
};

struct NotAFragment {
  bool operator==(const NotAFragment&) const = default;
};

using FragmentHeader = std::variant<Frag1Header, FragNHeader>;
using DecodedHeader = std::variant<NotAFragment, Frag1Header, FragNHeader>;

std::array<std::uint8_t, kFrag1HeaderSize> encode_frag1(const Frag1Header& h);
std::array<std::uint8_t, kFragNHeaderSize> encode_fragn(const FragNHeader& h);

/// Classifies a frame payload by its dispatch bits. Throws CodecError when the
/// dispatch matches a fragment header but the input is too short to hold it.
DecodedHeader decode(std::span<const std::uint8_t> frame_payload);

/// Size-only stand-in for a compressed IPv6/UDP header. `elided` holds the
/// uncompressed header bytes it replaces; it travels as decompression context
/// and is not counted on the wire.
struct CompressionHeader {
  std::size_t size_bytes = 0;
  std::vector<std::uint8_t> elided;
  bool operator==(const CompressionHeader&) const = default;
};

/// Compression header of `size_bytes` standing for the first `covered` bytes.
CompressionHeader compress(std::span<const std::uint8_t> datagram, std::size_t covered,
                           std::size_t size_bytes);

enum class FragPolicy {
  minimal_first,  ///< first fragment carries only FRAG1 + compression header
  fill_first,     ///< every fragment filled; the last one is the short one
};

/// One link-layer payload: an optional fragment header, the compression
/// header (first fragment or unfragmented datagram only) and data bytes.
struct Fragment {
  std::optional<FragmentHeader> header;
  std::optional<CompressionHeader> compression;
  std::vector<std::uint8_t> payload;

  bool is_fragmented() const { return header.has_value(); }
  bool is_first() const;
  /// Offset into the uncompressed datagram.
  std::size_t offset() const;
  /// Uncompressed datagram bytes this fragment covers.
  std::size_t uncompressed_length() const;
  std::size_t header_size() const;
  std::size_t wire_size() const;
  std::uint16_t datagram_size() const;
  std::uint16_t tag() const;
  void set_tag(std::uint16_t tag);
  /// header | compression header | payload, as sent on the link.
  std::vector<std::uint8_t> encode() const;
};

/// Inverse of Fragment::encode. The compression header length is only known
/// through the decompression context, which must be supplied for first
/// fragments and unfragmented payloads.
Fragment parse_fragment(std::span<const std::uint8_t> bytes,
                        const std::optional<CompressionHeader>& context);

/// Splits an uncompressed datagram into link-sized fragments. The first
/// `comp.elided.size()` bytes of `datagram` are represented by `comp`.
std::vector<Fragment> fragment_datagram(std::span<const std::uint8_t> datagram,
                                        const CompressionHeader& comp, std::uint16_t tag,
                                        std::size_t sdu, FragPolicy policy);

/// Re-packs a received first fragment after its compression header changed
/// size. Returns the first fragment alone when it still fits, else a
/// header-only FRAG1 followed by one FRAGN carrying the displaced payload.
std::vector<Fragment> refragment_first(const Fragment& first, const CompressionHeader& new_comp,
                                       std::size_t sdu);

}  // namespace fragsim::frag
