#include "alttext/binio.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "alttext/error.hpp"

namespace alttext {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::Io: return "Io";
    case Errc::MalformedRecord: return "MalformedRecord";
    case Errc::SpanOutOfBounds: return "SpanOutOfBounds";
    case Errc::OverlappingSpans: return "OverlappingSpans";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::UndecodableImage: return "UndecodableImage";
    case Errc::MissingThumbnail: return "MissingThumbnail";
    case Errc::UnknownId: return "UnknownId";
    case Errc::BadMagic: return "BadMagic";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::EmptyIndex: return "EmptyIndex";
    case Errc::SequenceTooLong: return "SequenceTooLong";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::EmptyCandidates: return "EmptyCandidates";
    case Errc::CorpusTooSmall: return "CorpusTooSmall";
    case Errc::MissingReference: return "MissingReference";
    case Errc::MissingEmbedding: return "MissingEmbedding";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::NonFiniteActivation: return "NonFiniteActivation";
    case Errc::EmptyMask: return "EmptyMask";
    case Errc::DivergedLoss: return "DivergedLoss";
  }
  return "Unknown";
}

ErrorCategory errc_category(Errc code) noexcept {
  switch (code) {
    case Errc::NonFiniteActivation:
    case Errc::EmptyMask:
    case Errc::DivergedLoss:
      return ErrorCategory::Numeric;
    case Errc::InvalidArgument:
      return ErrorCategory::Usage;
    default:
      return ErrorCategory::Data;
  }
}

namespace binio {
namespace {

template <typename U>
void put_le(std::ostream& out, U v) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char buf[sizeof(U)];
  read_bytes(in, buf, sizeof(U));
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(buf[i]) << (8 * i);
  }
  return v;
}

}  // namespace

void write_u8(std::ostream& out, std::uint8_t v) { put_le(out, v); }
void write_u16(std::ostream& out, std::uint16_t v) { put_le(out, v); }
void write_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { put_le(out, v); }
void write_f32(std::ostream& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
void write_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

void write_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

void write_short_string(std::ostream& out, std::string_view s) {
  if (s.size() > 0xFFFF) {
    throw Error(Errc::InvalidArgument, "identifier longer than 65535 bytes");
  }
  write_u16(out, static_cast<std::uint16_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void read_bytes(std::istream& in, void* dst, std::size_t n) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw Error(Errc::Io, "unexpected end of binary stream");
  }
}

std::uint8_t read_u8(std::istream& in) { return get_le<std::uint8_t>(in); }
std::uint16_t read_u16(std::istream& in) { return get_le<std::uint16_t>(in); }
std::uint32_t read_u32(std::istream& in) { return get_le<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return get_le<std::uint64_t>(in); }
float read_f32(std::istream& in) { return std::bit_cast<float>(get_le<std::uint32_t>(in)); }
double read_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

std::string read_short_string(std::istream& in) {
  const std::uint16_t n = read_u16(in);
  std::string s(n, '\0');
  read_bytes(in, s.data(), n);
  return s;
}

void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (static_cast<std::size_t>(in.gcount()) != magic.size() || got != magic) {
    throw Error(Errc::BadMagic, "expected magic '" + std::string(magic) + "'");
  }
}

}  // namespace binio
}  // namespace alttext
