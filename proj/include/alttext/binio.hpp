#pragma once

// Little-endian primitives shared by the ATTH / ATTE / ATTM binary formats.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

namespace alttext::binio {

void write_u8(std::ostream& out, std::uint8_t v);
void write_u16(std::ostream& out, std::uint16_t v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);
void write_f64(std::ostream& out, double v);
void write_magic(std::ostream& out, std::string_view magic);
/// u16 length prefix followed by the raw bytes.
void write_short_string(std::ostream& out, std::string_view s);

std::uint8_t read_u8(std::istream& in);
std::uint16_t read_u16(std::istream& in);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
float read_f32(std::istream& in);
double read_f64(std::istream& in);
std::string read_short_string(std::istream& in);
void read_bytes(std::istream& in, void* dst, std::size_t n);
/// Throws Error(BadMagic) when the next four bytes differ from `magic`.
void expect_magic(std::istream& in, std::string_view magic);

}  // namespace alttext::binio
