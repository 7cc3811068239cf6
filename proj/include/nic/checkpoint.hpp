#pragma once

#include <array>
#include <string>

#include "nic/tensor.hpp"

namespace nic {

// NICP parameter checkpoint, little-endian:
//   magic "NICP" (4B), format version u16, entry count u32;
//   per entry: name length u16 + UTF-8 bytes, rank u8, extents u32 each,
//   then binary64 values row-major. Bit-exact round trip.
constexpr uint16_t kNicpVersion = 1;

void write_nicp(const ParamStore& params, const std::string& path);
ParamStore read_nicp(const std::string& path);

// SHA-256 of a file's bytes; used as the encoder digest in NICW headers
std::array<uint8_t, 32> sha256_file(const std::string& path);
std::array<uint8_t, 32> sha256_params(const ParamStore& params);

std::string hex_digest(const std::array<uint8_t, 32>& d);

}  // namespace nic
