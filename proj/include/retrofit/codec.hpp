#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace retrofit {

std::string sha256_hex(std::string_view data);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Little-endian IEEE-754 packing of a double array, base64 encoded.
std::string encode_doubles(std::span<const double> values);
std::vector<double> decode_doubles(std::string_view text);

}  // namespace retrofit
