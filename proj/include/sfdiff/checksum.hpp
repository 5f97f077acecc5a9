#pragma once

#include <boost/crc.hpp>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace sfdiff {

// CRC-64/XZ (ECMA-182 polynomial, reflected, inverted).
using Crc64 = boost::crc_optimal<64, 0x42F0E1EBA9EA3693ULL, 0xFFFFFFFFFFFFFFFFULL, 0xFFFFFFFFFFFFFFFFULL, true, true>;

inline std::uint64_t crc64(std::span<const std::byte> bytes) {
  Crc64 crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

inline std::uint64_t crc64(std::string_view bytes) {
  return crc64(std::as_bytes(std::span(bytes.data(), bytes.size())));
}

std::string hex64(std::uint64_t value);

// CRC-64 of a whole file; throws IoError if unreadable.
std::uint64_t file_crc64(const std::string& path);

}  // namespace sfdiff
