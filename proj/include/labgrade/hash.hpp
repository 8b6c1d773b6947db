#ifndef LABGRADE_HASH_HPP_
#define LABGRADE_HASH_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace labgrade {

// 64-bit FNV-1a. Stable across platforms; used for seeding, not integrity.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL) {
  std::uint64_t h = basis;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace labgrade

#endif  // LABGRADE_HASH_HPP_
