#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace actmon {

/// Reads a whole file into memory. Throws IoError.
std::string read_file(const std::filesystem::path& path);

/// Writes `bytes` to a sibling temp file and renames it over `path`, so
/// readers never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// 64-bit FNV-1a, incremental.
class Fnv1a64 {
 public:
  void update(std::string_view bytes) noexcept;
  std::uint64_t digest() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace actmon
