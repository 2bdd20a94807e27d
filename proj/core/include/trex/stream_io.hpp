#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "trex/image.hpp"

namespace trex {

/// Malformed or truncated input; `offset` is the byte position where parsing failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  [[nodiscard]] std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

inline constexpr std::uint16_t kTrfxVersion = 1;
inline constexpr std::size_t kTrfxHeaderSize = 4 + 2 + 2 + 2 + 1;

struct TrfxHeader {
  std::uint16_t version = kTrfxVersion;
  std::uint16_t height = 480;
  std::uint16_t width = 640;
  std::uint8_t sensor_count = 2;
  bool operator==(const TrfxHeader&) const = default;
};

struct TrfxRecord {
  std::uint64_t timestamp_us = 0;
  std::vector<GrayImage> frames;  // sensor_count entries, sensor 0 = left
};

/// Little-endian TRFX stream writer. Records are flushed on destruction.
class TrfxWriter {
 public:
  TrfxWriter(const std::filesystem::path& path, TrfxHeader header);
  void write(std::uint64_t timestamp_us, const std::vector<const GrayImage*>& frames);
  void write(const TrfxRecord& record);
  [[nodiscard]] std::uint64_t records_written() const noexcept { return count_; }
  void close();

 private:
  std::ofstream out_;
  TrfxHeader header_;
  std::uint64_t count_ = 0;
};

class TrfxReader {
 public:
  explicit TrfxReader(const std::filesystem::path& path);
  [[nodiscard]] const TrfxHeader& header() const noexcept { return header_; }
  /// Next record, or nullopt at a clean end of file. A partial record throws FormatError.
  std::optional<TrfxRecord> next();

 private:
  std::ifstream in_;
  TrfxHeader header_;
  std::uint64_t offset_ = 0;
};

std::vector<TrfxRecord> read_trfx(const std::filesystem::path& path, TrfxHeader* header = nullptr);

}  // namespace trex
