#include "trex/stream_io.hpp"

#include <array>
#include <cstring>

namespace trex {
namespace {

template <typename T>
void put_le(std::ofstream& out, T v) {
  std::array<char, sizeof(T)> buf{};
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF);
  out.write(buf.data(), buf.size());
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace

TrfxWriter::TrfxWriter(const std::filesystem::path& path, TrfxHeader header)
    : out_(path, std::ios::binary | std::ios::trunc), header_(header) {
  if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out_.write("TRFX", 4);
  put_le<std::uint16_t>(out_, header_.version);
  put_le<std::uint16_t>(out_, header_.height);
  put_le<std::uint16_t>(out_, header_.width);
  put_le<std::uint8_t>(out_, header_.sensor_count);
}

void TrfxWriter::write(std::uint64_t timestamp_us, const std::vector<const GrayImage*>& frames) {
  if (frames.size() != header_.sensor_count) {
    throw StructuralError("TRFX record has " + std::to_string(frames.size()) + " frames, header says " +
                          std::to_string(header_.sensor_count));
  }
  put_le<std::uint64_t>(out_, timestamp_us);
  for (const GrayImage* f : frames) {
    if (f->height() != header_.height || f->width() != header_.width) {
      throw StructuralError("TRFX frame dimensions do not match header");
    }
    auto px = f->pixels();
    out_.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  }
  ++count_;
}

void TrfxWriter::write(const TrfxRecord& record) {
  std::vector<const GrayImage*> ptrs;
  for (const auto& f : record.frames) ptrs.push_back(&f);
  write(record.timestamp_us, ptrs);
}

void TrfxWriter::close() { out_.close(); }

TrfxReader::TrfxReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
  if (!in_) throw std::runtime_error("cannot open " + path.string());
  std::array<unsigned char, kTrfxHeaderSize> buf{};
  in_.read(reinterpret_cast<char*>(buf.data()), buf.size());
  const auto got = static_cast<std::uint64_t>(in_.gcount());
  if (got < 4 || std::memcmp(buf.data(), "TRFX", 4) != 0) {
    throw FormatError("missing TRFX magic", 0);
  }
  if (got < kTrfxHeaderSize) throw FormatError("truncated TRFX header", got);
  header_.version = get_le<std::uint16_t>(buf.data() + 4);
  header_.height = get_le<std::uint16_t>(buf.data() + 6);
  header_.width = get_le<std::uint16_t>(buf.data() + 8);
  header_.sensor_count = buf[10];
  if (header_.version != kTrfxVersion) throw FormatError("unsupported TRFX version " + std::to_string(header_.version), 4);
  if (header_.sensor_count == 0) throw FormatError("TRFX sensor_count is zero", 10);
  offset_ = kTrfxHeaderSize;
}

std::optional<TrfxRecord> TrfxReader::next() {
  std::array<unsigned char, 8> ts{};
  in_.read(reinterpret_cast<char*>(ts.data()), ts.size());
  const auto got = static_cast<std::uint64_t>(in_.gcount());
  if (got == 0) return std::nullopt;
  if (got < ts.size()) throw FormatError("truncated TRFX record timestamp", offset_ + got);
  TrfxRecord rec;
  rec.timestamp_us = get_le<std::uint64_t>(ts.data());
  offset_ += ts.size();
  const std::size_t frame_bytes = static_cast<std::size_t>(header_.height) * header_.width;
  for (int s = 0; s < header_.sensor_count; ++s) {
    GrayImage img(header_.height, header_.width);
    auto px = img.pixels();
    in_.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(frame_bytes));
    const auto n = static_cast<std::uint64_t>(in_.gcount());
    if (n < frame_bytes) throw FormatError("truncated TRFX frame", offset_ + n);
    offset_ += frame_bytes;
    rec.frames.push_back(std::move(img));
  }
  return rec;
}

std::vector<TrfxRecord> read_trfx(const std::filesystem::path& path, TrfxHeader* header) {
  TrfxReader reader(path);
  if (header) *header = reader.header();
  std::vector<TrfxRecord> out;
  while (auto rec = reader.next()) out.push_back(std::move(*rec));
  return out;
}

}  // namespace trex
