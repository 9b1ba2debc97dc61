#pragma once

// Little-endian encoding helpers shared by the checkpoint and window
// container formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mvts/error.hpp"

namespace mvts {

class ByteWriter {
 public:
  void bytes(std::span<const unsigned char> data) { buffer_.insert(buffer_.end(), data.begin(), data.end()); }
  void raw(std::string_view text) { buffer_.insert(buffer_.end(), text.begin(), text.end()); }

  template <class UInt>
  void uint(UInt value) {
    for (std::size_t i = 0; i < sizeof(UInt); ++i) buffer_.push_back(static_cast<unsigned char>(value >> (8 * i)));
  }
  void u8(std::uint8_t v) { buffer_.push_back(v); }
  void u16(std::uint16_t v) { uint(v); }
  void u32(std::uint32_t v) { uint(v); }
  void u64(std::uint64_t v) { uint(v); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  const std::vector<unsigned char>& buffer() const { return buffer_; }

  /// Write to `path` via a temporary sibling and rename.
  void write_file(const std::filesystem::path& path) const;

 private:
  std::vector<unsigned char> buffer_;
};

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);

class ByteReader {
 public:
  ByteReader(std::vector<unsigned char> data, std::string source)
      : data_(std::move(data)), source_(std::move(source)) {}

  static ByteReader from_file(const std::filesystem::path& path);

  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return data_.size() - offset_; }

  std::span<const unsigned char> bytes(std::size_t n, std::string_view what) {
    require(n, what);
    std::span<const unsigned char> out(data_.data() + offset_, n);
    offset_ += n;
    return out;
  }

  template <class UInt>
  UInt uint(std::string_view what) {
    auto b = bytes(sizeof(UInt), what);
    UInt value = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) value |= static_cast<UInt>(static_cast<UInt>(b[i]) << (8 * i));
    return value;
  }
  std::uint8_t u8(std::string_view what) { return uint<std::uint8_t>(what); }
  std::uint16_t u16(std::string_view what) { return uint<std::uint16_t>(what); }
  std::uint32_t u32(std::string_view what) { return uint<std::uint32_t>(what); }
  std::uint64_t u64(std::string_view what) { return uint<std::uint64_t>(what); }
  float f32(std::string_view what) { return std::bit_cast<float>(u32(what)); }
  double f64(std::string_view what) { return std::bit_cast<double>(u64(what)); }

  [[noreturn]] void fail(const std::string& message) const {
    throw FormatError(source_ + ": " + message + " at offset " + std::to_string(offset_));
  }

 private:
  void require(std::size_t n, std::string_view what) const {
    if (n > remaining()) {
      throw FormatError(source_ + ": truncated while reading " + std::string(what) + " at offset " +
                        std::to_string(offset_) + " (need " + std::to_string(n) + " bytes, have " +
                        std::to_string(remaining()) + ")");
    }
  }

  std::vector<unsigned char> data_;
  std::string source_;
  std::size_t offset_ = 0;
};

}  // namespace mvts
