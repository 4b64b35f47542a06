#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>

#include "lsg/error.hpp"
#include "lsg/matrix.hpp"

namespace lsg::io {

/// Little-endian byte sink.
class ByteWriter {
 public:
  void magic(std::string_view m) { buf_.append(m); }

  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) buf_.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
  }

  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) buf_.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
  }

  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void string(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }

  /// rows, cols, then entries in row-major order.
  void matrix(const Matrix& m) {
    u32(static_cast<std::uint32_t>(m.rows()));
    u32(static_cast<std::uint32_t>(m.cols()));
    for (double v : m.data()) f64(v);
  }

  void bytes(std::string_view raw) { buf_.append(raw); }

  const std::string& buffer() const noexcept { return buf_; }

 private:
  std::string buf_;
};

/// Little-endian byte source; every short read reports the byte offset.
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  void expect_magic(std::string_view m) {
    need(m.size());
    if (data_.substr(pos_, m.size()) != m) {
      throw FormatError("bad magic: expected '" + std::string(m) + "'");
    }
    pos_ += m.size();
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + b])) << (8 * b);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + b])) << (8 * b);
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string string() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  Matrix matrix() {
    const std::size_t r = u32();
    const std::size_t c = u32();
    need(r * c * 8);
    Matrix m(r, c);
    for (double& v : m.data()) v = f64();
    return m;
  }

  std::size_t position() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ == data_.size(); }

  void expect_end() const {
    if (!at_end()) {
      throw FormatError("trailing bytes after offset " + std::to_string(pos_));
    }
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw FormatError("truncated at byte " + std::to_string(data_.size()) +
                        " (needed " + std::to_string(n) + " bytes at offset " +
                        std::to_string(pos_) + ")");
    }
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.empty()) throw IoError("empty output path");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline void check_version(std::uint32_t got, std::uint32_t want, std::string_view what) {
  if (got != want) {
    throw FormatError(std::string(what) + ": unsupported version " + std::to_string(got) +
                      " (expected " + std::to_string(want) + ")");
  }
}

}  // namespace lsg::io
