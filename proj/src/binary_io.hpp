#pragma once

// Little-endian primitive encoding shared by the corpus and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <type_traits>

#include "sfdiff/errors.hpp"

namespace sfdiff::detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class ByteWriter {
 public:
  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    out_.append(raw, sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) { out_.append(static_cast<const char*>(data), n); }
  void put_magic(const char (&magic)[5]) { out_.append(magic, 4); }

  const std::string& bytes() const { return out_; }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    T value;
    get_bytes(&value, sizeof(T));
    return value;
  }
  void get_bytes(void* dst, std::size_t n) {
    if (n > bytes_.size() - pos_) throw IoError("truncated input at byte " + std::to_string(pos_));
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  void expect_magic(const char (&magic)[5]) {
    char got[4];
    get_bytes(got, 4);
    if (std::memcmp(got, magic, 4) != 0) throw IoError(std::string("bad magic, expected ") + magic);
  }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace sfdiff::detail
