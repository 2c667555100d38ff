#ifndef CSANET_SRC_BINARY_IO_HPP_
#define CSANET_SRC_BINARY_IO_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csanet/tensor.hpp"

namespace csanet::detail {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian and written natively");

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Appends little-endian scalars to an in-memory buffer.
class BinaryWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void magic(std::string_view m) { bytes(m.data(), m.size()); }
  template <typename T>
  void put(T v) {
    bytes(&v, sizeof(T));
  }
  void f64s(std::span<const double> xs) { bytes(xs.data(), xs.size() * sizeof(double)); }
  void matrix(const Matrix& m) {
    put<std::uint64_t>(m.rows());
    put<std::uint64_t>(m.cols());
    f64s(m.data());
  }
  void vector(const Vector& v) {
    put<std::uint64_t>(1);
    put<std::uint64_t>(v.size());
    f64s(v);
  }
  /// Appends a CRC32 of everything written so far.
  void seal() { put<std::uint32_t>(crc32(buf_)); }

  const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }
  void write_file(const std::string& path) const;

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader; every overrun raises IntegrityError naming `what_`.
class BinaryReader {
 public:
  BinaryReader(std::span<const std::uint8_t> data, std::string what)
      : data_(data), what_(std::move(what)) {}

  static std::vector<std::uint8_t> read_file(const std::string& path);

  void bytes(void* out, std::size_t n);
  void expect_magic(std::string_view m);
  template <typename T>
  T get() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  void f64s(std::span<double> out) { bytes(out.data(), out.size() * sizeof(double)); }
  Matrix matrix();
  Vector vector();
  /// Verifies the trailing CRC32 over all bytes before it and strips it.
  void verify_seal();
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string what_;
};

}  // namespace csanet::detail

#endif  // CSANET_SRC_BINARY_IO_HPP_
