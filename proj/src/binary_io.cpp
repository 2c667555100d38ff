#include "binary_io.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>

#include "csanet/errors.hpp"

namespace csanet::detail {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for large buffers.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = ::crc32(crc, bytes.data() + pos, static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

void BinaryWriter::write_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataError::Code::Io, "cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(buf_.data()),
            static_cast<std::streamsize>(buf_.size()));
  if (!out) throw DataError(DataError::Code::Io, "write failed: " + path);
}

std::vector<std::uint8_t> BinaryReader::read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataError::Code::Io, "cannot open: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void BinaryReader::bytes(void* out, std::size_t n) {
  if (n > remaining()) {
    throw IntegrityError(what_ + ": unexpected end of data (truncated file?)");
  }
  std::memcpy(out, data_.data() + pos_, n);
  pos_ += n;
}

void BinaryReader::expect_magic(std::string_view m) {
  std::string got(m.size(), '\0');
  bytes(got.data(), got.size());
  if (got != m) throw IntegrityError(what_ + ": bad magic bytes");
}

Matrix BinaryReader::matrix() {
  const auto rows = get<std::uint64_t>();
  const auto cols = get<std::uint64_t>();
  if (cols != 0 && rows > remaining() / sizeof(double) / cols) {
    throw IntegrityError(what_ + ": tensor shape exceeds file size");
  }
  Matrix m(rows, cols);
  f64s(m.data());
  return m;
}

Vector BinaryReader::vector() {
  Matrix m = matrix();
  if (m.rows() != 1) throw IntegrityError(what_ + ": expected a vector tensor");
  return std::move(m.data());
}

void BinaryReader::verify_seal() {
  if (data_.size() < sizeof(std::uint32_t)) {
    throw IntegrityError(what_ + ": file too short");
  }
  const std::size_t body = data_.size() - sizeof(std::uint32_t);
  std::uint32_t stored;
  std::memcpy(&stored, data_.data() + body, sizeof(stored));
  if (crc32(data_.subspan(0, body)) != stored) {
    throw IntegrityError(what_ + ": checksum mismatch (corrupt or truncated file)");
  }
  data_ = data_.subspan(0, body);
}

}  // namespace csanet::detail
