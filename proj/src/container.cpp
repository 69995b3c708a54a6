#include "farmare/container.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace farmare::io {

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
void ByteWriter::raw(const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  bytes_.insert(bytes_.end(), p, p + n);
}
void ByteWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  raw(s.data(), s.size());
}

void ByteReader::need(std::size_t n) const {
  if (pos_ + n > limit_) throw FormatError("truncated file");
}
std::uint8_t ByteReader::u8() {
  need(1);
  return bytes_[pos_++];
}
std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
  return v;
}
std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
  return v;
}
float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }
std::string ByteReader::str() {
  const std::uint32_t n = u32();
  need(n);
  std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return s;
}
void ByteReader::expect_magic(const char (&magic)[5]) {
  need(4);
  if (std::memcmp(bytes_.data() + pos_, magic, 4) != 0) {
    throw FormatError(std::string("bad magic, expected ") + magic);
  }
  pos_ += 4;
}

std::uint32_t crc32(const std::uint8_t* data, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

void write_with_crc(const std::filesystem::path& path, ByteWriter& w) {
  const std::uint32_t crc = crc32(w.bytes().data(), w.bytes().size());
  w.u32(crc);
  write_file(path, w.bytes());
}

std::size_t read_with_crc(const std::filesystem::path& path, std::vector<std::uint8_t>& bytes) {
  bytes = read_file(path);
  if (bytes.size() < 4) throw FormatError(path.string() + ": file too short");
  const std::size_t payload = bytes.size() - 4;
  ByteReader trailer(bytes, bytes.size());
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[payload + i]) << (8 * i);
  if (crc32(bytes.data(), payload) != stored) {
    throw FormatError(path.string() + ": checksum mismatch (corrupted file)");
  }
  return payload;
}

void encode_entries(ByteWriter& w, const std::vector<Entry>& entries) {
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const Entry& e : entries) {
    if (e.values.size() != static_cast<std::size_t>(e.rows) * e.cols) {
      throw std::invalid_argument("container entry '" + e.name + "' has inconsistent shape");
    }
    w.str(e.name);
    w.u8(static_cast<std::uint8_t>(e.dtype));
    w.u32(e.rows);
    w.u32(e.cols);
    if (e.dtype == DType::f32) {
      for (double v : e.values) w.f32(static_cast<float>(v));
    } else {
      for (double v : e.values) w.f64(v);
    }
  }
}

std::vector<Entry> decode_entries(ByteReader& r) {
  const std::uint32_t count = r.u32();
  std::vector<Entry> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = r.str();
    const std::uint8_t dt = r.u8();
    if (dt != 1 && dt != 2) throw FormatError("entry '" + e.name + "': unknown dtype");
    e.dtype = static_cast<DType>(dt);
    e.rows = r.u32();
    e.cols = r.u32();
    const std::size_t n = static_cast<std::size_t>(e.rows) * e.cols;
    e.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) e.values[k] = e.dtype == DType::f32 ? r.f32() : r.f64();
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_container(const std::filesystem::path& path, const std::vector<Entry>& entries) {
  ByteWriter w;
  w.raw("FMC1", 4);
  w.u32(kContainerVersion);
  encode_entries(w, entries);
  write_with_crc(path, w);
}

std::vector<Entry> read_container(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  const std::size_t payload = read_with_crc(path, bytes);
  ByteReader r(bytes, payload);
  r.expect_magic("FMC1");
  const std::uint32_t version = r.u32();
  if (version != kContainerVersion) {
    throw FormatError(path.string() + ": unsupported container version " + std::to_string(version));
  }
  auto entries = decode_entries(r);
  if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes");
  return entries;
}

}  // namespace farmare::io
