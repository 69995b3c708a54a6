#pragma once

// Named-matrix binary container shared by corpus feature files, feature
// caches and model checkpoints.
//
// Layout (all integers little-endian):
//   "FMC1" | u32 version | u32 entry_count
//   per entry: u32 name_len | name | u8 dtype (1 = f32, 2 = f64) | u32 rows | u32 cols | payload
//   u32 crc32 over every preceding byte

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace farmare::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

struct Entry {
  std::string name;
  DType dtype = DType::f64;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<double> values;  // f32 entries are widened losslessly on read

  bool operator==(const Entry&) const = default;
};

inline constexpr std::uint32_t kContainerVersion = 1;

/// Little-endian byte sink.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void raw(const void* data, std::size_t n);
  void str(const std::string& s);  // u32 length prefix

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Little-endian byte source; every read is bounds-checked.
class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes, std::size_t limit)
      : bytes_(bytes), limit_(limit) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string str();
  void expect_magic(const char (&magic)[5]);
  std::size_t position() const { return pos_; }
  bool at_end() const { return pos_ == limit_; }

 private:
  void need(std::size_t n) const;

  const std::vector<std::uint8_t>& bytes_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32(const std::uint8_t* data, std::size_t n);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

/// Appends a CRC trailer and writes the buffer.
void write_with_crc(const std::filesystem::path& path, ByteWriter& w);
/// Reads a file and verifies its CRC trailer; returns the payload length.
std::size_t read_with_crc(const std::filesystem::path& path, std::vector<std::uint8_t>& bytes);

void write_container(const std::filesystem::path& path, const std::vector<Entry>& entries);
std::vector<Entry> read_container(const std::filesystem::path& path);

void encode_entries(ByteWriter& w, const std::vector<Entry>& entries);
std::vector<Entry> decode_entries(ByteReader& r);

}  // namespace farmare::io
