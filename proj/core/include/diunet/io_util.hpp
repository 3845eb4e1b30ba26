#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace diunet {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

static_assert(std::endian::native == std::endian::little,
              "container formats are written little-endian by memcpy");

/// Appends fixed-width little-endian fields to a byte buffer.
class ByteWriter {
 public:
  template <typename V>
  void put(V value) {
    static_assert(std::is_arithmetic_v<V>);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(V));
  }

  template <typename V>
  void put_span(std::span<const V> values) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
    bytes_.insert(bytes_.end(), p, p + values.size_bytes());
  }

  void put_magic(std::string_view magic) { bytes_.insert(bytes_.end(), magic.begin(), magic.end()); }

  /// u32 length followed by the raw bytes.
  void put_string(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }

  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename V>
  V get() {
    V value;
    std::memcpy(&value, take(sizeof(V)), sizeof(V));
    return value;
  }

  template <typename V>
  void get_span(std::span<V> out) {
    std::memcpy(out.data(), take(out.size_bytes()), out.size_bytes());
  }

  void expect_magic(std::string_view magic);
  std::string get_string();

  bool at_end() const noexcept { return pos_ == bytes_.size(); }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  const std::uint8_t* take(std::size_t n);

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary and renames it into place, so readers never
/// observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

/// Binary (P5) graymap.
std::vector<std::uint8_t> encode_pgm(std::size_t height, std::size_t width,
                                     std::span<const std::uint8_t> pixels);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

/// DIUNET_THREADS when set and positive, otherwise the hardware concurrency.
unsigned worker_count();

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index runs
/// exactly once; the first exception is rethrown after all workers finish.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

/// Keeps freed large blocks on the heap instead of returning them to the
/// kernel, which avoids page-fault storms when training reallocates the same
/// activation sizes every step. No-op outside glibc.
void tune_allocator_for_training();

}  // namespace diunet
