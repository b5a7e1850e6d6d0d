#pragma once

#include "upcg/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

namespace upcg {

// Little-endian serialization helpers shared by the checkpoint and
// bitstream containers.
class ByteWriter {
public:
  void u8(uint8_t v) { _bytes.push_back(v); }
  void u16(uint16_t v) { putLE(v, 2); }
  void u32(uint32_t v) { putLE(v, 4); }
  void u64(uint64_t v) { putLE(v, 8); }
  void i32(int32_t v) { putLE(uint32_t(v), 4); }
  void f32(float v) { putLE(std::bit_cast<uint32_t>(v), 4); }
  void bytes(std::span<const uint8_t> b) { _bytes.insert(_bytes.end(), b.begin(), b.end()); }
  void str(const std::string& s) { _bytes.insert(_bytes.end(), s.begin(), s.end()); }

  size_t size() const { return _bytes.size(); }
  const std::vector<uint8_t>& data() const { return _bytes; }
  std::vector<uint8_t> take() { return std::move(_bytes); }

private:
  void putLE(uint64_t v, int n)
  {
    for (int i = 0; i < n; ++i)
      _bytes.push_back(uint8_t(v >> (8 * i)));
  }

  std::vector<uint8_t> _bytes;
};

class ByteReader {
public:
  explicit ByteReader(std::span<const uint8_t> data) : _data(data) {}

  uint8_t u8() { return uint8_t(getLE(1)); }
  uint16_t u16() { return uint16_t(getLE(2)); }
  uint32_t u32() { return uint32_t(getLE(4)); }
  uint64_t u64() { return getLE(8); }
  int32_t i32() { return int32_t(uint32_t(getLE(4))); }
  float f32() { return std::bit_cast<float>(uint32_t(getLE(4))); }

  std::span<const uint8_t> bytes(size_t n)
  {
    require(n);
    auto out = _data.subspan(_pos, n);
    _pos += n;
    return out;
  }

  std::string str(size_t n)
  {
    auto b = bytes(n);
    return std::string(b.begin(), b.end());
  }

  size_t pos() const { return _pos; }
  size_t remaining() const { return _data.size() - _pos; }

private:
  void require(size_t n) const
  {
    if (_data.size() - _pos < n)
      fail(ErrorCode::kTruncated, "unexpected end of data at byte offset " + std::to_string(_pos));
  }

  uint64_t getLE(int n)
  {
    require(size_t(n));
    uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= uint64_t(_data[_pos + i]) << (8 * i);
    _pos += n;
    return v;
  }

  std::span<const uint8_t> _data;
  size_t _pos = 0;
};

// 64-bit FNV-1a.
inline uint64_t
fnv1a64(std::span<const uint8_t> data)
{
  uint64_t h = 0xcbf29ce484222325ull;
  for (uint8_t b : data) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::vector<uint8_t> readFile(const std::string& path);
void writeFile(const std::string& path, std::span<const uint8_t> data);

}  // namespace upcg
