#include "upcg/range_coder.hpp"

#include "upcg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace upcg {

namespace {
constexpr uint64_t kTop = uint64_t(1) << 56;
constexpr uint64_t kBottom = uint64_t(1) << 48;
constexpr int kInitBytes = 7;
// The decoder primes 7 bytes but the encoder leaves out the trailing zero
// bytes of the final interval, so a complete stream is overread by 6.
constexpr size_t kExpectedOverread = kInitBytes - 1;
}  // namespace

uint16_t
quantizeProbability(double p)
{
  if (!(p == p))
    fail(ErrorCode::kNumeric, "probability is NaN");
  const double q = std::round(p * double(kProbOne));
  return uint16_t(std::clamp(q, 1.0, double(kProbOne - 1)));
}

double
bitCost(int bit, uint16_t p16)
{
  const double p = double(p16) / double(kProbOne);
  return -std::log2(bit ? p : 1.0 - p);
}

//============================================================================

void
RangeEncoder::shiftLow()
{
  if (_low < (uint64_t(0xFF) << 48) || _low >= kTop) {
    const uint8_t carry = uint8_t(_low >> 56);
    uint8_t temp = _cache;
    do {
      if (_first)
        _first = false;
      else
        _out.push_back(uint8_t(temp + carry));
      temp = 0xFF;
    } while (--_cacheSize != 0);
    _cache = uint8_t(_low >> 48);
  }
  ++_cacheSize;
  _low = (_low & (kBottom - 1)) << 8;
}

void
RangeEncoder::renormalize()
{
  while (_range < kBottom) {
    _range <<= 8;
    shiftLow();
  }
}

void
RangeEncoder::encodeBit(int bit, uint16_t p16)
{
  const uint64_t bound = (_range >> kProbBits) * p16;
  if (bit) {
    _range = bound;
  } else {
    _low += bound;
    _range -= bound;
  }
  renormalize();
}

void
RangeEncoder::encode(uint32_t cumLo, uint32_t freq)
{
  const uint64_t r = _range >> kProbBits;
  _low += r * cumLo;
  _range = r * freq;
  renormalize();
}

std::vector<uint8_t>
RangeEncoder::finish()
{
  // Any value in [low, low + range) identifies the stream; pick the one
  // whose lower 48 bits are zero so they need not be written.
  _low = (_low + kBottom - 1) & ~(kBottom - 1);
  shiftLow();
  shiftLow();
  return std::move(_out);
}

//============================================================================

RangeDecoder::RangeDecoder(std::span<const uint8_t> bytes) : _in(bytes)
{
  for (int i = 0; i < kInitBytes; ++i)
    _code = (_code << 8) | nextByte();
}

uint8_t
RangeDecoder::nextByte()
{
  const uint8_t b = _pos < _in.size() ? _in[_pos] : 0;
  ++_pos;
  return b;
}

void
RangeDecoder::renormalize()
{
  while (_range < kBottom) {
    _range <<= 8;
    _code = (_code << 8) | nextByte();
  }
}

int
RangeDecoder::decodeBit(uint16_t p16)
{
  const uint64_t bound = (_range >> kProbBits) * p16;
  int bit;
  if (_code < bound) {
    _range = bound;
    bit = 1;
  } else {
    _code -= bound;
    _range -= bound;
    bit = 0;
  }
  renormalize();
  return bit;
}

uint32_t
RangeDecoder::target()
{
  _scale = _range >> kProbBits;
  return uint32_t(std::min<uint64_t>(_code / _scale, kProbOne - 1));
}

void
RangeDecoder::consume(uint32_t cumLo, uint32_t freq)
{
  const uint64_t lo = _scale * cumLo;
  if (_code < lo || _code - lo >= _scale * freq)
    fail(ErrorCode::kCorruptStream, "range decoder: symbol outside coded interval");
  _code -= lo;
  _range = _scale * freq;
  renormalize();
}

void
RangeDecoder::finish() const
{
  const size_t consumed = std::min(_pos, _in.size());
  const size_t overread = _pos - consumed;
  if (overread > kExpectedOverread)
    fail(ErrorCode::kTruncated, "range decoder: stream truncated by "
         + std::to_string(overread - kExpectedOverread) + " bytes");
  if (_pos < _in.size() + kExpectedOverread)
    fail(ErrorCode::kCorruptStream, "range decoder: "
         + std::to_string(_in.size() + kExpectedOverread - _pos) + " unused trailing bytes");
}

}  // namespace upcg
