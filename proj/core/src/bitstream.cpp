#include "upcg/bitstream.hpp"

#include "upcg/byteio.hpp"
#include "upcg/errors.hpp"

#include <cmath>
#include <cstring>

namespace upcg {

const char*
errorCodeName(ErrorCode code)
{
  switch (code) {
  case ErrorCode::kInvalidArgument: return "invalid-argument";
  case ErrorCode::kIo: return "io";
  case ErrorCode::kParse: return "parse";
  case ErrorCode::kCorruptStream: return "corrupt-stream";
  case ErrorCode::kTruncated: return "truncated";
  case ErrorCode::kBadMagic: return "bad-magic";
  case ErrorCode::kBadVersion: return "bad-version";
  case ErrorCode::kLengthMismatch: return "length-mismatch";
  case ErrorCode::kModelMismatch: return "model-mismatch";
  case ErrorCode::kUnsupported: return "unsupported";
  case ErrorCode::kNumeric: return "numeric";
  }
  return "unknown";
}

std::vector<uint8_t>
packCoords(std::span<const VoxelCoord> coords, int bits)
{
  std::vector<uint8_t> out((coords.size() * 3 * size_t(bits) + 7) / 8, 0);
  size_t pos = 0;
  auto put = [&](uint32_t v) {
    for (int b = bits - 1; b >= 0; --b, ++pos)
      if ((v >> b) & 1)
        out[pos / 8] |= uint8_t(0x80 >> (pos % 8));
  };
  for (const auto& c : coords) {
    put(uint32_t(c.x));
    put(uint32_t(c.y));
    put(uint32_t(c.z));
  }
  return out;
}

CoordSet
unpackCoords(std::span<const uint8_t> bytes, size_t count, int bits)
{
  if (bytes.size() != (count * 3 * size_t(bits) + 7) / 8)
    fail(ErrorCode::kLengthMismatch, "packed coordinate block has the wrong size");
  size_t pos = 0;
  auto get = [&]() {
    int32_t v = 0;
    for (int b = 0; b < bits; ++b, ++pos)
      v = (v << 1) | ((bytes[pos / 8] >> (7 - pos % 8)) & 1);
    return v;
  };
  CoordSet out(count);
  for (auto& c : out) {
    c.x = get();
    c.y = get();
    c.z = get();
  }
  return out;
}

namespace {

void
writeHeader(ByteWriter& w, const BitstreamHeader& h)
{
  w.bytes({reinterpret_cast<const uint8_t*>(kStreamMagic), 4});
  w.u8(h.version);
  w.u8(uint8_t(h.mode));
  w.u8(h.depth);
  w.u8(h.n);
  w.f32(h.lambda);
  w.f32(h.rho);
  w.u64(h.modelId);
  w.u8(h.baseScale);
  w.u8(uint8_t(h.counts.size()));
  for (uint32_t c : h.counts)
    w.u32(c);
  w.bytes(packCoords(h.base, h.baseScale));
}

void
validateHeader(const BitstreamHeader& h)
{
  auto corrupt = [](const std::string& what) { fail(ErrorCode::kCorruptStream, what); };
  if (h.depth > kMaxDepth)
    corrupt("depth " + std::to_string(h.depth) + " exceeds " + std::to_string(kMaxDepth));
  if (h.mode != CodingMode::kLossless && h.mode != CodingMode::kLossy)
    corrupt("unknown coding mode " + std::to_string(int(h.mode)));
  if (h.mode == CodingMode::kLossless && (h.n != 0 || h.lambda != 0.0f || h.rho != 0.0f))
    corrupt("lossless stream carries lossy parameters");
  if (h.mode == CodingMode::kLossy) {
    if (h.n > 2)
      corrupt("downsample count " + std::to_string(h.n) + " out of range");
    if (!std::isfinite(h.lambda) || !(h.rho >= 0.0f && h.rho <= 1.0f))
      corrupt("invalid lambda or rho");
  }
  if (h.baseScale > h.depth)
    corrupt("base scale above the stream depth");
  if (h.counts.size() != size_t(h.depth - h.baseScale + 1))
    corrupt("scale count does not match depth and base scale");
  for (size_t i = 0; i < h.counts.size(); ++i) {
    if (h.counts[i] == 0)
      corrupt("scale " + std::to_string(h.baseScale + i) + " has a zero point count");
    if (i > 0 && (h.counts[i] < h.counts[i - 1] || uint64_t(h.counts[i]) > 8ull * h.counts[i - 1]))
      corrupt("point counts of adjacent scales are inconsistent");
  }
  if (h.base.size() != h.counts.front())
    corrupt("base block size differs from the base count");
}

}  // namespace

size_t
headerSize(const BitstreamHeader& header)
{
  ByteWriter w;
  writeHeader(w, header);
  return w.size();
}

std::vector<uint8_t>
serializeBitstream(const Bitstream& s)
{
  validateHeader(s.header);
  if (!coordsFit(s.header.base, s.header.baseScale) || !isCanonical(s.header.base))
    fail(ErrorCode::kInvalidArgument, "base coordinates are not canonical at the base scale");
  if (s.chunks.size() > 255)
    fail(ErrorCode::kInvalidArgument, "too many chunks");
  ByteWriter w;
  writeHeader(w, s.header);
  w.u8(uint8_t(s.chunks.size()));
  for (const auto& c : s.chunks) {
    w.u32(uint32_t(c.size()));
    w.bytes(c);
  }
  return w.take();
}

Bitstream
parseBitstream(std::span<const uint8_t> bytes)
{
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kStreamMagic, 4) != 0)
    fail(ErrorCode::kBadMagic, "not a UPCG stream (magic mismatch)");
  ByteReader r(bytes.subspan(4));
  Bitstream s;
  auto& h = s.header;
  h.version = r.u8();
  if (h.version != kStreamVersion)
    fail(ErrorCode::kBadVersion, "unsupported stream version " + std::to_string(h.version));
  h.mode = CodingMode(r.u8());
  h.depth = r.u8();
  h.n = r.u8();
  h.lambda = r.f32();
  h.rho = r.f32();
  h.modelId = r.u64();
  h.baseScale = r.u8();
  const int numCounts = r.u8();
  h.counts.resize(numCounts);
  for (auto& c : h.counts)
    c = r.u32();
  if (h.baseScale > kMaxDepth || h.counts.empty())
    fail(ErrorCode::kCorruptStream, "invalid base scale or empty count table");
  const size_t baseBytes = (size_t(h.counts.front()) * 3 * h.baseScale + 7) / 8;
  h.base = unpackCoords(r.bytes(baseBytes), h.counts.front(), h.baseScale);
  validateHeader(h);
  if (!isCanonical(h.base))
    fail(ErrorCode::kCorruptStream, "base coordinates are not in canonical order");

  const int numChunks = r.u8();
  for (int i = 0; i < numChunks; ++i) {
    if (r.remaining() < 4)
      fail(ErrorCode::kLengthMismatch, "chunk " + std::to_string(i) + " is missing its length");
    const uint32_t len = r.u32();
    if (len > r.remaining())
      fail(ErrorCode::kLengthMismatch, "chunk " + std::to_string(i) + " declares "
           + std::to_string(len) + " bytes but only " + std::to_string(r.remaining())
           + " remain");
    auto payload = r.bytes(len);
    s.chunks.emplace_back(payload.begin(), payload.end());
  }
  if (r.remaining() != 0)
    fail(ErrorCode::kLengthMismatch, std::to_string(r.remaining())
         + " trailing bytes after the last chunk");
  return s;
}

}  // namespace upcg
