#include "upcg/codec.hpp"

#include "upcg/byteio.hpp"
#include "upcg/errors.hpp"

namespace upcg {

CodecModel
CodecModel::fromStore(ParamStore store)
{
  CodecModel m;
  m.store = std::move(store);
  if (m.store.contains("uelc.scheme"))
    m.uelc = UelcModel::find(m.store, "uelc");
  if (m.store.contains("vrcm.settings"))
    m.vrcm = VrcmModel::find(m.store, "vrcm");
  return m;
}

CodecModel
CodecModel::load(const std::string& path)
{
  return fromStore(ParamStore::load(path));
}

namespace {

const UelcModel&
requireUelc(const CodecModel& model)
{
  if (!model.uelc)
    fail(ErrorCode::kModelMismatch, "model has no lossless coordinate coder");
  return *model.uelc;
}

const VrcmModel&
requireVrcm(const CodecModel& model)
{
  if (!model.vrcm)
    fail(ErrorCode::kModelMismatch, "model has no lossy coder");
  return *model.vrcm;
}

BitstreamHeader
baseHeader(const CodecModel& model, const ScalePyramid& pyr, int baseScale)
{
  BitstreamHeader h;
  h.depth = uint8_t(pyr.depth);
  h.modelId = model.id();
  h.baseScale = uint8_t(baseScale);
  for (int s = baseScale; s <= pyr.depth; ++s)
    h.counts.push_back(uint32_t(pyr.levels[s].size()));
  h.base = pyr.levels[baseScale];
  return h;
}

void
fillStats(StreamStats* stats, const Bitstream& s, size_t total, size_t coordChunks)
{
  if (!stats)
    return;
  stats->totalBytes = total;
  stats->coordBytes = 0;
  stats->featureBytes = 0;
  for (size_t i = 0; i < s.chunks.size(); ++i)
    (i < coordChunks ? stats->coordBytes : stats->featureBytes) += 4 + s.chunks[i].size();
  stats->headerBytes = total - stats->coordBytes - stats->featureBytes;
}

}  // namespace

std::vector<uint8_t>
encodeLossless(const CodecModel& model, const CoordSet& cloud, int depth, StreamStats* stats)
{
  const auto& uelc = requireUelc(model);
  if (cloud.empty())
    fail(ErrorCode::kInvalidArgument, "cannot encode an empty cloud");
  const auto pyr = buildPyramid(cloud, depth);
  auto coords = encodeCoords(model.store, uelc, pyr, depth);

  Bitstream s;
  s.header = baseHeader(model, pyr, coords.baseScale);
  s.header.mode = CodingMode::kLossless;
  s.chunks = std::move(coords.chunks);
  auto bytes = serializeBitstream(s);
  if (stats) {
    *stats = {};
    stats->points = pyr.levels[depth].size();
    stats->coords = std::move(coords.report);
    fillStats(stats, s, bytes.size(), s.chunks.size());
  }
  return bytes;
}

std::vector<uint8_t>
encodeLossy(const CodecModel& model, const CoordSet& cloud, int depth, const LossyParams& params,
            StreamStats* stats)
{
  const auto& uelc = requireUelc(model);
  const auto& vrcm = requireVrcm(model);
  if (cloud.empty())
    fail(ErrorCode::kInvalidArgument, "cannot encode an empty cloud");
  if (params.n < 0 || params.n > 2)
    fail(ErrorCode::kInvalidArgument, "downsample count must be 0, 1 or 2");
  const int inputScale = depth - params.n;
  if (inputScale < 2)
    fail(ErrorCode::kInvalidArgument, "downsample count " + std::to_string(params.n)
         + " too large for depth " + std::to_string(depth));
  checkLambda(vrcm, params.lambda, params.unsafeLambda);
  const float lambda = float(params.lambda);
  const float rho = float(params.rho ? *params.rho : vrcm.config.rho(lambda));
  if (!(rho >= 0.0f && rho <= 1.0f))
    fail(ErrorCode::kInvalidArgument, "rho must lie in [0, 1]");

  const auto pyr = buildPyramid(cloud, depth);
  uint64_t macs = 0;
  auto coords = encodeCoords(model.store, uelc, pyr, inputScale - 1);
  const auto latent = encodeLatent(model.store, vrcm, pyr.levels[inputScale], lambda, rho, &macs);

  Bitstream s;
  s.header = baseHeader(model, pyr, coords.baseScale);
  s.header.mode = CodingMode::kLossy;
  s.header.n = uint8_t(params.n);
  s.header.lambda = lambda;
  s.header.rho = rho;
  const size_t coordChunks = coords.chunks.size();
  s.chunks = std::move(coords.chunks);
  s.chunks.push_back(symEncode(vrcm.entropy, model.store, latent.values));
  auto bytes = serializeBitstream(s);
  if (stats) {
    *stats = {};
    stats->points = pyr.levels[depth].size();
    stats->coords = std::move(coords.report);
    stats->featureModelBits = vrcm.entropy.bits(model.store, latent.values);
    stats->macs = macs;
    fillStats(stats, s, bytes.size(), coordChunks);
  }
  return bytes;
}

DecodedStream
decodeStream(const CodecModel& model, std::span<const uint8_t> bytes)
{
  auto s = parseBitstream(bytes);
  const auto& h = s.header;
  if (h.modelId != model.id())
    fail(ErrorCode::kModelMismatch, "stream was produced by a different model");
  const auto& uelc = requireUelc(model);

  DecodedStream out;
  out.header = h;
  if (h.mode == CodingMode::kLossless) {
    const size_t expected = size_t(h.depth - h.baseScale);
    if (s.chunks.size() != expected)
      fail(ErrorCode::kCorruptStream, "expected " + std::to_string(expected)
           + " coordinate chunks, found " + std::to_string(s.chunks.size()));
    auto levels = decodeCoords(model.store, uelc, h.baseScale, h.base, s.chunks);
    for (size_t i = 0; i < levels.size(); ++i)
      if (levels[i].size() != h.counts[i])
        fail(ErrorCode::kCorruptStream, "decoded scale " + std::to_string(h.baseScale + i)
             + " disagrees with its header count");
    out.cloud = std::move(levels.back());
    return out;
  }

  const auto& vrcm = requireVrcm(model);
  const int inputScale = int(h.depth) - int(h.n);
  if (inputScale < 2 || h.baseScale > inputScale - 1)
    fail(ErrorCode::kCorruptStream, "lossy stream scales are inconsistent");
  const size_t coordChunks = size_t(inputScale - 1 - h.baseScale);
  if (s.chunks.size() != coordChunks + 1)
    fail(ErrorCode::kCorruptStream, "expected " + std::to_string(coordChunks + 1)
         + " chunks, found " + std::to_string(s.chunks.size()));

  auto levels = decodeCoords(model.store, uelc, h.baseScale, h.base,
                             std::span(s.chunks).first(coordChunks));
  for (size_t i = 0; i < levels.size(); ++i)
    if (levels[i].size() != h.counts[i])
      fail(ErrorCode::kCorruptStream, "decoded scale " + std::to_string(h.baseScale + i)
           + " disagrees with its header count");
  out.ci = std::move(levels.back());

  LatentCode latent;
  latent.coords = downsample(out.ci);
  latent.values = symDecode(vrcm.entropy, model.store, s.chunks.back(), int(latent.coords.size()));
  out.latentCoords = latent.coords;

  std::vector<uint32_t> counts;
  for (int sc = inputScale; sc <= h.depth; ++sc)
    counts.push_back(h.count(sc));
  out.reconstructed = reconstructLossy(model.store, vrcm, latent, out.ci, counts, h.lambda, h.rho,
                                       &out.macs);
  out.cloud = out.reconstructed.back();
  return out;
}

}  // namespace upcg
