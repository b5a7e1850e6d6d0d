#include "oracles.hpp"

#include "upcg/codec.hpp"
#include "upcg/errors.hpp"
#include "upcg/metrics.hpp"
#include "upcg/ply.hpp"
#include "upcg/synth.hpp"
#include "upcg/voxelize.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace upcg {
namespace {

template <typename F>
ErrorCode
codeOf(F&& f, std::string* message = nullptr)
{
  try {
    f();
  } catch (const Error& e) {
    if (message)
      *message = e.what();
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kInvalidArgument;
}

std::vector<uint8_t>
bytesOf(const std::string& s)
{
  return {s.begin(), s.end()};
}

// Small random coder pair; quality is irrelevant for structural checks.
CodecModel
randomModel(uint64_t seed)
{
  ParamStore store;
  Rng rng(seed);
  UelcConfig u;
  u.kernel = 3;
  u.width = 4;
  u.trunkBlocks = 1;
  u.stageBlocks = 1;
  UelcModel::add(store, "uelc", u, rng);
  VrcmConfig v;
  v.width = 4;
  v.latent = 2;
  v.blocks = 1;
  v.modHidden = 4;
  VrcmModel::add(store, "vrcm", v, rng);
  return CodecModel::fromStore(std::move(store));
}

BitstreamHeader
sampleHeader()
{
  BitstreamHeader h;
  h.mode = CodingMode::kLossy;
  h.depth = 6;
  h.n = 1;
  h.lambda = 0.7f;
  h.rho = 0.375f;
  h.modelId = 0x0123456789abcdefull;
  h.baseScale = 2;
  h.counts = {3, 10, 40, 100, 300};
  h.base = {{0, 1, 2}, {1, 1, 1}, {3, 3, 0}};
  return h;
}

//============================================================================
// Bitstream container

TEST(Bitstream, HeaderRoundTrip)
{
  Bitstream s;
  s.header = sampleHeader();
  s.chunks = {{1, 2, 3}, {}, std::vector<uint8_t>(1000, 7)};
  const auto bytes = serializeBitstream(s);
  EXPECT_EQ(bytes.size(), headerSize(s.header) + 1 + 3 * 4 + 3 + 1000);
  const auto back = parseBitstream(bytes);
  EXPECT_EQ(back.header, s.header);
  EXPECT_EQ(back.chunks, s.chunks);
}

TEST(Bitstream, PackCoordsRoundTrip)
{
  Rng rng(1);
  for (int bits : {1, 3, 7, 12}) {
    auto c = oracle::randomCloud(rng, 37, 1 << bits);
    const auto packed = packCoords(c, bits);
    EXPECT_EQ(packed.size(), (c.size() * 3 * bits + 7) / 8);
    EXPECT_EQ(unpackCoords(packed, c.size(), bits), c);
  }
  EXPECT_TRUE(packCoords(CoordSet{{0, 0, 0}}, 0).empty());
}

TEST(Bitstream, RejectsBadMagicAndVersion)
{
  Bitstream s;
  s.header = sampleHeader();
  s.chunks = {{9, 9}};
  auto bytes = serializeBitstream(s);
  auto flipped = bytes;
  flipped[0] ^= 0x01;
  EXPECT_EQ(codeOf([&] { parseBitstream(flipped); }), ErrorCode::kBadMagic);
  EXPECT_EQ(codeOf([&] { parseBitstream(std::span(bytes).first(2)); }), ErrorCode::kBadMagic);
  auto version = bytes;
  version[4] = kStreamVersion + 1;
  EXPECT_EQ(codeOf([&] { parseBitstream(version); }), ErrorCode::kBadVersion);
}

TEST(Bitstream, TruncatedFinalChunkNamesIt)
{
  Bitstream s;
  s.header = sampleHeader();
  s.chunks = {{1, 2, 3}, {4, 5, 6, 7, 8}};
  const auto bytes = serializeBitstream(s);
  std::string msg;
  EXPECT_EQ(codeOf([&] { parseBitstream(std::span(bytes).first(bytes.size() - 2)); }, &msg),
            ErrorCode::kLengthMismatch);
  EXPECT_NE(msg.find("chunk 1"), std::string::npos) << msg;
  // Cut inside the length field.
  const size_t second = headerSize(s.header) + 1 + 4 + 3;
  EXPECT_EQ(codeOf([&] { parseBitstream(std::span(bytes).first(second + 2)); }, &msg),
            ErrorCode::kLengthMismatch);
  EXPECT_NE(msg.find("chunk 1"), std::string::npos) << msg;
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_EQ(codeOf([&] { parseBitstream(longer); }), ErrorCode::kLengthMismatch);
}

TEST(Bitstream, RejectsInconsistentHeaders)
{
  auto bad = [](auto edit) {
    Bitstream s;
    s.header = sampleHeader();
    edit(s.header);
    return s;
  };
  EXPECT_THROW(serializeBitstream(bad([](auto& h) { h.counts[2] = 0; })), Error);
  EXPECT_THROW(serializeBitstream(bad([](auto& h) { h.counts[3] = 39; })), Error);
  EXPECT_THROW(serializeBitstream(bad([](auto& h) { h.counts[3] = 321; })), Error);
  EXPECT_THROW(serializeBitstream(bad([](auto& h) { h.n = 3; })), Error);
  EXPECT_THROW(serializeBitstream(bad([](auto& h) { h.rho = 1.5f; })), Error);
  EXPECT_THROW(serializeBitstream(bad([](auto& h) { h.base.pop_back(); })), Error);
  EXPECT_THROW(serializeBitstream(bad([](auto& h) { h.base[2] = {4, 0, 0}; })), Error);
  EXPECT_THROW(serializeBitstream(bad([](auto& h) {
                 h.mode = CodingMode::kLossless;  // lossless keeps lambda = rho = 0
               })),
               Error);
}

//============================================================================
// End-to-end codec with an untrained model

TEST(Codec, LosslessRoundTripAndAccounting)
{
  const auto model = randomModel(3);
  for (int depth : {3, 5, 7}) {
    const auto cloud = synthCloud(SynthKind::kTorus, depth, uint64_t(depth));
    StreamStats st;
    const auto bytes = encodeLossless(model, cloud, depth, &st);
    EXPECT_EQ(st.totalBytes, bytes.size());
    EXPECT_EQ(st.headerBytes + st.coordBytes + st.featureBytes, st.totalBytes);
    EXPECT_EQ(st.featureBytes, 0u);
    EXPECT_EQ(st.points, cloud.size());
    EXPECT_DOUBLE_EQ(st.bpp(), 8.0 * double(bytes.size()) / double(cloud.size()));
    const auto dec = decodeStream(model, bytes);
    EXPECT_EQ(dec.cloud, cloud);
    EXPECT_EQ(dec.header.mode, CodingMode::kLossless);
  }
}

TEST(Codec, LossyStructure)
{
  const auto model = randomModel(4);
  const auto cloud = synthCloud(SynthKind::kSphereShell, 6, 1);
  const auto pyr = buildPyramid(cloud, 6);
  for (int n : {0, 1, 2}) {
    LossyParams p;
    p.lambda = 1.2;
    p.n = n;
    StreamStats st;
    const auto bytes = encodeLossy(model, cloud, 6, p, &st);
    EXPECT_EQ(st.headerBytes + st.coordBytes + st.featureBytes, bytes.size());
    EXPECT_GT(st.featureBytes, 4u);
    EXPECT_GT(st.macs, 0u);
    const auto dec = decodeStream(model, bytes);
    EXPECT_EQ(dec.header.n, n);
    EXPECT_FLOAT_EQ(dec.header.rho, float(model.vrcm->config.rho(1.2)));
    EXPECT_EQ(dec.ci, pyr.levels[6 - n - 1]);
    EXPECT_EQ(dec.latentCoords, pyr.levels[6 - n - 2]);
    ASSERT_EQ(dec.reconstructed.size(), size_t(n + 1));
    EXPECT_EQ(dec.cloud.size(), cloud.size());
    EXPECT_TRUE(isCanonical(dec.cloud));
    // Same stream, same reconstruction.
    EXPECT_EQ(decodeStream(model, bytes).cloud, dec.cloud);
    EXPECT_EQ(encodeLossy(model, cloud, 6, p), bytes);
  }
}

TEST(Codec, LossyArgumentChecks)
{
  const auto model = randomModel(5);
  const auto cloud = synthCloud(SynthKind::kBoxFaces, 5, 1);
  LossyParams p;
  p.lambda = 5.0;
  EXPECT_EQ(codeOf([&] { encodeLossy(model, cloud, 5, p); }), ErrorCode::kInvalidArgument);
  p.unsafeLambda = true;
  EXPECT_NO_THROW(encodeLossy(model, cloud, 5, p));
  p = {};
  p.n = 3;
  EXPECT_EQ(codeOf([&] { encodeLossy(model, cloud, 5, p); }), ErrorCode::kInvalidArgument);
  p = {};
  p.rho = 1.5;
  EXPECT_EQ(codeOf([&] { encodeLossy(model, cloud, 5, p); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(codeOf([&] { encodeLossless(model, CoordSet{}, 5); }), ErrorCode::kInvalidArgument);
}

TEST(Codec, ModelMismatch)
{
  const auto a = randomModel(6);
  const auto b = randomModel(7);
  EXPECT_NE(a.id(), b.id());
  const auto bytes = encodeLossless(a, synthCloud(SynthKind::kSponge, 5, 1), 5);
  EXPECT_EQ(codeOf([&] { decodeStream(b, bytes); }), ErrorCode::kModelMismatch);

  ParamStore onlyUelc;
  Rng rng(1);
  UelcModel::add(onlyUelc, "uelc", UelcConfig{}, rng);
  const auto lossless = CodecModel::fromStore(std::move(onlyUelc));
  EXPECT_EQ(codeOf([&] { encodeLossy(lossless, CoordSet{{1, 1, 1}}, 4, {}); }),
            ErrorCode::kModelMismatch);
}

TEST(Codec, CorruptPayloadIsDetectedOrDecodesToSomething)
{
  const auto model = randomModel(8);
  const auto cloud = synthCloud(SynthKind::kPlanarPatches, 6, 2);
  const auto bytes = encodeLossless(model, cloud, 6);
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto bad = bytes;
    const size_t pos = headerSize(decodeStream(model, bytes).header) + 5
      + rng.below(bad.size() - headerSize(decodeStream(model, bytes).header) - 5);
    bad[pos] ^= uint8_t(1 + rng.below(255));
    try {
      const auto dec = decodeStream(model, bad);
      EXPECT_EQ(dec.cloud.size(), cloud.size());
    } catch (const Error& e) {
      EXPECT_TRUE(e.code() == ErrorCode::kCorruptStream || e.code() == ErrorCode::kTruncated
                  || e.code() == ErrorCode::kLengthMismatch)
        << e.what();
    }
  }
}

//============================================================================
// PLY

TEST(Ply, OneVertexAscii)
{
  const auto pts = readPly(bytesOf("ply\nformat ascii 1.0\ncomment hi\nelement vertex 1\n"
                                   "property float x\nproperty float y\nproperty float z\n"
                                   "end_header\n1.5 -2 3e2\n"));
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_EQ(pts[0], (Point3{1.5, -2.0, 300.0}));
}

TEST(Ply, SkipsOtherElementsAndListProperties)
{
  const std::string text =
    "ply\nformat ascii 1.0\nelement camera 1\nproperty float fov\n"
    "element vertex 2\nproperty uchar red\nproperty list uchar int idx\nproperty double z\n"
    "property double x\nproperty double y\nelement face 1\nproperty list uchar int v\n"
    "end_header\n45\n7 2 10 11 3 1 2\n8 0 6 4 5\n3 0 1 2\n";
  const auto pts = readPly(bytesOf(text));
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0], (Point3{1, 2, 3}));
  EXPECT_EQ(pts[1], (Point3{4, 5, 6}));
}

TEST(Ply, BinaryWithMixedTypes)
{
  std::string h = "ply\nformat binary_little_endian 1.0\nelement vertex 2\n"
                  "property short x\nproperty uchar pad\nproperty float y\nproperty int z\n"
                  "end_header\n";
  std::vector<uint8_t> b = bytesOf(h);
  auto put = [&](const void* p, size_t n) {
    const auto* c = static_cast<const uint8_t*>(p);
    b.insert(b.end(), c, c + n);
  };
  for (int i = 0; i < 2; ++i) {
    const int16_t x = int16_t(-3 + i);
    const uint8_t pad = 0xee;
    const float y = 0.25f * float(i + 1);
    const int32_t z = 100000 * (i + 1);
    put(&x, 2);
    put(&pad, 1);
    put(&y, 4);
    put(&z, 4);
  }
  const auto pts = readPly(b);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[1], (Point3{-2, 0.5, 200000}));
}

TEST(Ply, RoundTripBothFormats)
{
  Rng rng(4);
  std::vector<Point3> ints, reals;
  for (int i = 0; i < 1000; ++i) {
    ints.push_back({double(rng.below(4096)), double(rng.below(4096)), double(rng.below(4096))});
    reals.push_back({rng.uniform(-1e3, 1e3), rng.normal(), rng.uniform() * 1e-7});
  }
  for (auto fmt : {PlyFormat::kAscii, PlyFormat::kBinaryLE}) {
    EXPECT_EQ(readPly(writePly(ints, fmt)), ints);
    EXPECT_EQ(readPly(writePly(reals, fmt)), reals);
  }
  const std::string text(reinterpret_cast<const char*>(writePly(ints, PlyFormat::kAscii).data()),
                         60);
  EXPECT_NE(text.find("property int x"), std::string::npos);
}

TEST(Ply, Errors)
{
  EXPECT_EQ(codeOf([&] {
              readPly(bytesOf("ply\nformat binary_big_endian 1.0\nelement vertex 0\n"
                              "property float x\nproperty float y\nproperty float z\n"
                              "end_header\n"));
            }),
            ErrorCode::kUnsupported);
  const auto good = writePly(std::vector<Point3>(10, Point3{1, 2, 3}), PlyFormat::kBinaryLE);
  std::string msg;
  EXPECT_EQ(codeOf([&] { readPly(std::span(good).first(good.size() - 5)); }, &msg),
            ErrorCode::kParse);
  EXPECT_NE(msg.find("byte"), std::string::npos) << msg;
  EXPECT_EQ(codeOf([&] { readPly(bytesOf("plyx\n")); }), ErrorCode::kParse);
  EXPECT_EQ(codeOf([&] {
              readPly(bytesOf("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n"
                              "property float y\nend_header\n1 2\n"));
            }),
            ErrorCode::kParse);
  EXPECT_EQ(codeOf([&] {
              readPly(bytesOf("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\n"
                              "property float y\nproperty float z\nend_header\n1 2 3\n"));
            }),
            ErrorCode::kParse);
  EXPECT_EQ(codeOf([&] {
              readPly(bytesOf("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n"
                              "property float y\nproperty float z\nend_header\nnan 2 3\n"));
            }),
            ErrorCode::kParse);
  EXPECT_EQ(codeOf([&] { loadPly("/nonexistent/dir/x.ply"); }), ErrorCode::kIo);
}

//============================================================================
// Voxelization

TEST(Voxelize, IntegerCloudKeepsIdentity)
{
  const std::vector<Point3> pts = {{0, 0, 0}, {15, 3, 7}, {15, 3, 7}, {2, 9, 1}};
  const auto v = voxelize(pts, 4);
  EXPECT_TRUE(v.transform.identity());
  EXPECT_EQ(v.coords, (CoordSet{{0, 0, 0}, {2, 9, 1}, {15, 3, 7}}));
  EXPECT_EQ(devoxelize(v.coords, v.transform), toPoints(v.coords));
  // One coordinate past the grid forces rescaling.
  const std::vector<Point3> big = {{0, 0, 0}, {16, 0, 0}};
  EXPECT_FALSE(voxelize(big, 4).transform.identity());
}

TEST(Voxelize, OppositeCornersSpanTheGrid)
{
  const std::vector<Point3> pts = {{-1.5, 2.0, 0.25}, {8.5, 12.0, 10.25}};
  for (int depth : {1, 6, 10}) {
    const auto v = voxelize(pts, depth);
    const int top = (1 << depth) - 1;
    EXPECT_EQ(v.coords, (CoordSet{{0, 0, 0}, {top, top, top}}));
    EXPECT_DOUBLE_EQ(v.transform.scale, double(top) / 10.0);
    const auto w = devoxelize(v.coords, v.transform);
    for (int a = 0; a < 3; ++a) {
      EXPECT_NEAR(w[0][a], pts[0][a], 1e-9);
      EXPECT_NEAR(w[1][a], pts[1][a], 1e-9);
    }
  }
}

TEST(Voxelize, DegenerateAndInvalid)
{
  const std::vector<Point3> same(5, Point3{3.5, -1.25, 7.0});
  const auto v = voxelize(same, 8);
  EXPECT_EQ(v.coords, (CoordSet{{0, 0, 0}}));
  EXPECT_EQ(v.transform.scale, 1.0);
  EXPECT_EQ(v.transform.toWorld({0, 0, 0}), same[0]);
  EXPECT_THROW(voxelize(std::vector<Point3>{}, 8), Error);
  EXPECT_THROW(voxelize(same, 0), Error);
  EXPECT_THROW(voxelize(same, 13), Error);
  const std::vector<Point3> inf = {{0, 0, 0}, {std::numeric_limits<double>::infinity(), 0, 0}};
  EXPECT_THROW(voxelize(inf, 8), Error);
}

// Every input point lies within half a voxel (per axis) of some output voxel.
TEST(Voxelize, HalfVoxelErrorBound)
{
  Rng rng(9);
  std::vector<Point3> pts;
  for (int i = 0; i < 300; ++i)
    pts.push_back({rng.uniform(-5, 5), rng.uniform(0, 3), rng.normal()});
  const auto v = voxelize(pts, 7);
  const auto w = devoxelize(v.coords, v.transform);
  const double halfVoxel = 0.5 / v.transform.scale;
  for (const auto& p : pts) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : w) {
      double e = 0.0;
      for (int a = 0; a < 3; ++a)
        e = std::max(e, std::abs(p[a] - q[a]));
      best = std::min(best, e);
    }
    EXPECT_LE(best, halfVoxel * (1 + 1e-9));
  }
}

//============================================================================
// Metrics

TEST(Metrics, PsnrClosedForm)
{
  EXPECT_DOUBLE_EQ(psnrFromMse(1.0, 10), 10.0 * std::log10(3.0 * 1023.0 * 1023.0));
  EXPECT_TRUE(std::isinf(psnrFromMse(0.0, 10)));
}

TEST(Metrics, IdenticalCloudsAreInfinite)
{
  const auto c = synthCloud(SynthKind::kTorus, 6, 3);
  EXPECT_TRUE(std::isinf(d1(c, c, 6).psnr));
  EXPECT_TRUE(std::isinf(d2(c, c, 6).psnr));
  EXPECT_EQ(d1(c, c, 6).mse, 0.0);
}

TEST(Metrics, UnitShiftClosedForm)
{
  CoordSet a, b;
  for (int x = 0; x < 12; ++x)
    for (int y = 0; y < 12; ++y) {
      a.push_back({x, y, 4});
      b.push_back({x, y, 5});
    }
  const auto e = d1(a, b, 8);
  EXPECT_DOUBLE_EQ(e.mse, 1.0);
  EXPECT_DOUBLE_EQ(e.psnr, 10.0 * std::log10(3.0 * 255.0 * 255.0));
  // Shift along the plane normal: point-to-plane equals point-to-point.
  EXPECT_NEAR(d2(a, b, 8).mse, 1.0, 1e-12);
}

TEST(Metrics, PointToPlaneIgnoresInPlaneError)
{
  std::vector<Point3> ref, rec;
  for (int x = 0; x < 10; ++x)
    for (int y = 0; y < 10; ++y) {
      ref.push_back({double(x), double(y), 3.0});
      rec.push_back({x + 0.5, double(y), 3.0});
    }
  EXPECT_NEAR(d1(ref, rec, 8).mse, 0.25, 1e-12);
  EXPECT_NEAR(d2(ref, rec, 8).mse, 0.0, 1e-20);
}

TEST(Metrics, D1IsSymmetricAndTakesTheWorseSide)
{
  // b = a plus one far point: a -> b is exact, b -> a pays for the outlier.
  const std::vector<Point3> a = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  std::vector<Point3> b = a;
  b.push_back({2, 3, 0});
  const auto e = d1(a, b, 4);
  EXPECT_DOUBLE_EQ(e.mse, 9.0 / 4.0);
  EXPECT_DOUBLE_EQ(d1(b, a, 4).mse, e.mse);
}

TEST(Metrics, NormalsOfAPlane)
{
  std::vector<Point3> pts;
  for (int x = 0; x < 6; ++x)
    for (int y = 0; y < 6; ++y)
      pts.push_back({double(x), double(y), 0.5 * x + 0.25 * y});
  const auto n = estimateNormals(pts, kNormalNeighbors);
  const double len = std::sqrt(0.25 + 0.0625 + 1.0);
  for (const auto& v : n) {
    const double dot = (-0.5 * v[0] - 0.25 * v[1] + v[2]) / len;
    EXPECT_NEAR(std::abs(dot), 1.0, 1e-9);
  }
}

// log10(rate) = 0.1 * psnr - 2 for the anchor; the test curve adds
// c * (psnr - 35)^2, both exactly representable by the cubic fit.
TEST(BdRate, ClosedFormCubic)
{
  const double c = 0.001;
  std::vector<RateQuality> a, b;
  for (double p : {30.0, 33.0, 36.0, 40.0})
    a.push_back({std::pow(10.0, 0.1 * p - 2), p});
  for (double p : {31.0, 34.0, 37.0, 42.0})
    b.push_back({std::pow(10.0, 0.1 * p - 2 + c * (p - 35) * (p - 35)), p});
  const double lo = 31.0, hi = 40.0;
  auto cube = [](double x) { return (x - 35) * (x - 35) * (x - 35) / 3.0; };
  const double avg = c * (cube(hi) - cube(lo)) / (hi - lo);
  const double expect = (std::pow(10.0, avg) - 1.0) * 100.0;
  EXPECT_NEAR(bdRate(a, b), expect, 1e-6);
}

TEST(BdRate, IdentitiesAndScaling)
{
  const std::vector<RateQuality> a = {{0.2, 31.2}, {0.45, 34.0}, {0.9, 37.1}, {1.6, 39.5}};
  auto b = a;
  for (auto& q : b)
    q.rate *= 0.9;
  for (auto m : {BdMethod::kCubic, BdMethod::kPchip}) {
    EXPECT_NEAR(bdRate(a, a, m), 0.0, 1e-9);
    EXPECT_NEAR(bdRate(a, b, m), -10.0, 0.5);
    EXPECT_NEAR(bdRate(a, b, m), -10.0, 1e-6);
    std::vector<RateQuality> c = {{0.25, 30.0}, {0.4, 33.5}, {1.0, 37.0}, {1.5, 40.0}};
    const double x = bdRate(a, c, m) / 100.0;
    const double y = bdRate(c, a, m) / 100.0;
    EXPECT_NEAR((1 + x) * (1 + y), 1.0, 1e-9);
  }
}

TEST(BdRate, PchipMatchesCubicOnSmoothCurves)
{
  std::vector<RateQuality> a, b;
  for (double p : {30.0, 32.0, 34.0, 36.0, 38.0, 40.0}) {
    a.push_back({std::exp(0.2 * p - 6.0), p});
    b.push_back({std::exp(0.2 * p - 6.1), p});
  }
  EXPECT_NEAR(bdRate(a, b, BdMethod::kPchip), bdRate(a, b, BdMethod::kCubic), 1e-3);
}

TEST(BdRate, Errors)
{
  const std::vector<RateQuality> a = {{0.2, 30}, {0.4, 32}, {0.8, 34}, {1.6, 36}};
  const std::vector<RateQuality> far = {{0.2, 40}, {0.4, 42}, {0.8, 44}, {1.6, 46}};
  EXPECT_EQ(codeOf([&] { bdRate(a, far); }), ErrorCode::kInvalidArgument);
  EXPECT_THROW(bdRate(a, std::span(a).first(3)), Error);
  auto zero = a;
  zero[0].rate = 0.0;
  EXPECT_THROW(bdRate(zero, a), Error);
  auto inf = a;
  inf[3].psnr = std::numeric_limits<double>::infinity();
  EXPECT_THROW(bdRate(inf, a), Error);
}

TEST(RdCsv, RoundTrip)
{
  std::vector<RDPoint> pts = {
    {"unipcgc", 0.7, 1, 0.4321, 61.25, 65.5, 0.12, 0.34, 123456789},
    {"lossless", 0.0, 0, 1.25, std::numeric_limits<double>::infinity(),
     std::numeric_limits<double>::infinity(), 1.0, 2.0, 0},
  };
  const auto text = writeRdCsv(pts);
  EXPECT_EQ(text.substr(0, rdCsvHeader().size()), rdCsvHeader());
  const auto back = parseRdCsv(text);
  ASSERT_EQ(back.size(), 2u);
  for (size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].label, pts[i].label);
    EXPECT_EQ(back[i].n, pts[i].n);
    EXPECT_DOUBLE_EQ(back[i].bpp, pts[i].bpp);
    EXPECT_DOUBLE_EQ(back[i].d1Psnr, pts[i].d1Psnr);
    EXPECT_DOUBLE_EQ(back[i].d2Psnr, pts[i].d2Psnr);
    EXPECT_EQ(back[i].macs, pts[i].macs);
  }
  EXPECT_THROW(parseRdCsv("a,b\n1,2\n"), Error);
}

TEST(CrGain, Definition)
{
  EXPECT_DOUBLE_EQ(crGain(0.85, 1.0), 0.15);
  EXPECT_DOUBLE_EQ(crGain(1.0, 1.0), 0.0);
  EXPECT_LT(crGain(1.1, 1.0), 0.0);
}

//============================================================================
// Synthetic corpus

TEST(Synth, Deterministic)
{
  for (auto k : allSynthKinds()) {
    EXPECT_EQ(synthCloud(k, 6, 11), synthCloud(k, 6, 11)) << synthKindName(k);
    EXPECT_NE(synthCloud(k, 6, 11), synthCloud(k, 6, 12)) << synthKindName(k);
    EXPECT_EQ(synthKindFromName(synthKindName(k)), k);
  }
  EXPECT_THROW(synthKindFromName("cube"), Error);
}

TEST(Synth, SizesAreSurfaceLike)
{
  for (auto k : allSynthKinds())
    for (int depth : {4, 6, 8}) {
      const auto c = synthCloud(k, depth, 1);
      const double side = double(1 << depth);
      EXPECT_TRUE(isCanonical(c));
      EXPECT_TRUE(coordsFit(c, depth));
      // Surfaces grow with the square of the side, far below the volume.
      EXPECT_GT(double(c.size()), 0.05 * side * side) << synthKindName(k) << depth;
      EXPECT_LT(double(c.size()), 8.0 * side * side) << synthKindName(k) << depth;
    }
}

TEST(Synth, SphereShellHasConstantRadius)
{
  const auto c = synthCloud(SynthKind::kSphereShell, 7, 2);
  double m[3] = {0, 0, 0};
  for (const auto& v : c) {
    m[0] += v.x;
    m[1] += v.y;
    m[2] += v.z;
  }
  for (double& x : m)
    x /= double(c.size());
  double lo = 1e9, hi = 0;
  for (const auto& v : c) {
    const double r = std::hypot(v.x - m[0], v.y - m[1], v.z - m[2]);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  // Half a voxel each side of the radius, plus centroid error.
  EXPECT_LE(hi - lo, 1.2);
  EXPECT_GT(lo, 0.3 * 128 - 1.5);
}

TEST(Synth, BoxFacesLieOnTheBoundingPlanes)
{
  const auto c = synthCloud(SynthKind::kBoxFaces, 6, 5);
  VoxelCoord lo = c.front(), hi = c.front();
  for (const auto& v : c) {
    lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
    hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
  }
  for (const auto& v : c)
    EXPECT_TRUE(v.x == lo.x || v.x == hi.x || v.y == lo.y || v.y == hi.y || v.z == lo.z
                || v.z == hi.z);
  const int64_t ex = hi.x - lo.x + 1, ey = hi.y - lo.y + 1, ez = hi.z - lo.z + 1;
  EXPECT_EQ(int64_t(c.size()), ex * ey * ez - (ex - 2) * (ey - 2) * (ez - 2));
}

TEST(Synth, CorpusCyclesKinds)
{
  const auto corpus = synthCorpus(7, 5, 100);
  ASSERT_EQ(corpus.size(), 7u);
  EXPECT_EQ(corpus[5].coords, synthCloud(SynthKind::kSphereShell, 5, 105));
  EXPECT_EQ(corpus[6].coords, synthCloud(SynthKind::kBoxFaces, 5, 106));
  EXPECT_EQ(corpus[0].depth, 5);
}

}  // namespace
}  // namespace upcg
