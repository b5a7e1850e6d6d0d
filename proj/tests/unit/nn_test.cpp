#include "oracles.hpp"

#include "upcg/errors.hpp"
#include "upcg/gradcheck.hpp"
#include "upcg/layers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

namespace upcg {
namespace {

void
randomize(ParamStore& store, std::span<const int> which, Rng& rng, double scale = 0.5)
{
  for (int i : which)
    for (auto& v : store[i].values)
      v = float(rng.uniform(-scale, scale));
}

std::vector<double>
asDouble(const std::vector<float>& v)
{
  return {v.begin(), v.end()};
}

TEST(SparseConv, IdentityKernel)
{
  ParamStore store;
  Rng rng(1);
  auto p = addConv(store, "c", 27, 3, 3, rng);
  std::fill(store[p.w].values.begin(), store[p.w].values.end(), 0.0f);
  for (int c = 0; c < 3; ++c)
    store[p.w].values[(13 * 3 + c) * 3 + c] = 1.0f;
  Neighborhood nb(oracle::randomCloud(rng, 40, 6));
  const auto x = oracle::randomMat<double>(rng, 40, 3);
  Tape<double> tape(store);
  const auto y = convLayer(tape, tape.input(x), p, nb.map(3));
  EXPECT_EQ(tape.value(y).data, x.data);
}

TEST(SparseConv, IsolatedPoint)
{
  ParamStore store;
  Rng rng(2);
  auto p = addConv(store, "c", 27, 2, 3, rng);
  randomize(store, std::vector<int>{p.b}, rng);
  Neighborhood nb(CoordSet{{5, 5, 5}});
  Mat<double> x(1, 2);
  x(0, 0) = 0.5;
  x(0, 1) = -2.0;
  Tape<double> tape(store);
  const auto y = tape.value(convLayer(tape, tape.input(x), p, nb.map(3)));
  const auto& w = store[p.w].values;
  for (int co = 0; co < 3; ++co) {
    const double expect = store[p.b].values[co] + w[(13 * 2 + 0) * 3 + co] * 0.5
      + w[(13 * 2 + 1) * 3 + co] * -2.0;
    EXPECT_NEAR(y(0, co), expect, 1e-12);
  }
}

// Dense-grid oracle on a 3-point line and on random clouds inside 8^3.
TEST(SparseConv, MatchesDenseGridOracle)
{
  Rng rng(3);
  std::vector<CoordSet> clouds = {CoordSet{{1, 2, 2}, {2, 2, 2}, {3, 2, 2}}};
  for (int i = 0; i < 6; ++i)
    clouds.push_back(oracle::randomCloud(rng, 1 + int(rng.below(120)), 8));
  for (int k : {3, 5}) {
    for (const auto& coords : clouds) {
      ParamStore store;
      const int cin = 1 + int(rng.below(5)), cout = 1 + int(rng.below(6));
      auto p = addConv(store, "c", k * k * k, cin, cout, rng);
      randomize(store, std::vector<int>{p.b}, rng);
      const auto x = oracle::randomMat<double>(rng, int(coords.size()), cin);
      Neighborhood nb(coords);
      Tape<double> tape(store);
      const auto& y = tape.value(convLayer(tape, tape.input(x), p, nb.map(k)));
      const auto ref = oracle::denseGridConv(coords, x, asDouble(store[p.w].values),
                                             asDouble(store[p.b].values), k, cout);
      ASSERT_EQ(y.data.size(), ref.data.size());
      for (size_t i = 0; i < ref.data.size(); ++i)
        EXPECT_NEAR(y.data[i], ref.data[i], 1e-10);
    }
  }
}

TEST(SparseConv, ChannelMismatchThrows)
{
  ParamStore store;
  Rng rng(4);
  auto p = addConv(store, "c", 27, 3, 2, rng);
  Neighborhood nb(CoordSet{{0, 0, 0}});
  Tape<double> tape(store);
  EXPECT_THROW(convLayer(tape, tape.input(Mat<double>(1, 2)), p, nb.map(3)), Error);
}

TEST(Usl, OneParentEmitsKernelRows)
{
  ParamStore store;
  Rng rng(5);
  auto p = addConv(store, "u", 8, 2, 3, rng);
  Mat<double> x(1, 2);
  x(0, 0) = 1.5;
  x(0, 1) = -0.5;
  auto map = std::make_shared<UpsampleMap>(buildUpsampleMap(CoordSet{{3, 1, 2}}));
  Tape<double> tape(store);
  const auto& y = tape.value(uslLayer(tape, tape.input(x), p, map));
  ASSERT_EQ(y.rows, 8);
  EXPECT_EQ(map->children, expandChildren(CoordSet{{3, 1, 2}}));
  const auto& w = store[p.w].values;
  for (int i = 0; i < 8; ++i) {
    const int o = map->octant[i];
    for (int co = 0; co < 3; ++co)
      EXPECT_NEAR(y(i, co), w[(o * 2 + 0) * 3 + co] * 1.5 + w[(o * 2 + 1) * 3 + co] * -0.5, 1e-12);
  }
}

TEST(Usl, ZeroKernelGivesBias)
{
  ParamStore store;
  Rng rng(6);
  auto p = addConv(store, "u", 8, 2, 2, rng);
  std::fill(store[p.w].values.begin(), store[p.w].values.end(), 0.0f);
  store[p.b].values = {0.25f, -1.0f};
  auto map = std::make_shared<UpsampleMap>(buildUpsampleMap(CoordSet{{0, 0, 0}, {2, 3, 1}}));
  ASSERT_EQ(map->children.size(), 16u);
  EXPECT_TRUE(isCanonical(map->children));
  Tape<double> tape(store);
  const auto& y = tape.value(uslLayer(tape, tape.input(oracle::randomMat<double>(rng, 2, 2)), p, map));
  for (int i = 0; i < 16; ++i) {
    EXPECT_EQ(y(i, 0), 0.25);
    EXPECT_EQ(y(i, 1), -1.0);
  }
}

TEST(Down, SumsChildrenByOctant)
{
  ParamStore store;
  Rng rng(7);
  auto p = addConv(store, "d", 8, 1, 1, rng);
  const CoordSet children{{0, 0, 0}, {1, 1, 1}, {2, 0, 0}};
  auto map = std::make_shared<DownsampleMap>(buildDownsampleMap(children));
  Mat<double> x(3, 1);
  x(0, 0) = 1;
  x(1, 0) = 2;
  x(2, 0) = 3;
  Tape<double> tape(store);
  const auto& y = tape.value(downLayer(tape, tape.input(x), p, map));
  const auto& w = store[p.w].values;
  ASSERT_EQ(y.rows, 2);
  EXPECT_NEAR(y(0, 0), double(w[0]) * 1 + double(w[7]) * 2, 1e-12);
  EXPECT_NEAR(y(1, 0), double(w[0]) * 3, 1e-12);
}

TEST(Fel, ZeroWeightsPassThrough)
{
  ParamStore store;
  Rng rng(8);
  auto p = addFel(store, "f", 4, 4, 3, 2, rng);
  for (auto& t : store.withPrefix("f"))
    std::fill(store[t].values.begin(), store[t].values.end(), 0.0f);
  Neighborhood nb(oracle::randomCloud(rng, 30, 5));
  const auto x = oracle::randomMat<double>(rng, 30, 4);
  Tape<double> tape(store);
  EXPECT_EQ(tape.value(fel(tape, tape.input(x), p, nb)).data, x.data);
}

TEST(Fel, EmptyTensor)
{
  ParamStore store;
  Rng rng(9);
  auto p = addFel(store, "f", 4, 4, 3, 1, rng);
  Neighborhood nb(CoordSet{});
  Tape<double> tape(store);
  EXPECT_EQ(tape.value(fel(tape, tape.input(Mat<double>(0, 4)), p, nb)).rows, 0);
}

// One IRN block composed by hand from the dense-grid conv oracle.
TEST(Fel, MatchesHandComposedBranches)
{
  ParamStore store;
  Rng rng(10);
  auto p = addFel(store, "f", 4, 4, 3, 1, rng);
  randomize(store, store.withPrefix("f"), rng);
  const CoordSet coords{{2, 2, 2}, {2, 3, 3}};
  const auto x = oracle::randomMat<double>(rng, 2, 4);
  Neighborhood nb(coords);
  Tape<double> tape(store);
  const auto& y = tape.value(fel(tape, tape.input(x), p, nb));

  auto conv = [&](const Mat<double>& in, const ConvParams& c, int cout) {
    auto out = oracle::denseGridConv(coords, in, asDouble(store[c.w].values),
                                     asDouble(store[c.b].values), 3, cout);
    for (auto& v : out.data)
      v = std::max(v, 0.0);
    return out;
  };
  const auto& blk = p.blocks[0];
  const auto b1 = conv(x, blk.branch1, 2);
  const auto b2b = conv(conv(x, blk.branch2a, 2), blk.branch2b, 2);
  for (int i = 0; i < 2; ++i)
    for (int c = 0; c < 4; ++c)
      EXPECT_NEAR(y(i, c), x(i, c) + (c < 2 ? b1(i, c) : b2b(i, c - 2)), 1e-10);
}

TEST(Fel, PermutationEquivariant)
{
  ParamStore store;
  Rng rng(11);
  auto p = addFel(store, "f", 2, 4, 3, 1, rng);
  const auto coords = oracle::randomCloud(rng, 25, 5);
  const auto x = oracle::randomMat<float>(rng, 25, 2);
  // Shuffle rows, rebuild through makeSparseTensor, which canonicalizes.
  std::vector<int> perm(25);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = 24; i > 0; --i)
    std::swap(perm[i], perm[rng.below(i + 1)]);
  CoordSet shuffled;
  Mat<float> xs(25, 2);
  for (int i = 0; i < 25; ++i) {
    shuffled.push_back(coords[perm[i]]);
    xs(i, 0) = x(perm[i], 0);
    xs(i, 1) = x(perm[i], 1);
  }
  const auto t = makeSparseTensor(0, shuffled, xs);
  ASSERT_EQ(t.coords, coords);

  auto run = [&](const SparseTensor& s) {
    Neighborhood nb(s.coords);
    Tape<float> tape(store);
    return tape.value(fel(tape, tape.input(s.feats), p, nb)).data;
  };
  EXPECT_EQ(run(t), run(makeSparseTensor(0, coords, x)));
}

TEST(Opg, ProbabilityExamples)
{
  ParamStore store;
  Rng rng(12);
  auto p = addConv(store, "o", 1, 3, 1, rng);
  const auto x = oracle::randomMat<double>(rng, 4, 3);
  {
    Tape<double> tape(store);
    const auto& z = tape.value(opgLogits(tape, tape.input(x), p));
    for (int i = 0; i < 4; ++i) {
      double logit = store[p.b].values[0];
      for (int c = 0; c < 3; ++c)
        logit += x(i, c) * store[p.w].values[c];
      EXPECT_NEAR(z(i, 0), logit, 1e-12);
      EXPECT_NEAR(occupancyProbability(z(i, 0)), oracle::logistic(logit), 1e-12);
    }
  }
  std::fill(store[p.w].values.begin(), store[p.w].values.end(), 0.0f);
  Tape<double> tape(store);
  const auto& z = tape.value(opgLogits(tape, tape.input(x), p));
  for (int i = 0; i < 4; ++i)
    EXPECT_EQ(occupancyProbability(z(i, 0)), 0.5);
  EXPECT_EQ(occupancyProbability(20.0), 1.0 - kProbFloor);
  EXPECT_EQ(occupancyProbability(-20.0), kProbFloor);
  for (double v = -50; v <= 50; v += 0.37) {
    EXPECT_GE(occupancyProbability(v), kProbFloor);
    EXPECT_LE(occupancyProbability(v), 1.0 - kProbFloor);
  }
}

//============================================================================

TEST(Backward, BiasGradientOfIdentityConvIsPointCount)
{
  ParamStore store;
  Rng rng(13);
  auto p = addConv(store, "c", 27, 2, 2, rng);
  Neighborhood nb(oracle::randomCloud(rng, 17, 5));
  Tape<double> tape(store);
  const auto loss = tape.sum(convLayer(tape, tape.input(oracle::randomMat<double>(rng, 17, 2)), p, nb.map(3)));
  Gradient g(store);
  tape.backward(loss, g);
  EXPECT_EQ(g.tensors[p.b], (std::vector<double>{17.0, 17.0}));
}

TEST(Backward, BceDerivativeAtHalf)
{
  ParamStore store;
  Rng rng(14);
  auto p = addConv(store, "o", 1, 1, 1, rng);
  store[p.w].values = {0.0f};
  store[p.b].values = {0.0f};
  Tape<double> tape(store);
  const auto logits = denseLayer(tape, tape.input(Mat<double>(1, 1, 1.0)), p);
  const auto loss = tape.bce(logits, {1}, 1.0);
  EXPECT_NEAR(tape.scalar(loss), std::log(2.0), 1e-15);
  Gradient g(store);
  tape.backward(loss, g);
  EXPECT_DOUBLE_EQ(g.tensors[p.b][0], -0.5);
}

TEST(GradCheck, LinearLayer)
{
  ParamStore store;
  Rng rng(15);
  auto p = addConv(store, "l", 1, 3, 2, rng);
  randomize(store, std::vector<int>{p.b}, rng);
  const auto x = oracle::randomMat<double>(rng, 5, 3);
  const auto t = oracle::randomMat<double>(rng, 5, 2);
  auto build = [&](Tape<double>& tape) {
    const auto y = denseLayer(tape, tape.input(x), p);
    return tape.sum(tape.mul(y, tape.input(t)));
  };
  GradCheckOptions o;
  o.tolerance = 1e-5;
  const auto r = gradCheck(store, build, std::vector<int>{p.w, p.b}, o);
  EXPECT_TRUE(r.pass()) << r.summary();
}

TEST(GradCheck, FelOneBlock)
{
  ParamStore store;
  Rng rng(116);
  auto p = addFel(store, "f", 3, 4, 3, 1, rng);
  randomize(store, store.withPrefix("f"), rng);
  Neighborhood nb(oracle::randomCloud(rng, 12, 4));
  const auto x = oracle::randomMat<double>(rng, 12, 3);
  auto build = [&](Tape<double>& tape) {
    const auto y = fel(tape, tape.input(x), p, nb);
    return tape.sum(tape.mul(y, y));
  };
  const auto r = gradCheck(store, build, store.withPrefix("f"));
  EXPECT_TRUE(r.pass()) << r.summary();
  for (const auto& e : r.entries)
    EXPECT_GT(e.checked, 0) << e.name << " skipped " << e.skipped;
}

TEST(GradCheck, CorruptedBackwardIsNamed)
{
  ParamStore store;
  Rng rng(17);
  auto a = addConv(store, "first", 1, 2, 2, rng);
  auto b = addConv(store, "second", 1, 2, 1, rng);
  const auto x = oracle::randomMat<double>(rng, 4, 2);
  auto build = [&](Tape<double>& tape) {
    return tape.sum(denseLayer(tape, tape.logistic(denseLayer(tape, tape.input(x), a)), b));
  };
  GradCheckOptions o;
  o.tamper = [&](Gradient& g) { g.tensors[b.w][1] *= 1.5; };
  const auto r = gradCheck(store, build, std::vector<int>{a.w, a.b, b.w, b.b}, o);
  EXPECT_FALSE(r.pass());
  EXPECT_EQ(r.failing(), "second.w");
}

// A pre-activation 5e-4 from the ReLU kink: the default step crosses it,
// the shrunken retry does not.
TEST(GradCheck, KinkCrossingStepIsRetriedSmaller)
{
  ParamStore store;
  Rng rng(24);
  auto p = addConv(store, "k", 1, 1, 1, rng);
  store[p.w].values = {0.0005f};
  store[p.b].values = {0.0f};
  auto build = [&](Tape<double>& tape) {
    return tape.sum(tape.relu(denseLayer(tape, tape.input(Mat<double>(1, 1, 1.0)), p)));
  };
  GradCheckOptions once;
  once.shrinkSteps = 0;
  const auto skipped = gradCheck(store, build, std::vector<int>{p.w}, once);
  EXPECT_EQ(skipped.entries[0].checked, 0);
  EXPECT_EQ(skipped.entries[0].skipped, 1);
  const auto r = gradCheck(store, build, std::vector<int>{p.w});
  EXPECT_EQ(r.entries[0].checked, 1);
  EXPECT_TRUE(r.pass()) << r.summary();
}

// Every primitive op at least once, through parameter-dependent inputs.
TEST(GradCheck, AllPrimitiveOps)
{
  ParamStore store;
  Rng rng(18);
  const auto coords = oracle::randomCloud(rng, 10, 4);
  auto c1 = addConv(store, "c1", 27, 2, 4, rng);
  auto up = addConv(store, "up", 8, 4, 2, rng);
  auto dn = addConv(store, "dn", 8, 2, 3, rng);
  auto d1 = addConv(store, "d1", 1, 3, 3, rng);
  auto d2 = addConv(store, "d2", 1, 3, 3, rng);
  auto head = addConv(store, "head", 1, 6, 1, rng);
  randomize(store, store.withPrefix(""), rng);
  Neighborhood nb(coords);
  auto upMap = std::make_shared<UpsampleMap>(buildUpsampleMap(coords));
  auto dnMap = std::make_shared<DownsampleMap>(buildDownsampleMap(upMap->children));
  const auto x = oracle::randomMat<double>(rng, 10, 2);
  const int nChildren = int(upMap->children.size());
  std::vector<int32_t> even, odd;
  for (int i = 0; i < nChildren; ++i)
    (i % 2 ? odd : even).push_back(i);
  std::vector<uint8_t> targets(10);
  for (auto& t : targets)
    t = uint8_t(rng.below(2));

  auto build = [&](Tape<double>& tape) {
    auto h = convLayer(tape, tape.input(x), c1, nb.map(3));
    auto u = uslLayer(tape, tape.relu(h), up, upMap);
    auto merged = tape.merge(tape.gather(u, even), even, tape.scale(tape.gather(u, odd), 0.5),
                             odd, nChildren);
    auto v = downLayer(tape, merged, dn, dnMap);
    auto a = denseLayer(tape, v, d1);
    auto b = tape.exp(tape.scale(denseLayer(tape, v, d2), 0.3));
    auto row = tape.gather(b, std::vector<int32_t>{3});
    auto q = tape.add(tape.div(a, row), tape.mul(tape.logistic(a), b));
    auto both = tape.concat(q, tape.logistic(v));
    auto logits = denseLayer(tape, both, head);
    return tape.add(tape.scale(tape.sum(tape.mul(both, both)), 0.1),
                    tape.bce(logits, targets, 0.7));
  };
  const auto r = gradCheck(store, build, store.withPrefix(""));
  EXPECT_TRUE(r.pass()) << r.summary();
}

TEST(GradCheck, DynamicFel)
{
  ParamStore store;
  Rng rng(19);
  auto p = addDfel(store, "g", 2, 4, 3, 1, rng);
  randomize(store, store.withPrefix("g"), rng);
  Neighborhood nb(oracle::randomCloud(rng, 14, 4));
  const auto x = oracle::randomMat<double>(rng, 14, 2);
  for (double rho : {0.0, 0.5, 1.0}) {
    auto build = [&](Tape<double>& tape) {
      const auto y = dfel(tape, tape.input(x), p, nb, rho);
      return tape.sum(tape.mul(y, y));
    };
    const auto r = gradCheck(store, build, store.withPrefix("g"));
    EXPECT_TRUE(r.pass()) << "rho " << rho << ": " << r.summary();
  }
}

//============================================================================

TEST(Dsc, RhoOneIsStaticPath)
{
  ParamStore store;
  Rng rng(20);
  auto p = addDfel(store, "g", 8, 8, 3, 1, rng);
  const auto& pair = p.blocks[0].branch1;
  Neighborhood nb(oracle::randomCloud(rng, 200, 8));
  const auto x = oracle::randomMat<float>(rng, 200, 8);
  Tape<float> a(store), b(store);
  const auto dyn = a.value(dsc(a, a.input(x), pair, nb.map(3), 1.0)).data;
  const auto stat = b.value(convLayer(b, denseLayer(b, b.input(x), pair.a), pair.b, nb.map(3))).data;
  EXPECT_EQ(dyn, stat);
  EXPECT_EQ(a.macs(), b.macs());
}

TEST(Dsc, RhoZeroIsFirstConv)
{
  ParamStore store;
  Rng rng(21);
  auto p = addDfel(store, "g", 8, 8, 3, 1, rng);
  const auto& pair = p.blocks[0].branch2a;
  Neighborhood nb(oracle::randomCloud(rng, 100, 8));
  const auto x = oracle::randomMat<float>(rng, 100, 8);
  Tape<float> a(store), b(store);
  EXPECT_EQ(a.value(dsc(a, a.input(x), pair, nb.map(3), 0.0)).data,
            b.value(denseLayer(b, b.input(x), pair.a)).data);
}

// The kept points receive conv_b over kept neighbours only; the rest pass
// conv_a through.
TEST(Dsc, PartialSplitMatchesOracle)
{
  ParamStore store;
  Rng rng(22);
  auto p = addDfel(store, "g", 4, 4, 3, 1, rng);
  const auto& pair = p.blocks[0].branch1;
  const auto coords = oracle::randomCloud(rng, 60, 5);
  Neighborhood nb(coords);
  const auto x = oracle::randomMat<double>(rng, 60, 4);
  Tape<double> tape(store);
  const auto out = tape.value(dsc(tape, tape.input(x), pair, nb.map(3), 0.5));
  Tape<double> ref(store);
  const auto u = ref.value(denseLayer(ref, ref.input(x), pair.a));
  const auto order = rankByCorrelation(correlation(u, *nb.map(3)));
  const int keep = dscKeepCount(60, 0.5);
  ASSERT_EQ(keep, 30);
  std::vector<int32_t> kept(order.begin(), order.begin() + keep);
  std::sort(kept.begin(), kept.end());
  CoordSet sub;
  Mat<double> us(keep, u.cols);
  for (int i = 0; i < keep; ++i) {
    sub.push_back(coords[kept[i]]);
    std::copy(u.row(kept[i]), u.row(kept[i]) + u.cols, us.row(i));
  }
  const auto conv = oracle::denseGridConv(sub, us, asDouble(store[pair.b.w].values),
                                          asDouble(store[pair.b.b].values), 3, u.cols);
  std::vector<int> slot(60, -1);
  for (int i = 0; i < keep; ++i)
    slot[kept[i]] = i;
  for (int i = 0; i < 60; ++i)
    for (int c = 0; c < u.cols; ++c)
      EXPECT_NEAR(out(i, c), slot[i] >= 0 ? conv(slot[i], c) : u(i, c), 1e-10);
}

TEST(Dsc, MacsMonotoneInRho)
{
  ParamStore store;
  Rng rng(23);
  auto p = addDfel(store, "g", 8, 8, 3, 1, rng);
  Neighborhood nb(oracle::randomCloud(rng, 4, 2));
  const auto x = oracle::randomMat<float>(rng, 4, 8);
  uint64_t last = 0;
  for (double rho : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    Tape<float> t(store);
    dsc(t, t.input(x), p.blocks[0].branch1, nb.map(3), rho);
    EXPECT_GE(t.macs(), last) << rho;
    if (rho == 0.5) {
      Tape<float> full(store);
      dsc(full, full.input(x), p.blocks[0].branch1, nb.map(3), 1.0);
      EXPECT_LT(t.macs(), full.macs());
    }
    last = t.macs();
  }
}

TEST(Dsc, KeepCount)
{
  EXPECT_EQ(dscKeepCount(4, 0.5), 2);
  EXPECT_EQ(dscKeepCount(10, 0.25), 3);
  EXPECT_EQ(dscKeepCount(10, 0.0), 0);
  EXPECT_EQ(dscKeepCount(10, 1.0), 10);
  EXPECT_EQ(dscKeepCount(3, 1.0 / 3.0), 1);
  EXPECT_THROW(dscKeepCount(3, 1.5), Error);
}

TEST(Correlation, Examples)
{
  const auto map = kernelGather(CoordSet{{0, 0, 0}, {0, 0, 1}, {5, 5, 5}}, 3);
  Mat<double> f(3, 3);
  const double a[3] = {1.0, 2.0, 4.0};
  for (int c = 0; c < 3; ++c) {
    f(0, c) = a[c];
    f(1, c) = a[c];
    f(2, c) = a[c];
  }
  auto corr = correlation(f, map);
  EXPECT_NEAR(corr[0], 1.0, 1e-6);
  EXPECT_NEAR(corr[1], 1.0, 1e-6);
  EXPECT_EQ(corr[2], 0.0);
  for (int c = 0; c < 3; ++c)
    f(1, c) = -a[c];
  corr = correlation(f, map);
  EXPECT_NEAR(corr[0], -1.0, 1e-6);
  EXPECT_NEAR(corr[1], -1.0, 1e-6);
}

TEST(Correlation, RankTiesByRow)
{
  EXPECT_EQ(rankByCorrelation({0.5, 0.9, 0.5, -1.0, 0.9}),
            (std::vector<int32_t>{1, 4, 0, 2, 3}));
}

// The linear-time split keeps exactly the head of the full ranking.
TEST(Correlation, SplitMatchesRanking)
{
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> corr(1 + rng.below(200));
    for (auto& v : corr)
      v = double(rng.below(7)) * 0.25 - 0.5;
    const int keep = int(rng.below(corr.size() + 1));
    const auto order = rankByCorrelation(corr);
    std::vector<int32_t> head(order.begin(), order.begin() + keep);
    std::vector<int32_t> tail(order.begin() + keep, order.end());
    std::sort(head.begin(), head.end());
    std::sort(tail.begin(), tail.end());
    const auto [a, b] = splitByCorrelation(corr, keep);
    EXPECT_EQ(a, head);
    EXPECT_EQ(b, tail);
  }
  EXPECT_THROW(splitByCorrelation({1.0}, 2), Error);
}

//============================================================================

TEST(Adam, FirstStepMovesByLearningRate)
{
  ParamStore store;
  const int t = store.add("t", {3});
  store[t].values = {1.0f, -1.0f, 0.5f};
  Gradient g(store);
  g.tensors[t] = {2.0, -0.5, 0.0};
  Adam adam(store);
  adam.step(store, g, 0.01, std::vector<int>{t});
  EXPECT_NEAR(store[t].values[0], 0.99f, 1e-6);
  EXPECT_NEAR(store[t].values[1], -0.99f, 1e-6);
  EXPECT_EQ(store[t].values[2], 0.5f);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Adam, MatchesReferenceRecurrence)
{
  ParamStore store;
  const int t = store.add("t", {1});
  store[t].values = {0.3f};
  Adam adam(store);
  double m = 0, v = 0, x = 0.3;
  for (int k = 1; k <= 5; ++k) {
    const double grad = 0.1 * k - 0.25;
    Gradient g(store);
    g.tensors[t] = {grad};
    adam.step(store, g, 0.05, std::vector<int>{t});
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    const double mh = m / (1 - std::pow(0.9, k)), vh = v / (1 - std::pow(0.999, k));
    x -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(store[t].values[0], x, 1e-6);
  }
}

TEST(Gradient, NonFiniteNamesParameter)
{
  ParamStore store;
  store.add("alpha", {2});
  store.add("beta", {2});
  Gradient g(store);
  g.tensors[1][1] = std::nan("");
  try {
    g.checkFinite(store);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumeric);
    EXPECT_NE(std::string(e.what()).find("beta"), std::string::npos);
  }
}

TEST(ParamStore, SerializeRoundTrip)
{
  ParamStore store;
  Rng rng(24);
  addFel(store, "f", 2, 4, 3, 1, rng);
  const auto bytes = store.serialize();
  const auto back = ParamStore::deserialize(bytes);
  EXPECT_EQ(back.serialize(), bytes);
  EXPECT_EQ(back.modelId(), store.modelId());
  ASSERT_EQ(back.numTensors(), store.numTensors());
  for (int i = 0; i < store.numTensors(); ++i) {
    EXPECT_EQ(back[i].name, store[i].name);
    EXPECT_EQ(back[i].dims, store[i].dims);
    EXPECT_EQ(back[i].values, store[i].values);
  }
  auto other = store;
  other[0].values[0] += 1.0f;
  EXPECT_NE(other.modelId(), store.modelId());
}

}  // namespace
}  // namespace upcg
