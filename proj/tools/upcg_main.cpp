// upcg: encode, decode, train, eval, bench and selftest front end.

#include "corpus.hpp"

#include "upcg/codec.hpp"
#include "upcg/errors.hpp"
#include "upcg/metrics.hpp"
#include "upcg/ply.hpp"
#include "upcg/selftest.hpp"
#include "upcg/synth.hpp"
#include "upcg/voxelize.hpp"

#include <CLI11.hpp>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace upcg::cli {

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kIoError = 2, kCorrupt = 3, kMismatch = 4, kSelfTest = 5 };

struct RunConfig {
  std::string input;
  std::string out;
  std::string mode = "lossless";
  int depth = 10;
  std::vector<double> lambda;
  std::vector<int> n;
  std::optional<double> rho;
  std::string model;
  uint64_t seed = 1;
  std::string corpus;
  bool estimateOnly = false;
  bool unsafeLambda = false;
  std::string baselineCsv;
  std::string bdMethod = "cubic";
  std::string plyFormat = "binary";

  // training
  int epochs = 0;  // 0: schedule defaults
  int batch = 4;
  double lr = 8e-4;
  int width = 0;   // 0: coder defaults
  int blocks = 1;
  int kernel = 0;
  int transitions = 4;
  std::string grouping = "uneven";
  double holdout = 0.1;
};

// Thrown for inconsistent flag combinations (exit 1).
struct UsageError {
  std::string what;
};

using Clock = std::chrono::steady_clock;

double
since(Clock::time_point t0)
{
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<uint8_t>
readFile(const std::string& path)
{
  std::ifstream f(path, std::ios::binary);
  if (!f)
    fail(ErrorCode::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void
writeFile(const std::string& path, std::span<const uint8_t> bytes)
{
  std::ofstream f(path, std::ios::binary);
  if (!f)
    fail(ErrorCode::kIo, "cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f)
    fail(ErrorCode::kIo, "write failed: " + path);
}

void
writeText(const std::string& path, const std::string& text)
{
  writeFile(path, std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

// One machine-readable record: `key=value key=value ...`.
class Record {
public:
  template <typename T>
  Record& operator()(const std::string& key, const T& value)
  {
    _os << (_first ? "" : " ") << key << '=' << value;
    _first = false;
    return *this;
  }
  void print() const { std::cout << _os.str() << '\n' << std::flush; }

private:
  std::ostringstream _os;
  bool _first = true;
};

std::string
fixed(double v, int digits = 4)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

CodingMode
parseMode(const std::string& m)
{
  if (m == "lossless")
    return CodingMode::kLossless;
  if (m == "lossy")
    return CodingMode::kLossy;
  throw UsageError{"--mode must be lossless or lossy"};
}

void
requireFlag(bool present, const std::string& flag, const std::string& command)
{
  if (!present)
    throw UsageError{command + " requires " + flag};
}

double
singleLambda(const RunConfig& cfg)
{
  if (cfg.lambda.size() > 1)
    throw UsageError{"encode takes a single --lambda"};
  return cfg.lambda.empty() ? 1.0 : cfg.lambda.front();
}

int
singleN(const RunConfig& cfg)
{
  if (cfg.n.size() > 1)
    throw UsageError{"encode takes a single --n"};
  return cfg.n.empty() ? 0 : cfg.n.front();
}

//============================================================================

int
cmdEncode(const RunConfig& cfg, bool lossyFlagsGiven)
{
  requireFlag(!cfg.model.empty(), "--model", "encode");
  requireFlag(!cfg.input.empty(), "an input", "encode");
  requireFlag(cfg.estimateOnly || !cfg.out.empty(), "--out (or --estimate-only)", "encode");
  const auto mode = parseMode(cfg.mode);
  if (mode == CodingMode::kLossless && lossyFlagsGiven)
    throw UsageError{"--lambda, --n, --rho and --unsafe-lambda apply to --mode lossy only"};

  const auto model = CodecModel::load(cfg.model);
  const auto cloud = loadInput(cfg.input, cfg.depth);
  StreamStats st;
  const auto t0 = Clock::now();
  std::vector<uint8_t> bytes;
  if (mode == CodingMode::kLossless) {
    bytes = encodeLossless(model, cloud.coords, cfg.depth, &st);
  } else {
    LossyParams p;
    p.lambda = singleLambda(cfg);
    p.n = singleN(cfg);
    p.rho = cfg.rho;
    p.unsafeLambda = cfg.unsafeLambda;
    bytes = encodeLossy(model, cloud.coords, cfg.depth, p, &st);
  }
  const double secs = since(t0);

  Record r;
  r("command", "encode")("mode", cfg.mode)("points", st.points);
  if (cfg.estimateOnly) {
    // Ideal code lengths only; nothing is written.
    const double bits = st.coords.idealBits() + st.featureModelBits;
    r("coord_ideal_bits", fixed(st.coords.idealBits(), 3))
      ("feature_model_bits", fixed(st.featureModelBits, 3))
      ("coord_symbols", st.coords.symbols())
      ("ideal_payload_bpp", fixed(bits / double(st.points), 6));
    r.print();
    return kOk;
  }
  writeFile(cfg.out, bytes);
  r("bytes", st.totalBytes)("bpp", fixed(st.bpp(), 6))
    ("header_bits", 8 * st.headerBytes)("coord_bits", 8 * st.coordBytes)
    ("feature_bits", 8 * st.featureBytes)
    ("coord_ideal_bits", fixed(st.coords.idealBits(), 3))
    ("feature_model_bits", fixed(st.featureModelBits, 3))
    ("macs", st.macs)("enc_s", fixed(secs, 4));
  r.print();
  std::cout << "# " << st.points << " points -> " << st.totalBytes << " bytes (" << fixed(st.bpp())
            << " bpp): header " << st.headerBytes << ", coordinates " << st.coordBytes
            << ", features " << st.featureBytes << " bytes in " << fixed(secs, 3) << " s\n";
  return kOk;
}

int
cmdDecode(const RunConfig& cfg)
{
  requireFlag(!cfg.model.empty(), "--model", "decode");
  requireFlag(!cfg.input.empty(), "a stream", "decode");
  requireFlag(!cfg.out.empty(), "--out", "decode");
  const auto model = CodecModel::load(cfg.model);
  const auto bytes = readFile(cfg.input);
  const auto t0 = Clock::now();
  const auto dec = decodeStream(model, bytes);
  const double secs = since(t0);
  if (cfg.plyFormat != "binary" && cfg.plyFormat != "ascii")
    throw UsageError{"--ply-format must be binary or ascii"};
  savePly(cfg.out, toPoints(dec.cloud),
          cfg.plyFormat == "ascii" ? PlyFormat::kAscii : PlyFormat::kBinaryLE);

  std::string counts;
  for (size_t i = 0; i < dec.header.counts.size(); ++i)
    counts += (i ? "/" : "") + std::to_string(dec.header.counts[i]);
  const bool lossy = dec.header.mode == CodingMode::kLossy;
  Record r;
  r("command", "decode")("mode", lossy ? "lossy" : "lossless")("points", dec.cloud.size())
    ("depth", int(dec.header.depth))("base_scale", int(dec.header.baseScale))("counts", counts);
  if (lossy)
    r("n", int(dec.header.n))("lambda", dec.header.lambda)("rho", dec.header.rho)
      ("macs", dec.macs);
  r("dec_s", fixed(secs, 4));
  r.print();
  std::cout << "# decoded " << dec.cloud.size() << " points at depth " << int(dec.header.depth)
            << " in " << fixed(secs, 3) << " s\n";
  return kOk;
}

//============================================================================

std::pair<std::vector<VoxelCloud>, std::vector<VoxelCloud>>
splitHoldout(std::vector<VoxelCloud> all, double fraction)
{
  size_t held = all.size() >= 2 ? std::max<size_t>(1, size_t(double(all.size()) * fraction)) : 0;
  held = std::min(held, all.size() - 1);
  std::vector<VoxelCloud> val(all.end() - std::ptrdiff_t(held), all.end());
  all.resize(all.size() - held);
  return {std::move(all), std::move(val)};
}

double
losslessBpp(const ParamStore& store, std::span<const VoxelCloud> clouds)
{
  const auto model = CodecModel::fromStore(store);
  double bits = 0.0, points = 0.0;
  for (const auto& c : clouds) {
    StreamStats st;
    encodeLossless(model, c.coords, c.depth, &st);
    bits += 8.0 * double(st.totalBytes);
    points += double(st.points);
  }
  return bits / points;
}

void
trainLosslessInto(ParamStore& store, const RunConfig& cfg, std::span<const VoxelCloud> train,
                  std::span<const VoxelCloud> val)
{
  UelcConfig uc;
  uc.trunkBlocks = cfg.blocks;
  uc.stageBlocks = cfg.blocks;
  if (cfg.width > 0)
    uc.width = cfg.width;
  if (cfg.kernel > 0)
    uc.kernel = cfg.kernel;
  uc.scheme = GroupingScheme::byName(cfg.grouping);
  Rng rng(cfg.seed);
  const auto m = UelcModel::add(store, "uelc", uc, rng);

  UelcTrainConfig tc;
  if (cfg.epochs > 0)
    tc.epochs = cfg.epochs;
  tc.batch = cfg.batch;
  tc.lrStart = cfg.lr;
  tc.transitions = cfg.transitions;
  tc.seed = cfg.seed;
  tc.onEpoch = [&](int epoch, double bps) {
    Record r;
    r("command", "train")("coder", "uelc")("epoch", epoch)("train_bits_per_symbol", fixed(bps, 5));
    if (!val.empty())
      r("val_bpp", fixed(losslessBpp(store, val), 5));
    r.print();
  };
  trainUelc(store, m, train, tc);
}

void
trainLossyInto(ParamStore& store, const RunConfig& cfg, std::span<const VoxelCloud> train,
               std::span<const VoxelCloud> val)
{
  VrcmConfig vc;
  vc.blocks = cfg.blocks;
  if (cfg.width > 0)
    vc.width = cfg.width;
  if (cfg.kernel > 0)
    vc.kernel = cfg.kernel;
  Rng rng(cfg.seed + 1);
  const auto m = VrcmModel::add(store, "vrcm", vc, rng);

  VrcmTrainConfig tc;
  if (cfg.epochs > 0) {
    tc.stage3Epochs = cfg.epochs;
    tc.stage1Epochs = tc.stage2Epochs = std::max(1, cfg.epochs / 2);
  }
  tc.batch = cfg.batch;
  tc.lrStart = cfg.lr;
  tc.seed = cfg.seed;
  const std::array<int, 4> lastEpoch = {0, tc.stage1Epochs - 1, tc.stage2Epochs - 1,
                                        tc.stage3Epochs - 1};
  tc.onEpoch = [&](int stage, int epoch, double loss) {
    Record r;
    r("command", "train")("coder", "vrcm")("stage", stage)("epoch", epoch)
      ("loss", fixed(loss, 5));
    // Validation at the end of each stage; the entropy bounds are refreshed
    // on a copy so the training state is untouched.
    if (!val.empty() && epoch == lastEpoch[size_t(stage)]) {
      ParamStore snap = store;
      m.entropy.updateBounds(snap);
      const auto model = CodecModel::fromStore(std::move(snap));
      for (double lambda : {vc.lambdaMin, vc.lambdaMax}) {
        double bpp = 0.0, psnr = 0.0;
        for (const auto& c : val) {
          LossyParams p;
          p.lambda = lambda;
          p.n = tc.inputDownsample;
          StreamStats st;
          const auto bytes = encodeLossy(model, c.coords, c.depth, p, &st);
          bpp += st.bpp();
          psnr += d1(c.coords, decodeStream(model, bytes).cloud, c.depth).psnr;
        }
        r("val_bpp_l" + fixed(lambda, 1), fixed(bpp / double(val.size()), 5))
          ("val_d1_l" + fixed(lambda, 1), fixed(psnr / double(val.size()), 3));
      }
    }
    r.print();
  };
  trainVrcm(store, m, train, tc);
}

int
cmdTrain(const RunConfig& cfg)
{
  requireFlag(!cfg.corpus.empty(), "--corpus", "train");
  requireFlag(!cfg.out.empty(), "--out", "train");
  if (cfg.epochs < 0 || cfg.batch < 1 || cfg.blocks < 0 || !(cfg.lr > 0.0))
    throw UsageError{"training settings out of range"};
  const auto mode = parseMode(cfg.mode);
  auto [train, val] = splitHoldout(loadCorpus(cfg.corpus, cfg.depth), cfg.holdout);
  const auto t0 = Clock::now();

  ParamStore store;
  if (!cfg.model.empty())
    store = ParamStore::load(cfg.model);
  if (mode == CodingMode::kLossless) {
    if (store.contains("uelc.scheme"))
      throw UsageError{"--model already holds a lossless coder"};
    trainLosslessInto(store, cfg, train, val);
  } else {
    if (store.contains("vrcm.settings"))
      throw UsageError{"--model already holds a lossy coder"};
    if (!store.contains("uelc.scheme"))
      trainLosslessInto(store, cfg, train, val);
    trainLossyInto(store, cfg, train, val);
  }
  store.save(cfg.out);
  Record r;
  r("command", "train")("mode", cfg.mode)("clouds", train.size())("val_clouds", val.size())
    ("model_id", store.modelId())("params", store.numScalars())("train_s", fixed(since(t0), 2));
  r.print();
  return kOk;
}

//============================================================================

std::vector<RDPoint>
evaluate(const CodecModel& model, const RunConfig& cfg, std::span<const VoxelCloud> clouds)
{
  std::vector<RDPoint> rows;
  auto finish = [&](RDPoint p, double count) {
    p.bpp /= count;
    p.d1Psnr /= count;
    p.d2Psnr /= count;
    p.encSeconds /= count;
    p.decSeconds /= count;
    p.macs = uint64_t(double(p.macs) / count);
    rows.push_back(p);
  };

  if (model.uelc) {
    RDPoint p;
    p.label = "lossless";
    for (const auto& c : clouds) {
      StreamStats st;
      auto t0 = Clock::now();
      const auto bytes = encodeLossless(model, c.coords, c.depth, &st);
      p.encSeconds += since(t0);
      t0 = Clock::now();
      const auto dec = decodeStream(model, bytes);
      p.decSeconds += since(t0);
      if (dec.cloud != c.coords)
        fail(ErrorCode::kCorruptStream, "lossless round-trip failed on " + c.name);
      p.bpp += st.bpp();
      p.d1Psnr += psnrFromMse(0.0, c.depth);
      p.d2Psnr += psnrFromMse(0.0, c.depth);
    }
    finish(p, double(clouds.size()));
  }
  if (!model.vrcm)
    return rows;

  const std::vector<double> lambdas =
    cfg.lambda.empty() ? std::vector<double>{0.3, 0.7, 1.2, 2.0, 3.0} : cfg.lambda;
  const std::vector<int> ns = cfg.n.empty() ? std::vector<int>{0, 1} : cfg.n;
  for (int n : ns)
    for (double lambda : lambdas) {
      RDPoint p;
      p.label = "upcg";
      p.lambda = lambda;
      p.n = n;
      for (const auto& c : clouds) {
        LossyParams lp;
        lp.lambda = lambda;
        lp.n = n;
        lp.rho = cfg.rho;
        lp.unsafeLambda = cfg.unsafeLambda;
        StreamStats st;
        auto t0 = Clock::now();
        const auto bytes = encodeLossy(model, c.coords, c.depth, lp, &st);
        p.encSeconds += since(t0);
        t0 = Clock::now();
        const auto dec = decodeStream(model, bytes);
        p.decSeconds += since(t0);
        p.bpp += st.bpp();
        p.d1Psnr += d1(c.coords, dec.cloud, c.depth).psnr;
        p.d2Psnr += d2(c.coords, dec.cloud, c.depth).psnr;
        p.macs += st.macs + dec.macs;
      }
      finish(p, double(clouds.size()));
    }
  return rows;
}

// Per-n BD-rate of `ours` against the baseline rows with the same n.
void
reportBdRate(std::span<const RDPoint> ours, std::span<const RDPoint> base, BdMethod method)
{
  std::map<int, std::vector<RDPoint>> a, b;
  for (const auto& p : base)
    if (p.label != "lossless")
      a[p.n].push_back(p);
  for (const auto& p : ours)
    if (p.label != "lossless")
      b[p.n].push_back(p);
  auto curve = [](std::span<const RDPoint> pts, bool useD2) {
    std::vector<RateQuality> c;
    for (const auto& p : pts) {
      const double q = useD2 ? p.d2Psnr : p.d1Psnr;
      if (std::isfinite(q))
        c.push_back({p.bpp, q});
    }
    return c;
  };
  for (const auto& [n, pts] : b) {
    Record r;
    r("command", "eval")("bd_n", n);
    if (!a.count(n)) {
      r("bd_d1_pct", "n/a")("bd_d2_pct", "n/a");
      r.print();
      continue;
    }
    for (bool useD2 : {false, true}) {
      const auto key = useD2 ? "bd_d2_pct" : "bd_d1_pct";
      try {
        r(key, fixed(bdRate(curve(a[n], useD2), curve(pts, useD2), method), 4));
      } catch (const Error&) {
        r(key, "n/a");  // too few finite points or no PSNR overlap
      }
    }
    r.print();
  }
}

int
cmdEval(const RunConfig& cfg)
{
  requireFlag(!cfg.model.empty(), "--model", "eval");
  requireFlag(!cfg.corpus.empty(), "--corpus", "eval");
  if (cfg.bdMethod != "cubic" && cfg.bdMethod != "pchip")
    throw UsageError{"--bd-method must be cubic or pchip"};
  const auto model = CodecModel::load(cfg.model);
  const auto clouds = loadCorpus(cfg.corpus, cfg.depth);
  const auto rows = evaluate(model, cfg, clouds);
  const auto csv = writeRdCsv(rows);
  if (cfg.out.empty())
    std::cout << csv;
  else
    writeText(cfg.out, csv);
  for (const auto& p : rows) {
    Record r;
    r("command", "eval")("label", p.label)("lambda", p.lambda)("n", p.n)("bpp", fixed(p.bpp, 5))
      ("d1_psnr", fixed(p.d1Psnr, 3))("d2_psnr", fixed(p.d2Psnr, 3))("macs", p.macs);
    r.print();
  }
  if (!cfg.baselineCsv.empty()) {
    const auto text = readFile(cfg.baselineCsv);
    const auto base = parseRdCsv(std::string(text.begin(), text.end()));
    reportBdRate(rows, base, cfg.bdMethod == "pchip" ? BdMethod::kPchip : BdMethod::kCubic);
  }
  return kOk;
}

//============================================================================

int
cmdBench(const RunConfig& cfg)
{
  requireFlag(!cfg.model.empty(), "--model", "bench");
  const auto model = CodecModel::load(cfg.model);
  const auto clouds = loadCorpus(cfg.corpus.empty() ? "synth:5:8:900" : cfg.corpus, cfg.depth);
  for (const auto& c : clouds) {
    if (model.uelc) {
      StreamStats st;
      auto t0 = Clock::now();
      const auto bytes = encodeLossless(model, c.coords, c.depth, &st);
      const double enc = since(t0);
      t0 = Clock::now();
      decodeStream(model, bytes);
      Record r;
      r("command", "bench")("cloud", c.name)("mode", "lossless")("points", st.points)
        ("bpp", fixed(st.bpp(), 5))("enc_s", fixed(enc, 4))("dec_s", fixed(since(t0), 4));
      r.print();
    }
    if (model.vrcm)
      for (double rho : {0.25, 0.5, 1.0}) {
        LossyParams p;
        p.lambda = singleLambda(cfg);
        p.n = singleN(cfg);
        p.rho = rho;
        StreamStats st;
        auto t0 = Clock::now();
        const auto bytes = encodeLossy(model, c.coords, c.depth, p, &st);
        const double enc = since(t0);
        t0 = Clock::now();
        const auto dec = decodeStream(model, bytes);
        Record r;
        r("command", "bench")("cloud", c.name)("mode", "lossy")("rho", rho)("points", st.points)
          ("bpp", fixed(st.bpp(), 5))("enc_macs", st.macs)("dec_macs", dec.macs)
          ("enc_s", fixed(enc, 4))("dec_s", fixed(since(t0), 4));
        r.print();
      }
  }
  return kOk;
}

int
cmdSelftest(const RunConfig& cfg)
{
  int failed = 0;
  runSelfTests(cfg.seed, [&](const SelfTestResult& t) {
    Record r;
    r("command", "selftest")("check", t.name)("result", t.passed ? "pass" : "FAIL")
      ("seconds", fixed(t.seconds, 3));
    r.print();
    std::cout << "# " << t.name << ": " << t.detail << '\n';
    failed += t.passed ? 0 : 1;
  });
  Record r;
  r("command", "selftest")("failed", failed)("result", failed ? "FAIL" : "pass");
  r.print();
  return failed ? kSelfTest : kOk;
}

int
exitCodeOf(ErrorCode c)
{
  switch (c) {
  case ErrorCode::kIo:
  case ErrorCode::kParse:
    return kIoError;
  case ErrorCode::kCorruptStream:
  case ErrorCode::kTruncated:
  case ErrorCode::kBadMagic:
  case ErrorCode::kBadVersion:
  case ErrorCode::kLengthMismatch:
    return kCorrupt;
  case ErrorCode::kModelMismatch:
    return kMismatch;
  case ErrorCode::kInvalidArgument:
  case ErrorCode::kUnsupported:
  case ErrorCode::kNumeric:
    return kUsage;
  }
  return kUsage;
}

}  // namespace

int
run(int argc, char** argv)
{
  CLI::App app{"Point cloud geometry codec: lossless staged coder and variable-rate lossy coder"};
  app.set_config("--config", "", "key=value file supplying any flag; the command line wins");
  app.require_subcommand(1);

  RunConfig cfg;
  app.add_option("--mode", cfg.mode, "lossless or lossy")->check(CLI::IsMember({"lossless", "lossy"}));
  app.add_option("--depth", cfg.depth, "bits per axis of the voxel grid")->check(CLI::Range(1, 12));
  auto* lambdaOpt = app.add_option("--lambda", cfg.lambda, "rate factor (eval: comma list)")
                      ->delimiter(',');
  auto* nOpt = app.add_option("--n", cfg.n, "pre-downsampling steps 0..2 (eval: comma list)")
                 ->delimiter(',');
  auto* rhoOpt = app.add_option("--rho", cfg.rho, "keep ratio override in [0, 1]");
  app.add_option("--model", cfg.model, "checkpoint path");
  app.add_option("--seed", cfg.seed, "seed for training and self-tests");
  app.add_option("--corpus", cfg.corpus, "synth:COUNT:DEPTH[:SEED], a PLY file or a directory");
  app.add_flag("--estimate-only", cfg.estimateOnly, "print ideal code lengths, write nothing");
  auto* unsafeOpt = app.add_flag("--unsafe-lambda", cfg.unsafeLambda,
                                 "allow lambda outside the trained range");
  app.add_option("--baseline-csv", cfg.baselineCsv, "RD CSV to compute BD-rate against");
  app.add_option("--bd-method", cfg.bdMethod, "cubic or pchip");
  app.add_option("--out", cfg.out, "output path");
  app.add_option("--ply-format", cfg.plyFormat, "binary or ascii");
  app.add_option("--epochs", cfg.epochs, "training epochs (0: schedule defaults)");
  app.add_option("--batch", cfg.batch, "training batch size");
  app.add_option("--lr", cfg.lr, "initial learning rate");
  app.add_option("--width", cfg.width, "feature width (0: coder default)");
  app.add_option("--blocks", cfg.blocks, "IRN blocks per feature extraction layer");
  app.add_option("--kernel", cfg.kernel, "spatial kernel size (0: coder default)");
  app.add_option("--transitions", cfg.transitions, "finest scale transitions trained per cloud");
  app.add_option("--grouping", cfg.grouping, "uneven or sequential");
  app.add_option("--holdout", cfg.holdout, "fraction of the corpus kept for validation");

  auto* enc = app.add_subcommand("encode", "encode a PLY file or synth:KIND[:SEED]")->fallthrough();
  enc->add_option("input", cfg.input)->required();
  auto* dec = app.add_subcommand("decode", "decode a stream to PLY")->fallthrough();
  dec->add_option("input", cfg.input)->required();
  auto* train = app.add_subcommand("train", "train a checkpoint on a corpus")->fallthrough();
  auto* eval = app.add_subcommand("eval", "RD sweep over lambda and n, CSV and BD-rate")
                 ->fallthrough();
  auto* bench = app.add_subcommand("bench", "timing and MAC counts")->fallthrough();
  auto* self = app.add_subcommand("selftest", "run the invariant suite")->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    const bool lossyFlags = lambdaOpt->count() || nOpt->count() || rhoOpt->count()
      || unsafeOpt->count();
    if (enc->parsed())
      return cmdEncode(cfg, lossyFlags);
    if (dec->parsed())
      return cmdDecode(cfg);
    if (train->parsed())
      return cmdTrain(cfg);
    if (eval->parsed())
      return cmdEval(cfg);
    if (bench->parsed())
      return cmdBench(cfg);
    if (self->parsed())
      return cmdSelftest(cfg);
  } catch (const UsageError& e) {
    std::cerr << "upcg: " << e.what << '\n';
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "upcg: " << e.what() << '\n';
    return exitCodeOf(e.code());
  } catch (const std::exception& e) {
    std::cerr << "upcg: " << e.what() << '\n';
    return kIoError;
  }
  return kUsage;
}

}  // namespace upcg::cli

int
main(int argc, char** argv)
{
  return upcg::cli::run(argc, argv);
}
