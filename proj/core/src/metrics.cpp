#include "upcg/metrics.hpp"

#include "upcg/errors.hpp"

#include <Eigen/Dense>
#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iterator>
#include <limits>
#include <sstream>

namespace upcg {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

namespace {

using BPoint = bg::model::point<double, 3, bg::cs::cartesian>;
using Entry = std::pair<BPoint, uint32_t>;
using Tree = bgi::rtree<Entry, bgi::quadratic<16>>;

BPoint
toB(const Point3& p)
{
  return BPoint(p[0], p[1], p[2]);
}

Tree
buildTree(std::span<const Point3> pts)
{
  std::vector<Entry> entries;
  entries.reserve(pts.size());
  for (size_t i = 0; i < pts.size(); ++i)
    entries.emplace_back(toB(pts[i]), uint32_t(i));
  return Tree(entries.begin(), entries.end());
}

uint32_t
nearest(const Tree& tree, const Point3& p)
{
  Entry hit;
  tree.query(bgi::nearest(toB(p), 1), &hit);
  return hit.second;
}

double
sq(double v)
{
  return v * v;
}

double
dist2(const Point3& a, const Point3& b)
{
  return sq(a[0] - b[0]) + sq(a[1] - b[1]) + sq(a[2] - b[2]);
}

double
projected2(const Point3& a, const Point3& b, const Point3& n)
{
  return sq((a[0] - b[0]) * n[0] + (a[1] - b[1]) * n[1] + (a[2] - b[2]) * n[2]);
}

void
requireNonEmpty(std::span<const Point3> a, std::span<const Point3> b)
{
  if (a.empty() || b.empty())
    fail(ErrorCode::kInvalidArgument, "distortion metric needs two non-empty clouds");
}

std::vector<Point3>
pointsOf(std::span<const VoxelCoord> c)
{
  std::vector<Point3> out;
  out.reserve(c.size());
  for (const auto& v : c)
    out.push_back({double(v.x), double(v.y), double(v.z)});
  return out;
}

}  // namespace

double
psnrFromMse(double mse, int depth)
{
  if (mse <= 0.0)
    return std::numeric_limits<double>::infinity();
  const double peak = std::ldexp(1.0, depth) - 1.0;
  return 10.0 * std::log10(3.0 * peak * peak / mse);
}

Distortion
d1(std::span<const Point3> a, std::span<const Point3> b, int depth)
{
  requireNonEmpty(a, b);
  const Tree ta = buildTree(a);
  const Tree tb = buildTree(b);
  double sab = 0.0;
  for (const auto& p : a)
    sab += dist2(p, b[nearest(tb, p)]);
  double sba = 0.0;
  for (const auto& p : b)
    sba += dist2(p, a[nearest(ta, p)]);
  Distortion d;
  d.mse = std::max(sab / double(a.size()), sba / double(b.size()));
  d.psnr = psnrFromMse(d.mse, depth);
  return d;
}

std::vector<Point3>
estimateNormals(std::span<const Point3> points, int neighbors)
{
  const Tree tree = buildTree(points);
  std::vector<Point3> normals(points.size());
  std::vector<Entry> hits;
  for (size_t i = 0; i < points.size(); ++i) {
    hits.clear();
    tree.query(bgi::nearest(toB(points[i]), unsigned(neighbors)), std::back_inserter(hits));
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& h : hits) {
      const auto& p = points[h.second];
      mean += Eigen::Vector3d(p[0], p[1], p[2]);
    }
    mean /= double(hits.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& h : hits) {
      const auto& p = points[h.second];
      const Eigen::Vector3d d = Eigen::Vector3d(p[0], p[1], p[2]) - mean;
      cov += d * d.transpose();
    }
    if (hits.size() < 3) {
      // Too few points for a plane; any unit vector is as good as another.
      normals[i] = {0.0, 0.0, 1.0};
      continue;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    const Eigen::Vector3d n = eig.eigenvectors().col(0).normalized();
    normals[i] = {n.x(), n.y(), n.z()};
  }
  return normals;
}

Distortion
d2(std::span<const Point3> reference, std::span<const Point3> reconstructed, int depth)
{
  requireNonEmpty(reference, reconstructed);
  const auto normals = estimateNormals(reference, kNormalNeighbors);
  const Tree tref = buildTree(reference);
  const Tree trec = buildTree(reconstructed);
  double s1 = 0.0;
  for (size_t i = 0; i < reference.size(); ++i)
    s1 += projected2(reconstructed[nearest(trec, reference[i])], reference[i], normals[i]);
  double s2 = 0.0;
  for (const auto& p : reconstructed) {
    const uint32_t j = nearest(tref, p);
    s2 += projected2(p, reference[j], normals[j]);
  }
  Distortion d;
  d.mse = std::max(s1 / double(reference.size()), s2 / double(reconstructed.size()));
  d.psnr = psnrFromMse(d.mse, depth);
  return d;
}

Distortion
d1(std::span<const VoxelCoord> a, std::span<const VoxelCoord> b, int depth)
{
  return d1(pointsOf(a), pointsOf(b), depth);
}

Distortion
d2(std::span<const VoxelCoord> reference, std::span<const VoxelCoord> reconstructed, int depth)
{
  return d2(pointsOf(reference), pointsOf(reconstructed), depth);
}

//============================================================================

namespace {

struct Curve {
  std::vector<double> psnr;
  std::vector<double> logRate;
};

Curve
prepare(std::span<const RateQuality> pts, const char* which)
{
  if (pts.size() < 4)
    fail(ErrorCode::kInvalidArgument, std::string("bd_rate: ") + which + " curve has fewer than 4 points");
  std::vector<RateQuality> s(pts.begin(), pts.end());
  std::sort(s.begin(), s.end(), [](auto& x, auto& y) { return x.psnr < y.psnr; });
  Curve c;
  for (const auto& p : s) {
    if (!(p.rate > 0.0) || !std::isfinite(p.rate) || !std::isfinite(p.psnr))
      fail(ErrorCode::kInvalidArgument, std::string("bd_rate: ") + which
                                          + " curve needs positive rates and finite PSNR");
    c.psnr.push_back(p.psnr);
    c.logRate.push_back(std::log10(p.rate));
  }
  return c;
}

// Least-squares cubic in psnr, integrated in closed form over [lo, hi].
double
cubicIntegral(const Curve& c, double lo, double hi)
{
  const int n = int(c.psnr.size());
  Eigen::MatrixXd v(n, 4);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const double x = c.psnr[i];
    v(i, 0) = 1.0;
    v(i, 1) = x;
    v(i, 2) = x * x;
    v(i, 3) = x * x * x;
    y(i) = c.logRate[i];
  }
  const Eigen::Vector4d k = v.colPivHouseholderQr().solve(y);
  auto prim = [&](double x) {
    return k(0) * x + k(1) * x * x / 2 + k(2) * x * x * x / 3 + k(3) * x * x * x * x / 4;
  };
  return prim(hi) - prim(lo);
}

// Fritsch-Carlson monotone Hermite interpolation; Simpson integration.
double
pchipIntegral(const Curve& c, double lo, double hi)
{
  const auto& x = c.psnr;
  const auto& y = c.logRate;
  const size_t n = x.size();
  for (size_t i = 1; i < n; ++i)
    if (!(x[i] > x[i - 1]))
      fail(ErrorCode::kInvalidArgument, "bd_rate: PCHIP needs distinct PSNR values");
  std::vector<double> h(n - 1), delta(n - 1), d(n, 0.0);
  for (size_t i = 0; i + 1 < n; ++i) {
    h[i] = x[i + 1] - x[i];
    delta[i] = (y[i + 1] - y[i]) / h[i];
  }
  for (size_t i = 1; i + 1 < n; ++i) {
    if (delta[i - 1] * delta[i] > 0.0) {
      const double w1 = 2 * h[i] + h[i - 1];
      const double w2 = h[i] + 2 * h[i - 1];
      d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
  }
  auto endSlope = [](double h0, double h1, double d0, double d1) {
    double s = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (s * d0 <= 0.0)
      s = 0.0;
    else if (d0 * d1 < 0.0 && std::abs(s) > std::abs(3 * d0))
      s = 3 * d0;
    return s;
  };
  if (n == 2) {
    d[0] = d[1] = delta[0];
  } else {
    d[0] = endSlope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = endSlope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  }
  auto eval = [&](double t) {
    size_t i = size_t(std::upper_bound(x.begin(), x.end(), t) - x.begin());
    i = std::clamp<size_t>(i, 1, n - 1) - 1;
    const double s = (t - x[i]) / h[i];
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * y[i] + (s3 - 2 * s2 + s) * h[i] * d[i]
      + (-2 * s3 + 3 * s2) * y[i + 1] + (s3 - s2) * h[i] * d[i + 1];
  };
  const int steps = 2000;
  const double step = (hi - lo) / steps;
  double sum = eval(lo) + eval(hi);
  for (int i = 1; i < steps; ++i)
    sum += eval(lo + i * step) * (i % 2 ? 4.0 : 2.0);
  return sum * step / 3.0;
}

}  // namespace

double
bdRate(std::span<const RateQuality> anchor, std::span<const RateQuality> test, BdMethod method)
{
  const Curve a = prepare(anchor, "anchor");
  const Curve b = prepare(test, "test");
  const double lo = std::max(a.psnr.front(), b.psnr.front());
  const double hi = std::min(a.psnr.back(), b.psnr.back());
  if (!(hi > lo))
    fail(ErrorCode::kInvalidArgument, "bd_rate: PSNR ranges do not overlap");
  auto integral = method == BdMethod::kCubic ? cubicIntegral : pchipIntegral;
  const double avgA = integral(a, lo, hi) / (hi - lo);
  const double avgB = integral(b, lo, hi) / (hi - lo);
  return (std::pow(10.0, avgB - avgA) - 1.0) * 100.0;
}

double
crGain(double bpp, double bppReference)
{
  if (!(bppReference > 0.0))
    fail(ErrorCode::kInvalidArgument, "crGain: reference bpp must be positive");
  return 1.0 - bpp / bppReference;
}

//============================================================================

std::string
rdCsvHeader()
{
  return "label,lambda,n,bpp,d1_psnr,d2_psnr,enc_s,dec_s,macs";
}

std::string
rdCsvRow(const RDPoint& p)
{
  auto num = [](double v) {
    if (std::isinf(v))
      return std::string(v > 0 ? "inf" : "-inf");
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, end);
  };
  std::ostringstream os;
  os << p.label << ',' << num(p.lambda) << ',' << p.n << ',' << num(p.bpp) << ','
     << num(p.d1Psnr) << ',' << num(p.d2Psnr) << ',' << num(p.encSeconds) << ','
     << num(p.decSeconds) << ',' << p.macs;
  return os.str();
}

std::string
writeRdCsv(std::span<const RDPoint> points)
{
  std::string out = rdCsvHeader() + "\n";
  for (const auto& p : points)
    out += rdCsvRow(p) + "\n";
  return out;
}

std::vector<RDPoint>
parseRdCsv(const std::string& text)
{
  std::istringstream is(text);
  std::string line;
  std::vector<RDPoint> out;
  int lineNo = 0;
  while (std::getline(is, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    if (lineNo == 1 && line.rfind("label,", 0) == 0)
      continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ','))
      f.push_back(cell);
    if (f.size() != 9)
      fail(ErrorCode::kParse, "RD CSV line " + std::to_string(lineNo) + ": expected 9 fields");
    auto num = [&](const std::string& s) {
      if (s == "inf")
        return std::numeric_limits<double>::infinity();
      if (s == "-inf")
        return -std::numeric_limits<double>::infinity();
      double v = 0.0;
      auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || end != s.data() + s.size())
        fail(ErrorCode::kParse, "RD CSV line " + std::to_string(lineNo) + ": bad number '" + s + "'");
      return v;
    };
    RDPoint p;
    p.label = f[0];
    p.lambda = num(f[1]);
    p.n = int(num(f[2]));
    p.bpp = num(f[3]);
    p.d1Psnr = num(f[4]);
    p.d2Psnr = num(f[5]);
    p.encSeconds = num(f[6]);
    p.decSeconds = num(f[7]);
    p.macs = uint64_t(num(f[8]));
    out.push_back(p);
  }
  return out;
}

}  // namespace upcg
