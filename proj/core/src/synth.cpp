#include "upcg/synth.hpp"

#include "upcg/errors.hpp"
#include "upcg/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>

namespace upcg {

const std::vector<SynthKind>&
allSynthKinds()
{
  static const std::vector<SynthKind> kinds = {SynthKind::kSphereShell, SynthKind::kBoxFaces,
                                               SynthKind::kTorus, SynthKind::kPlanarPatches,
                                               SynthKind::kSponge};
  return kinds;
}

std::string
synthKindName(SynthKind kind)
{
  switch (kind) {
  case SynthKind::kSphereShell: return "sphere-shell";
  case SynthKind::kBoxFaces: return "box-faces";
  case SynthKind::kTorus: return "torus";
  case SynthKind::kPlanarPatches: return "planar-patches";
  case SynthKind::kSponge: return "sponge";
  }
  return "?";
}

SynthKind
synthKindFromName(const std::string& name)
{
  for (auto k : allSynthKinds())
    if (synthKindName(k) == name)
      return k;
  fail(ErrorCode::kInvalidArgument, "unknown cloud kind '" + name + "'");
}

namespace {

using Vec3 = Eigen::Vector3d;

// Lower bound on the distance to the surface (used for pruning) and the
// estimated distance used for the final voxel test.
struct Field {
  std::function<double(const Vec3&)> distance;
  double lipschitz = 1.0;  // |distance| / lipschitz bounds the true distance from below
};

Eigen::Matrix3d
randomRotation(Rng& rng)
{
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

// Visits the octree of the [0, 2^depth)^3 grid, descending only into cells
// the field cannot rule out.
void
rasterize(const Field& f, int depth, CoordSet& out)
{
  const double half = 0.5;
  std::function<void(int, int, int, int)> visit = [&](int x, int y, int z, int level) {
    const double size = double(1 << (depth - level));
    const Vec3 centre(x * size + 0.5 * size - 0.5, y * size + 0.5 * size - 0.5,
                      z * size + 0.5 * size - 0.5);
    const double d = std::abs(f.distance(centre));
    if (level == depth) {
      if (d <= half)
        out.push_back({x, y, z});
      return;
    }
    const double reach = 0.5 * std::sqrt(3.0) * (size - 1.0) + half;
    if (d / f.lipschitz > reach + 1e-9)
      return;
    for (int o = 0; o < 8; ++o)
      visit(2 * x + ((o >> 2) & 1), 2 * y + ((o >> 1) & 1), 2 * z + (o & 1), level + 1);
  };
  visit(0, 0, 0, 0);
}

double
rectangleDistance(const Vec3& p, const Vec3& origin, const Vec3& u, const Vec3& v, double hu,
                  double hv)
{
  const Vec3 d = p - origin;
  const double a = std::clamp(d.dot(u), -hu, hu);
  const double b = std::clamp(d.dot(v), -hv, hv);
  return (d - a * u - b * v).norm();
}

}  // namespace

CoordSet
synthCloud(SynthKind kind, int depth, uint64_t seed)
{
  if (depth < 2 || depth > kMaxDepth)
    fail(ErrorCode::kInvalidArgument, "synthCloud: depth must lie in [2, 12]");
  Rng rng(seed * 0x9e3779b97f4a7c15ull + uint64_t(kind) + 1);
  const double size = double(1 << depth);
  const Vec3 mid = Vec3::Constant(0.5 * (size - 1.0))
    + 0.05 * size * Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));

  CoordSet out;
  switch (kind) {
  case SynthKind::kSphereShell: {
    const double r = size * rng.uniform(0.3, 0.4);
    rasterize({[=](const Vec3& p) { return (p - mid).norm() - r; }, 1.0}, depth, out);
    break;
  }
  case SynthKind::kBoxFaces: {
    std::array<int, 3> lo, hi;
    for (int a = 0; a < 3; ++a) {
      const int extent = std::max(2, int(size * rng.uniform(0.4, 0.8)));
      lo[a] = int(rng.below(uint64_t(int(size) - extent + 1)));
      hi[a] = lo[a] + extent - 1;
    }
    for (int x = lo[0]; x <= hi[0]; ++x)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int z = lo[2]; z <= hi[2]; ++z)
          if (x == lo[0] || x == hi[0] || y == lo[1] || y == hi[1] || z == lo[2] || z == hi[2])
            out.push_back({x, y, z});
    break;
  }
  case SynthKind::kTorus: {
    const double major = size * rng.uniform(0.25, 0.32);
    const double minor = size * rng.uniform(0.06, 0.12);
    const Eigen::Matrix3d rot = randomRotation(rng);
    rasterize({[=](const Vec3& p) {
                 const Vec3 q = rot.transpose() * (p - mid);
                 const double ring = std::hypot(q.x(), q.y()) - major;
                 return std::hypot(ring, q.z()) - minor;
               },
               1.0},
              depth, out);
    break;
  }
  case SynthKind::kPlanarPatches: {
    struct Patch {
      Vec3 origin, u, v;
      double hu, hv;
    };
    std::vector<Patch> patches;
    const int count = 3 + int(rng.below(3));
    for (int i = 0; i < count; ++i) {
      const Eigen::Matrix3d rot = randomRotation(rng);
      Patch p;
      p.origin = mid + 0.25 * size * Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1),
                                          rng.uniform(-1, 1));
      p.u = rot.col(0);
      p.v = rot.col(1);
      p.hu = size * rng.uniform(0.12, 0.25);
      p.hv = size * rng.uniform(0.12, 0.25);
      patches.push_back(p);
    }
    rasterize({[patches](const Vec3& x) {
                 double d = std::numeric_limits<double>::infinity();
                 for (const auto& p : patches)
                   d = std::min(d, rectangleDistance(x, p.origin, p.u, p.v, p.hu, p.hv));
                 return d;
               },
               1.0},
              depth, out);
    break;
  }
  case SynthKind::kSponge: {
    // Gyroid sheet clipped to a ball.
    const double period = size * rng.uniform(0.3, 0.45);
    const double w = 2.0 * std::numbers::pi / period;
    const double radius = size * 0.42;
    const Vec3 phase(rng.uniform(0, period), rng.uniform(0, period), rng.uniform(0, period));
    auto gyroid = [=](const Vec3& p) {
      const Vec3 q = w * (p - mid + phase);
      return std::sin(q.x()) * std::cos(q.y()) + std::sin(q.y()) * std::cos(q.z())
        + std::sin(q.z()) * std::cos(q.x());
    };
    rasterize({[=](const Vec3& p) {
                 if ((p - mid).norm() > radius)
                   return (p - mid).norm() - radius + 0.5;
                 const Vec3 q = w * (p - mid + phase);
                 const Vec3 grad(
                   w * (std::cos(q.x()) * std::cos(q.y()) - std::sin(q.z()) * std::sin(q.x())),
                   w * (-std::sin(q.x()) * std::sin(q.y()) + std::cos(q.y()) * std::cos(q.z())),
                   w * (-std::sin(q.y()) * std::sin(q.z()) + std::cos(q.z()) * std::cos(q.x())));
                 const double g = gyroid(p);
                 return g / std::max(grad.norm(), 0.25 * w);
               },
               // |grad g| <= 2 sqrt(3) w and the ratio divides by at least w / 4, so
               // the true distance is at least |ratio| / (8 sqrt(3)).
               8.0 * std::sqrt(3.0)},
              depth, out);
    break;
  }
  }
  canonicalize(out);
  if (out.empty())
    out.push_back({int32_t(mid.x()), int32_t(mid.y()), int32_t(mid.z())});
  return out;
}

std::vector<VoxelCloud>
synthCorpus(int count, int depth, uint64_t seedBase)
{
  std::vector<VoxelCloud> out;
  const auto& kinds = allSynthKinds();
  for (int i = 0; i < count; ++i) {
    VoxelCloud c;
    const auto kind = kinds[size_t(i) % kinds.size()];
    c.depth = depth;
    c.coords = synthCloud(kind, depth, seedBase + uint64_t(i));
    c.name = synthKindName(kind) + "-d" + std::to_string(depth) + "-s"
      + std::to_string(seedBase + uint64_t(i));
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace upcg
