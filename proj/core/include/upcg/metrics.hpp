#pragma once

#include "upcg/ply.hpp"
#include "upcg/sparse.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace upcg {

// Peak 3 * (2^depth - 1)^2. A zero MSE gives +inf.
double psnrFromMse(double mse, int depth);

struct Distortion {
  double mse = 0.0;
  double psnr = 0.0;
};

// Symmetric point-to-point error: max of the two one-sided mean squared
// nearest-neighbour distances.
Distortion d1(std::span<const Point3> a, std::span<const Point3> b, int depth);

// Point-to-plane error. Both directions project the error vector onto the
// normal at the reference point, estimated by PCA over the 16 nearest
// reference points (self included).
Distortion d2(std::span<const Point3> reference, std::span<const Point3> reconstructed,
              int depth);

constexpr int kNormalNeighbors = 16;

// Unit normals (smallest principal axis), sign unspecified.
std::vector<Point3> estimateNormals(std::span<const Point3> points, int neighbors);

Distortion d1(std::span<const VoxelCoord> a, std::span<const VoxelCoord> b, int depth);
Distortion d2(std::span<const VoxelCoord> reference, std::span<const VoxelCoord> reconstructed,
              int depth);

//============================================================================

struct RDPoint {
  std::string label;
  double lambda = 0.0;
  int n = 0;
  double bpp = 0.0;
  double d1Psnr = 0.0;
  double d2Psnr = 0.0;
  double encSeconds = 0.0;
  double decSeconds = 0.0;
  uint64_t macs = 0;
};

struct RateQuality {
  double rate = 0.0;
  double psnr = 0.0;
};

enum class BdMethod { kCubic, kPchip };

// Average rate difference of `test` against `anchor` in percent over the
// shared PSNR interval. Negative means `test` needs fewer bits.
double bdRate(std::span<const RateQuality> anchor, std::span<const RateQuality> test,
              BdMethod method = BdMethod::kCubic);

// 1 - bpp / bppReference.
double crGain(double bpp, double bppReference);

std::string rdCsvHeader();
std::string rdCsvRow(const RDPoint& p);
std::string writeRdCsv(std::span<const RDPoint> points);
std::vector<RDPoint> parseRdCsv(const std::string& text);

}  // namespace upcg
