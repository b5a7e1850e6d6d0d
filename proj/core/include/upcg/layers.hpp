#pragma once

#include "upcg/params.hpp"
#include "upcg/sparse.hpp"
#include "upcg/tape.hpp"

#include <memory>
#include <string>
#include <vector>

namespace upcg {

// Parameter indices of one convolution or dense layer. The weight is
// stored as [taps, cin, cout] and the bias as [cout].
struct ConvParams {
  int w = -1;
  int b = -1;

  bool valid() const { return w >= 0; }
};

// taps = k^3 for stride-1 convolution, 8 for stride-2 layers, 1 for dense.
ConvParams
addConv(ParamStore& store, const std::string& name, int taps, int cin, int cout, Rng& rng);

struct IrnParams {
  ConvParams branch1;   // k, c -> c/2
  ConvParams branch2a;  // k, c -> c/2
  ConvParams branch2b;  // k, c/2 -> c/2
};

struct FelParams {
  int kernel = 3;
  int width = 0;
  ConvParams proj;  // 1x1x1 entry projection, present only when cin != width
  std::vector<IrnParams> blocks;
};

FelParams addFel(ParamStore& store, const std::string& prefix, int cin, int width, int kernel,
                 int nBlocks, Rng& rng);

// Dynamic sparse convolution: pointwise conv_a on every point, kernel
// conv_b only on the most correlated share of points.
struct DscParams {
  ConvParams a;
  ConvParams b;
};

struct DirnParams {
  DscParams branch1;
  DscParams branch2a;
  DscParams branch2b;
};

struct DfelParams {
  int kernel = 3;
  int width = 0;
  ConvParams proj;
  std::vector<DirnParams> blocks;
};

DfelParams addDfel(ParamStore& store, const std::string& prefix, int cin, int width, int kernel,
                   int nBlocks, Rng& rng);

// Looks a parameter block up by name in a loaded store.
ConvParams findConv(const ParamStore& store, const std::string& name);
FelParams findFel(const ParamStore& store, const std::string& prefix);
DfelParams findDfel(const ParamStore& store, const std::string& prefix);

//============================================================================

// One coordinate set with lazily built kernel maps.
class Neighborhood {
public:
  explicit Neighborhood(CoordSet coords) : _coords(std::move(coords)) {}

  const CoordSet& coords() const { return _coords; }
  int size() const { return int(_coords.size()); }

  std::shared_ptr<const KernelMap> map(int kernel);

private:
  CoordSet _coords;
  std::shared_ptr<const KernelMap> _maps[6];
};

template <typename T>
using NodeId = typename Tape<T>::Id;

template <typename T>
NodeId<T> convLayer(Tape<T>& tape, NodeId<T> x, const ConvParams& p,
                    std::shared_ptr<const KernelMap> map);

template <typename T>
NodeId<T> denseLayer(Tape<T>& tape, NodeId<T> x, const ConvParams& p);

template <typename T>
NodeId<T> uslLayer(Tape<T>& tape, NodeId<T> x, const ConvParams& p,
                   std::shared_ptr<const UpsampleMap> map);

template <typename T>
NodeId<T> downLayer(Tape<T>& tape, NodeId<T> x, const ConvParams& p,
                    std::shared_ptr<const DownsampleMap> map);

template <typename T>
NodeId<T> irnBlock(Tape<T>& tape, NodeId<T> x, const IrnParams& p,
                   std::shared_ptr<const KernelMap> map);

template <typename T>
NodeId<T> fel(Tape<T>& tape, NodeId<T> x, const FelParams& p, Neighborhood& nb);

template <typename T>
NodeId<T> dsc(Tape<T>& tape, NodeId<T> x, const DscParams& p,
              std::shared_ptr<const KernelMap> map, double rho);

template <typename T>
NodeId<T> dfel(Tape<T>& tape, NodeId<T> x, const DfelParams& p, Neighborhood& nb, double rho);

// Occupancy logits, one column.
template <typename T>
NodeId<T> opgLogits(Tape<T>& tape, NodeId<T> x, const ConvParams& p);

//============================================================================

// Mean standardized inner product between each point and its occupied
// neighbours (self excluded) in the map's window, divided by the width.
template <typename T>
std::vector<double> correlation(const Mat<T>& feats, const KernelMap& map);

// Rows sorted by correlation descending, ties by row index.
std::vector<int32_t> rankByCorrelation(const std::vector<double>& corr);

// The first `keep` rows of that ranking and the remaining rows, each in
// increasing row order. Linear time; used on the coding path.
std::pair<std::vector<int32_t>, std::vector<int32_t>>
splitByCorrelation(const std::vector<double>& corr, int keep);

// Number of points receiving the kernel convolution at keep ratio rho.
int dscKeepCount(int n, double rho);

constexpr double kProbFloor = 1.0 / 65536.0;

// logistic(logit) clamped to [2^-16, 1 - 2^-16].
double occupancyProbability(double logit);

}  // namespace upcg
