#pragma once

#include "upcg/matrix.hpp"
#include "upcg/params.hpp"
#include "upcg/tape.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace upcg {

constexpr double kTailMass = 1e-9;

// Per-channel learned univariate density over integers. The parameters
// live in a ParamStore under `prefix`; support bounds are stored there as
// well so that encoder and decoder agree on the coding tables.
class FactorizedModel {
public:
  FactorizedModel() = default;

  static FactorizedModel add(ParamStore& store, const std::string& prefix, int channels, Rng& rng);
  static FactorizedModel find(const ParamStore& store, const std::string& prefix);

  int channels() const { return _channels; }
  const std::array<int, 11>& tensors() const { return _tensors; }

  double cdf(const ParamStore& store, int channel, double x) const;
  double pmf(const ParamStore& store, int channel, int64_t v) const;

  // sum of -log2(max(pmf, tail)) over a rows x channels integer matrix.
  double bits(const ParamStore& store, const Mat<int32_t>& values) const;

  // Smallest integer ranges whose outside mass is below kTailMass; written
  // into the store.
  void updateBounds(ParamStore& store) const;
  std::pair<int32_t, int32_t> bounds(const ParamStore& store, int channel) const;

  // Tape leaves for the eleven tensors.
  template <typename T>
  std::array<typename Tape<T>::Id, 11> leaves(Tape<T>& tape) const
  {
    std::array<typename Tape<T>::Id, 11> ids;
    for (int k = 0; k < 11; ++k)
      ids[k] = tape.param(_tensors[k]);
    return ids;
  }

private:
  int _channels = 0;
  std::array<int, 11> _tensors{};
  int _bounds = -1;
};

// Frozen 16-bit cumulative table of one channel. Symbol 0 and the last
// symbol are escapes for values below y_min and above y_max.
struct CodingTable {
  int32_t yMin = 0;
  int32_t yMax = 0;
  std::vector<uint32_t> cum;  // size numSymbols + 1, cum.back() == 65536

  int numSymbols() const { return int(cum.size()) - 1; }
  uint32_t freq(int s) const { return cum[s + 1] - cum[s]; }
  // Cost in bits of coding v, escape payload included.
  double cost(int32_t v) const;
};

CodingTable buildCodingTable(const FactorizedModel& model, const ParamStore& store, int channel,
                             int32_t yMin, int32_t yMax);

// Feature payload: u16 channels, per-channel i32 bounds, u32 length, coder bytes.
std::vector<uint8_t>
symEncode(const FactorizedModel& model, const ParamStore& store, const Mat<int32_t>& values);

Mat<int32_t> symDecode(const FactorizedModel& model, const ParamStore& store,
                       std::span<const uint8_t> payload, int rows);

// Fits the model to integer samples (rows x channels) by minimizing their
// code length with Adam; returns the final bits per symbol.
double fitFactorized(ParamStore& store, const FactorizedModel& model, const Mat<int32_t>& samples,
                     int steps, double lr);

// Draws integers from the model's own pmf restricted to the support.
Mat<int32_t> sampleFactorized(const FactorizedModel& model, const ParamStore& store, int rows,
                              Rng& rng);

}  // namespace upcg
