#pragma once

#include "upcg/params.hpp"
#include "upcg/tape.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace upcg {

struct GradCheckEntry {
  std::string name;
  int checked = 0;
  int skipped = 0;  // coordinates whose perturbation crossed a kink
  double maxRelError = 0.0;
  int worstIndex = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  double tolerance = 0.0;
  std::vector<GradCheckEntry> entries;

  bool pass() const;
  double worst() const;
  // Names of the tensors above tolerance, comma separated.
  std::string failing() const;
  std::string summary() const;
};

struct GradCheckOptions {
  double h = 1e-3;
  double tolerance = 1e-4;
  // |a - n| / max(|a|, |n|, floor): gradients smaller than the floor are
  // compared in absolute terms.
  double floor = 1e-3;
  // Times a kink-crossing step is divided by 10 and retried before the
  // coordinate counts as skipped.
  int shrinkSteps = 2;
  // Applied to the analytic gradient before comparison. Used for negative
  // controls that simulate a broken backward pass.
  std::function<void(Gradient&)> tamper;
};

// Builds the scalar loss on a fresh tape; called once per evaluation.
using LossBuilder = std::function<Tape<double>::Id(Tape<double>&)>;

// Central finite differences of every coordinate of the selected tensors
// against the analytic gradient. Perturbations that change the tape's
// discrete pattern (ReLU masks, floors, dynamic splits) are skipped.
GradCheckReport gradCheck(const ParamStore& store, const LossBuilder& build,
                          std::span<const int> which, const GradCheckOptions& opts = {});

}  // namespace upcg
