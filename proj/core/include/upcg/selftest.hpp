#pragma once

#include <functional>
#include <string>
#include <vector>

namespace upcg {

struct SelfTestResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

// Invariant suite run by `upcg selftest`: coder fuzz, entropy-model
// round-trips, lossless and lossy stream round-trips with randomly
// initialized networks, decode-order causality, gradient checks of both
// training objectives and the metric identities. Each check is caught
// separately; `onResult` sees them as they finish.
std::vector<SelfTestResult> runSelfTests(uint64_t seed,
                                         const std::function<void(const SelfTestResult&)>& onResult = {});

}  // namespace upcg
