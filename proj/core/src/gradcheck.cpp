#include "upcg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace upcg {

bool
GradCheckReport::pass() const
{
  return std::all_of(entries.begin(), entries.end(),
                     [&](const GradCheckEntry& e) { return e.maxRelError < tolerance; });
}

double
GradCheckReport::worst() const
{
  double w = 0.0;
  for (const auto& e : entries)
    w = std::max(w, e.maxRelError);
  return w;
}

std::string
GradCheckReport::failing() const
{
  std::string out;
  for (const auto& e : entries) {
    if (e.maxRelError >= tolerance) {
      if (!out.empty())
        out += ", ";
      out += e.name;
    }
  }
  return out;
}

std::string
GradCheckReport::summary() const
{
  std::ostringstream os;
  for (const auto& e : entries) {
    os << e.name << ": checked=" << e.checked << " skipped=" << e.skipped
       << " max_rel=" << e.maxRelError;
    if (e.worstIndex >= 0)
      os << " at[" << e.worstIndex << "] analytic=" << e.analytic << " numeric=" << e.numeric;
    os << (e.maxRelError < tolerance ? " ok" : " FAIL") << "\n";
  }
  return os.str();
}

namespace {

struct Eval {
  double loss;
  uint64_t pattern;
};

Eval
evaluate(const ParamStore& store, const LossBuilder& build, int param,
         const std::vector<double>* values)
{
  Tape<double> tape(store);
  tape.trackPattern(true);
  if (values)
    tape.overrideParam(param, *values);
  const auto loss = build(tape);
  return {tape.scalar(loss), tape.pattern()};
}

}  // namespace

GradCheckReport
gradCheck(const ParamStore& store, const LossBuilder& build, std::span<const int> which,
          const GradCheckOptions& opts)
{
  Gradient grad(store);
  uint64_t basePattern = 0;
  {
    Tape<double> tape(store);
    tape.trackPattern(true);
    const auto loss = build(tape);
    basePattern = tape.pattern();
    tape.backward(loss, grad);
  }
  if (opts.tamper)
    opts.tamper(grad);

  GradCheckReport report;
  report.tolerance = opts.tolerance;
  for (int p : which) {
    GradCheckEntry entry;
    entry.name = store[p].name;
    std::vector<double> values(store[p].values.begin(), store[p].values.end());
    for (size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      double h = opts.h;
      bool smooth = false;
      Eval up{}, down{};
      // A step that crosses a kink is retried smaller before giving up.
      for (int attempt = 0; attempt <= opts.shrinkSteps && !smooth; ++attempt) {
        if (attempt > 0)
          h *= 0.1;
        values[i] = orig + h;
        up = evaluate(store, build, p, &values);
        values[i] = orig - h;
        down = evaluate(store, build, p, &values);
        smooth = up.pattern == basePattern && down.pattern == basePattern;
      }
      values[i] = orig;
      if (!smooth) {
        ++entry.skipped;
        continue;
      }
      const double numeric = (up.loss - down.loss) / (2.0 * h);
      const double analytic = grad.tensors[p].empty() ? 0.0 : grad.tensors[p][i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++entry.checked;
      if (entry.worstIndex < 0 || rel > entry.maxRelError) {
        entry.maxRelError = rel;
        entry.worstIndex = int(i);
        entry.analytic = analytic;
        entry.numeric = numeric;
      }
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace upcg
