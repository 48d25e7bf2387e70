// gmn_oracle.hpp
// Exact renormalized-GMN values and labels for GHZ-diagonal states:
//   N_g = max_i{0, |mu_i| - w_i},   w_i = sum_{k != i} lambda_k.
// Equivalently max_i{0, F_i - 1/2} over GHZ-basis fidelities. This is the
// ground-truth engine for dataset labels and for validating the SDP solver.

#pragma once

#include <cmath>
#include <cstdlib>

#include "gmedetect/statekit.hpp"

namespace gme {

// Labels: -1 = genuinely entangled, +1 = not detected. Strict positivity is
// numerically meaningless in floating point, so values in (0, threshold] are
// labeled +1 and flagged marginal.
inline constexpr double kLabelThreshold = 1e-6;

inline int label_state(double value) {
  if (value < 0.0) throw DataError("label_state: value must be nonnegative");
  return value > kLabelThreshold ? -1 : +1;
}

struct GmnResult {
  double value = 0.0;        // max(0, witness_margin)
  int argmax_index = 0;      // index attaining the maximum margin
  double witness_margin = 0.0;  // |mu_i| - w_i at the argmax (may be negative)
  int label = +1;
  bool marginal = false;     // value in (0, threshold]
};

inline GmnResult gmn_analytic(const GhzDiagonalSpec& spec) {
  spec.check();
  GmnResult r;
  double best = -1.0;
  for (std::size_t i = 0; i < spec.lambdas.size(); ++i) {
    // w_i = 1/2 - lambda_i under the normalization invariant.
    const double margin = std::abs(spec.mus[i]) - (0.5 - spec.lambdas[i]);
    if (margin > best) {
      best = margin;
      r.argmax_index = static_cast<int>(i);
    }
  }
  r.witness_margin = best;
  r.value = std::max(0.0, best);

  // Cross-check against the fidelity form max_i{0, F_i - 1/2}. For real mu
  // the fidelities are lambda_i +- mu_i; complex mu phases into |mu_i|.
  double best_f = 0.0;
  for (std::size_t i = 0; i < spec.lambdas.size(); ++i)
    best_f = std::max(best_f, spec.lambdas[i] + std::abs(spec.mus[i]));
  const double fidelity_value = std::max(0.0, best_f - 0.5);
  if (std::abs(fidelity_value - r.value) > 1e-12)
    throw NumericalError("gmn_analytic: margin and fidelity forms disagree");

  r.label = label_state(r.value);
  r.marginal = r.value > 0.0 && r.value <= kLabelThreshold;
  return r;
}

// White-noise threshold for a pure GHZ state: the analytic value crosses
// zero at p* = (2^{n-1} - 1) / (2^n - 1).
inline double ghz_noise_flip_point(int n) {
  const double d = double(std::size_t{1} << n);
  return (d / 2.0 - 1.0) / (d - 1.0);
}

}  // namespace gme
