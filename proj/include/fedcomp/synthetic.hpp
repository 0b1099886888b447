#pragma once

#include <cstdint>
#include <vector>

#include "fedcomp/timeseries.hpp"

namespace fedcomp {

struct SinusoidComponent {
  double frequency = 0.0;  ///< cycles per time step
  double amplitude = 0.0;
  double phase = 0.0;      ///< radians
  friend bool operator==(const SinusoidComponent&, const SinusoidComponent&) = default;
};

/// Cross-correlated sinusoid mixtures. Every feature mixes the same base frequencies;
/// per feature the mixture is scaled by a random factor in [scale_min, scale_max] and
/// each component's phase is jittered by at most phase_jitter radians.
struct SyntheticSpec {
  int features = 8;
  int steps = 2000;
  std::vector<double> frequencies{1.0 / 144.0, 1.0 / 48.0, 1.0 / 700.0};
  std::vector<double> weights{1.0, 0.5, 0.3};  ///< relative amplitude per frequency
  double scale_min = 0.5;
  double scale_max = 2.0;
  double phase_jitter = 0.3;
  double offset = 5.0;
  double noise_std = 0.1;
  std::uint64_t seed = 1;
  /// When non-empty, used verbatim instead of the randomized mixture (one list per feature).
  std::vector<std::vector<SinusoidComponent>> components;

  /// Violations prefixed with `path` (e.g. "dataset.synthetic").
  std::vector<std::string> violations(const std::string& path) const;
  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

/// Feature d at step t: offset + sum_k a_dk sin(2 pi f_k t + phi_dk) + N(0, noise_std^2).
TimeSeries generate_synthetic(const SyntheticSpec& spec);

}  // namespace fedcomp
