#include "fedcomp/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "fedcomp/error.hpp"

namespace fedcomp {

std::vector<std::string> SyntheticSpec::violations(const std::string& path) const {
  std::vector<std::string> v;
  if (features < 1) v.push_back(path + ".features must be >= 1");
  if (steps < 1) v.push_back(path + ".steps must be >= 1");
  if (!(noise_std >= 0.0)) v.push_back(path + ".noise_std must be >= 0");
  if (components.empty()) {
    if (frequencies.empty()) v.push_back(path + ".frequencies must not be empty");
    if (weights.size() != frequencies.size()) v.push_back(path + ".weights must have one entry per frequency");
    if (!(scale_min > 0.0 && scale_max >= scale_min)) v.push_back(path + ".scale_min/scale_max must satisfy 0 < min <= max");
    if (!(phase_jitter >= 0.0)) v.push_back(path + ".phase_jitter must be >= 0");
  } else if (static_cast<int>(components.size()) != features) {
    v.push_back(path + ".components must list one mixture per feature");
  }
  return v;
}

TimeSeries generate_synthetic(const SyntheticSpec& spec) {
  if (auto v = spec.violations("synthetic"); !v.empty()) throw ValidationError(std::move(v));

  std::mt19937_64 gen(spec.seed);
  std::vector<std::vector<SinusoidComponent>> mix = spec.components;
  if (mix.empty()) {
    std::uniform_real_distribution<double> base_phase(0.0, 2.0 * std::numbers::pi);
    std::vector<double> shared_phase;
    for (std::size_t k = 0; k < spec.frequencies.size(); ++k) shared_phase.push_back(base_phase(gen));
    std::uniform_real_distribution<double> scale(spec.scale_min, spec.scale_max);
    std::uniform_real_distribution<double> jitter(-spec.phase_jitter, spec.phase_jitter);
    for (int d = 0; d < spec.features; ++d) {
      const double s = scale(gen);
      std::vector<SinusoidComponent> comps;
      for (std::size_t k = 0; k < spec.frequencies.size(); ++k) {
        comps.push_back({spec.frequencies[k], s * spec.weights[k], shared_phase[k] + jitter(gen)});
      }
      mix.push_back(std::move(comps));
    }
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  Matrix values(spec.features, spec.steps);
  for (int t = 0; t < spec.steps; ++t) {
    for (int d = 0; d < spec.features; ++d) {
      double x = spec.offset;
      for (const auto& c : mix[static_cast<std::size_t>(d)]) {
        x += c.amplitude * std::sin(2.0 * std::numbers::pi * c.frequency * t + c.phase);
      }
      if (spec.noise_std > 0.0) x += spec.noise_std * noise(gen);
      values(d, t) = x;
    }
  }
  return TimeSeries::from_values(std::move(values));
}

}  // namespace fedcomp
