#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ace::diffusion {

/// Diffusion constants over T steps. Timesteps are 1-based; `alpha_bar(0)` is
/// the clean-image value 1.
struct NoiseSchedule {
  std::string kind = "linear";
  std::vector<double> betas;       // beta_1 .. beta_T
  std::vector<double> alpha_bars;  // cumulative products of (1 - beta)

  int num_steps() const { return static_cast<int>(betas.size()); }
  double beta(int t) const { return betas.at(static_cast<std::size_t>(t - 1)); }
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars.at(static_cast<std::size_t>(t - 1)); }
};

/// Builds a schedule of `num_steps` steps. Supported kinds: "linear"
/// (betas 1e-4..2e-2 scaled by 1000/T) and "cosine".
NoiseSchedule build_schedule(int num_steps, std::string_view kind = "linear");

/// Rebuilds the cumulative products from a stored beta array.
NoiseSchedule schedule_from_betas(std::vector<double> betas, std::string kind = "custom");

/// Uniform subsequence of a base schedule's timesteps. Step `i` (1..length)
/// maps to original timestep `kept_steps[i-1]`.
struct RespacedSchedule {
  NoiseSchedule base;
  std::vector<int> kept_steps;
  std::vector<double> alpha_bars;  // base alpha_bar at kept steps

  int length() const { return static_cast<int>(kept_steps.size()); }
  double alpha_bar(int i) const { return i == 0 ? 1.0 : alpha_bars.at(static_cast<std::size_t>(i - 1)); }
  int model_timestep(int i) const { return kept_steps.at(static_cast<std::size_t>(i - 1)); }

  /// Effective beta of the respaced chain: 1 - abar_i / abar_{i-1}.
  double beta(int i) const { return 1.0 - alpha_bar(i) / alpha_bar(i - 1); }

  /// Standard deviation of the reverse-step posterior q(x_{i-1} | x_i, x_0).
  double posterior_sigma(int i) const;
};

/// Keeps steps floor(i * T / T') for i = 1..T'. Throws ValidationError unless 1 <= T' <= T.
RespacedSchedule respace(const NoiseSchedule& schedule, int steps);

inline RespacedSchedule full_chain(const NoiseSchedule& schedule) { return respace(schedule, schedule.num_steps()); }

}  // namespace ace::diffusion
