#pragma once

#include "ace/core/errors.hpp"
#include "ace/core/random.hpp"
#include "ace/core/types.hpp"
#include "ace/diffusion/denoiser.hpp"
#include "ace/diffusion/schedule.hpp"

#include <any>
#include <cmath>
#include <cstdint>
#include <vector>

namespace ace::diffusion {

/// x_t = sqrt(abar) x0 + sqrt(1 - abar) eps. Pure; the caller supplies eps.
template <typename Derived, typename OtherDerived>
auto forward_diffuse(const Eigen::ArrayBase<Derived>& x0, double alpha_bar, const Eigen::ArrayBase<OtherDerived>& eps) {
  using Scalar = typename Derived::Scalar;
  require(x0.rows() == eps.rows() && x0.cols() == eps.cols(), "forward_diffuse: noise shape does not match image");
  require(alpha_bar >= 0.0 && alpha_bar <= 1.0, "forward_diffuse: alpha_bar outside [0, 1]");
  const auto signal = static_cast<Scalar>(std::sqrt(alpha_bar));
  const auto noise = static_cast<Scalar>(std::sqrt(1.0 - alpha_bar));
  return ImageArray<Scalar>(signal * x0.derived() + noise * eps.derived());
}

/// Noises to original timestep `t` (1..T) of `schedule`.
template <typename Scalar>
ImageArray<Scalar> forward_diffuse(const ImageArray<Scalar>& x0, int t, const ImageArray<Scalar>& eps,
                                   const NoiseSchedule& schedule) {
  require(t >= 1 && t <= schedule.num_steps(), "timestep " + std::to_string(t) + " outside schedule");
  return forward_diffuse(x0, schedule.alpha_bar(t), eps);
}

/// Noises to step `step` (0..T') of a respaced chain; step 0 is the clean image.
template <typename Scalar>
ImageArray<Scalar> forward_diffuse(const ImageArray<Scalar>& x0, int step, const ImageArray<Scalar>& eps,
                                   const RespacedSchedule& chain) {
  require(step >= 0 && step <= chain.length(), "step " + std::to_string(step) + " outside respaced chain");
  return forward_diffuse(x0, chain.alpha_bar(step), eps);
}

/// One reverse step x_{step-1} = mu + sigma * eps. The final step (step == 1)
/// adds no noise.
template <typename Scalar>
ImageArray<Scalar> denoise_step(const ImageArray<Scalar>& x, int step, const ImageArray<Scalar>& eps,
                                const Denoiser<Scalar>& model, const RespacedSchedule& chain, std::any* tape = nullptr);

/// Noise consumed by one filter evaluation: one draw for the forward jump,
/// one per reverse step (`steps[k]` is used at step tau - k).
template <typename Scalar>
struct FilterNoise {
  ImageArray<Scalar> forward;
  std::vector<ImageArray<Scalar>> steps;
};

template <typename Scalar>
FilterNoise<Scalar> sample_filter_noise(const Geometry& g, int tau, Rng& rng);

/// Recorded state of a filter evaluation for the backward pass.
template <typename Scalar>
struct FilterTrace {
  int tau = 0;
  double input_scale = 1.0;
  std::vector<std::any> tapes;  // tapes[k] belongs to step tau - k
};

/// F_tau(x): forward-diffuse to step tau of `chain`, then run tau reverse
/// steps down to 0. tau = 0 returns x unchanged.
template <typename Scalar>
ImageArray<Scalar> filter(const ImageArray<Scalar>& x, int tau, const Denoiser<Scalar>& model,
                          const RespacedSchedule& chain, const FilterNoise<Scalar>& noise,
                          FilterTrace<Scalar>* trace = nullptr);

/// Convenience overload drawing fresh noise from `rng`.
template <typename Scalar>
ImageArray<Scalar> filter(const ImageArray<Scalar>& x, int tau, const Denoiser<Scalar>& model,
                          const RespacedSchedule& chain, Rng& rng, FilterTrace<Scalar>* trace = nullptr) {
  return filter(x, tau, model, chain, sample_filter_noise<Scalar>(model.geometry(), tau, rng), trace);
}

/// Gradient of a scalar loss with respect to the filter input, given the
/// gradient with respect to its output.
template <typename Scalar>
ImageArray<Scalar> filter_backward(const FilterTrace<Scalar>& trace, const Denoiser<Scalar>& model,
                                   const ImageArray<Scalar>& grad_out);

}  // namespace ace::diffusion
