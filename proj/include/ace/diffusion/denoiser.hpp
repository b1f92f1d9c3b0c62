#pragma once

#include "ace/core/types.hpp"
#include "ace/diffusion/schedule.hpp"

#include <any>

namespace ace::diffusion {

/// Reverse-step parameters: x_{t-1} = mu + sigma * eps (diagonal sigma).
template <typename Scalar>
struct DenoiserOutput {
  ImageArray<Scalar> mu;
  ImageArray<Scalar> sigma;
};

/// A reverse-chain model evaluated on a (respaced) chain. Implementations
/// must be deterministic and safe to call concurrently.
///
/// `predict` optionally records what `backward_mean` needs into `tape`.
/// Sigma is treated as independent of the input: gradients flow through mu.
template <typename Scalar>
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual Geometry geometry() const = 0;

  virtual DenoiserOutput<Scalar> predict(const ImageArray<Scalar>& x, int step, const RespacedSchedule& chain,
                                         std::any* tape) const = 0;

  /// Vector-Jacobian product of mu with respect to the input of the recorded call.
  virtual ImageArray<Scalar> backward_mean(const std::any& tape, const ImageArray<Scalar>& grad_mu) const = 0;
};

}  // namespace ace::diffusion
