#pragma once

#include "ace/core/random.hpp"
#include "ace/diffusion/process.hpp"
#include "ace/engine/mask.hpp"

namespace ace::engine {

/// Inpaints the pre-explanation into the input. Starting from x_pre noised to
/// step tau, each reverse step denoises the collage m * x_t + (1 - m) * x^i_t,
/// where x^i_t is the input noised to the same step. A final collage with the
/// clean input makes the result equal to x wherever the mask is 0.
template <typename Scalar>
ImageArray<Scalar> repaint_refine(const ImageArray<Scalar>& x, const ImageArray<Scalar>& x_pre, const Mask& mask, int tau,
                                  const diffusion::Denoiser<Scalar>& model, const diffusion::RespacedSchedule& chain,
                                  std::uint64_t seed);

/// m * inside + (1 - m) * outside, broadcast over channels.
template <typename Scalar>
ImageArray<Scalar> collage(const ImageArray<Scalar>& inside, const ImageArray<Scalar>& outside, const Mask& mask);

}  // namespace ace::engine
