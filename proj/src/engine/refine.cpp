#include "ace/engine/refine.hpp"

#include "ace/core/errors.hpp"

namespace ace::engine {

template <typename Scalar>
ImageArray<Scalar> collage(const ImageArray<Scalar>& inside, const ImageArray<Scalar>& outside, const Mask& mask) {
  require(inside.rows() == outside.rows() && inside.cols() == outside.cols(), "collage: image shapes differ");
  require(mask.binary.cols() == inside.cols(), "collage: mask does not match the image plane");
  ImageArray<Scalar> out(inside.rows(), inside.cols());
  for (Eigen::Index p = 0; p < inside.cols(); ++p)
    out.col(p) = mask.binary(0, p) ? inside.col(p) : outside.col(p);
  return out;
}

template <typename Scalar>
ImageArray<Scalar> repaint_refine(const ImageArray<Scalar>& x, const ImageArray<Scalar>& x_pre, const Mask& mask, int tau,
                                  const diffusion::Denoiser<Scalar>& model, const diffusion::RespacedSchedule& chain,
                                  std::uint64_t seed) {
  const Geometry g = model.geometry();
  require(has_geometry(x, g) && has_geometry(x_pre, g), "repaint_refine: images do not match model geometry");
  require(mask.geometry.height == g.height && mask.geometry.width == g.width, "repaint_refine: mask geometry mismatch");
  require(tau >= 0 && tau <= chain.length(), "repaint_refine: tau " + std::to_string(tau) + " outside the chain");
  if (mask.count() == 0) return x;
  if (tau == 0) return collage(x_pre, x, mask);

  Rng rng(seed);
  ImageArray<Scalar> current = diffusion::forward_diffuse(x_pre, tau, rng.normal<Scalar>(g), chain);
  for (int step = tau; step >= 1; --step) {
    const ImageArray<Scalar> known = diffusion::forward_diffuse(x, step, rng.normal<Scalar>(g), chain);
    const ImageArray<Scalar> mixed = collage(current, known, mask);
    current = diffusion::denoise_step(mixed, step, rng.normal<Scalar>(g), model, chain);
  }
  const ImageArray<Scalar> clipped =
      current.cwiseMax(static_cast<Scalar>(kPixelMin)).cwiseMin(static_cast<Scalar>(kPixelMax));
  return collage(clipped, x, mask);
}

#define ACE_INSTANTIATE_REFINE(S)                                                                                  \
  template ImageArray<S> collage<S>(const ImageArray<S>&, const ImageArray<S>&, const Mask&);                     \
  template ImageArray<S> repaint_refine<S>(const ImageArray<S>&, const ImageArray<S>&, const Mask&, int,          \
                                           const diffusion::Denoiser<S>&, const diffusion::RespacedSchedule&,     \
                                           std::uint64_t);

ACE_INSTANTIATE_REFINE(float)
ACE_INSTANTIATE_REFINE(double)

}  // namespace ace::engine
