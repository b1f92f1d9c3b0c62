#include "ace/diffusion/process.hpp"

namespace ace::diffusion {

template <typename Scalar>
ImageArray<Scalar> denoise_step(const ImageArray<Scalar>& x, int step, const ImageArray<Scalar>& eps,
                                const Denoiser<Scalar>& model, const RespacedSchedule& chain, std::any* tape) {
  require(step >= 1 && step <= chain.length(), "denoise step " + std::to_string(step) + " outside chain of length " +
                                                   std::to_string(chain.length()));
  require(eps.rows() == x.rows() && eps.cols() == x.cols(), "denoise_step: noise shape does not match image");
  auto out = model.predict(x, step, chain, tape);
  if (step == 1) return std::move(out.mu);
  return out.mu + out.sigma * eps;
}

template <typename Scalar>
FilterNoise<Scalar> sample_filter_noise(const Geometry& g, int tau, Rng& rng) {
  FilterNoise<Scalar> noise;
  noise.forward = rng.normal<Scalar>(g);
  noise.steps.reserve(static_cast<std::size_t>(std::max(tau, 0)));
  for (int k = 0; k < tau; ++k) noise.steps.push_back(rng.normal<Scalar>(g));
  return noise;
}

template <typename Scalar>
ImageArray<Scalar> filter(const ImageArray<Scalar>& x, int tau, const Denoiser<Scalar>& model,
                          const RespacedSchedule& chain, const FilterNoise<Scalar>& noise, FilterTrace<Scalar>* trace) {
  require(tau >= 0 && tau <= chain.length(),
          "filter: tau=" + std::to_string(tau) + " exceeds chain length " + std::to_string(chain.length()));
  if (trace) {
    trace->tau = tau;
    trace->tapes.clear();
  }
  if (tau == 0) {
    if (trace) trace->input_scale = 1.0;
    return x;
  }
  require(static_cast<int>(noise.steps.size()) >= tau, "filter: not enough noise draws for tau");
  ImageArray<Scalar> current = forward_diffuse(x, chain.alpha_bar(tau), noise.forward);
  if (trace) {
    trace->input_scale = std::sqrt(chain.alpha_bar(tau));
    trace->tapes.resize(static_cast<std::size_t>(tau));
  }
  for (int k = 0; k < tau; ++k) {
    const int step = tau - k;
    current = denoise_step(current, step, noise.steps[static_cast<std::size_t>(k)], model, chain,
                           trace ? &trace->tapes[static_cast<std::size_t>(k)] : nullptr);
  }
  return current;
}

template <typename Scalar>
ImageArray<Scalar> filter_backward(const FilterTrace<Scalar>& trace, const Denoiser<Scalar>& model,
                                   const ImageArray<Scalar>& grad_out) {
  if (trace.tau == 0) return grad_out;
  require(static_cast<int>(trace.tapes.size()) == trace.tau, "filter_backward: trace was not recorded");
  ImageArray<Scalar> grad = grad_out;
  for (int k = trace.tau - 1; k >= 0; --k) grad = model.backward_mean(trace.tapes[static_cast<std::size_t>(k)], grad);
  return static_cast<Scalar>(trace.input_scale) * grad;
}

#define ACE_INSTANTIATE_PROCESS(S)                                                                                   \
  template ImageArray<S> denoise_step<S>(const ImageArray<S>&, int, const ImageArray<S>&, const Denoiser<S>&,        \
                                         const RespacedSchedule&, std::any*);                                        \
  template FilterNoise<S> sample_filter_noise<S>(const Geometry&, int, Rng&);                                        \
  template ImageArray<S> filter<S>(const ImageArray<S>&, int, const Denoiser<S>&, const RespacedSchedule&,           \
                                   const FilterNoise<S>&, FilterTrace<S>*);                                          \
  template ImageArray<S> filter_backward<S>(const FilterTrace<S>&, const Denoiser<S>&, const ImageArray<S>&);

ACE_INSTANTIATE_PROCESS(float)
ACE_INSTANTIATE_PROCESS(double)

}  // namespace ace::diffusion
