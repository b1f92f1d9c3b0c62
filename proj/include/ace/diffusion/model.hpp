#pragma once

#include "ace/diffusion/denoiser.hpp"
#include "ace/diffusion/schedule.hpp"
#include "ace/diffusion/unet.hpp"
#include "ace/nn/checkpoint.hpp"

#include <filesystem>

namespace ace::diffusion {

/// Noise-prediction DDPM bound to its training schedule. On a respaced chain
/// the network is queried at the original timestep of each kept step and the
/// reverse-step mean is formed from the respaced constants:
///
///   mu = (x - beta_i / sqrt(1 - abar_i) * eps_hat) / sqrt(1 - beta_i)
///   sigma = sqrt(beta_i (1 - abar_{i-1}) / (1 - abar_i))
template <typename Scalar>
class DiffusionModel final : public Denoiser<Scalar> {
 public:
  DiffusionModel(UNetLite<Scalar> network, NoiseSchedule schedule);

  Geometry geometry() const override { return network_.geometry(); }
  const NoiseSchedule& schedule() const { return schedule_; }
  const UNetLite<Scalar>& network() const { return network_; }
  UNetLite<Scalar>& network() { return network_; }

  DenoiserOutput<Scalar> predict(const ImageArray<Scalar>& x, int step, const RespacedSchedule& chain,
                                 std::any* tape) const override;

  ImageArray<Scalar> backward_mean(const std::any& tape, const ImageArray<Scalar>& grad_mu) const override;

  /// Checkpoint metadata (training config, loss summary) carried through save.
  nlohmann::json metadata = nlohmann::json::object();

 private:
  struct StepTape {
    typename UNetLite<Scalar>::Tape net;
    Scalar input_coef;  // d mu / d x (identity part)
    Scalar eps_coef;    // d mu / d eps_hat
  };

  UNetLite<Scalar> network_;
  NoiseSchedule schedule_;
};

template <typename Scalar>
void save_denoiser(const std::filesystem::path& path, DiffusionModel<Scalar>& model);

/// Throws RuntimeFailure when the archive is not a denoiser checkpoint.
template <typename Scalar>
DiffusionModel<Scalar> load_denoiser(const std::filesystem::path& path);

template <typename Scalar>
DiffusionModel<Scalar> denoiser_from_checkpoint(const nn::Checkpoint& checkpoint);

}  // namespace ace::diffusion
