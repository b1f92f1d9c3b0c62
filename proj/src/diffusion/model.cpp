#include "ace/diffusion/model.hpp"

#include "ace/core/errors.hpp"

#include <cmath>

namespace ace::diffusion {

template <typename Scalar>
DiffusionModel<Scalar>::DiffusionModel(UNetLite<Scalar> network, NoiseSchedule schedule)
    : network_(std::move(network)), schedule_(std::move(schedule)) {}

template <typename Scalar>
DenoiserOutput<Scalar> DiffusionModel<Scalar>::predict(const ImageArray<Scalar>& x, int step,
                                                       const RespacedSchedule& chain, std::any* tape) const {
  require(step >= 1 && step <= chain.length(), "denoiser step outside chain");
  require(chain.base.num_steps() == schedule_.num_steps(), "respaced chain does not derive from the model schedule");
  const double ab = chain.alpha_bar(step);
  const double beta = chain.beta(step);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
  const auto input_coef = static_cast<Scalar>(inv_sqrt_alpha);
  const auto eps_coef = static_cast<Scalar>(-inv_sqrt_alpha * beta / std::sqrt(1.0 - ab));

  StepTape local;
  StepTape* s = &local;
  if (tape) {
    *tape = StepTape{};
    s = std::any_cast<StepTape>(tape);
  }
  s->input_coef = input_coef;
  s->eps_coef = eps_coef;
  const Matrix<Scalar> eps_hat = network_.forward(x.matrix(), chain.model_timestep(step), tape ? &s->net : nullptr);

  DenoiserOutput<Scalar> out;
  out.mu = input_coef * x + eps_coef * eps_hat.array();
  out.sigma = ImageArray<Scalar>::Constant(x.rows(), x.cols(), static_cast<Scalar>(chain.posterior_sigma(step)));
  return out;
}

template <typename Scalar>
ImageArray<Scalar> DiffusionModel<Scalar>::backward_mean(const std::any& tape, const ImageArray<Scalar>& grad_mu) const {
  const auto* s = std::any_cast<StepTape>(&tape);
  if (!s) throw RuntimeFailure("denoiser tape missing or of the wrong type");
  const Matrix<Scalar> through_net = network_.backward(s->net, (s->eps_coef * grad_mu).matrix(), nullptr);
  return s->input_coef * grad_mu + through_net.array();
}

template <typename Scalar>
void save_denoiser(const std::filesystem::path& path, DiffusionModel<Scalar>& model) {
  nn::Checkpoint ckpt;
  ckpt.header["kind"] = "denoiser";
  ckpt.header["geometry"] = nn::geometry_to_json(model.geometry());
  ckpt.header["architecture"] = {{"name", "unet-lite"}, {"config", model.network().config().to_json()}};
  ckpt.header["schedule"] = {{"kind", model.schedule().kind},
                             {"num_steps", model.schedule().num_steps()},
                             {"betas", model.schedule().betas}};
  ckpt.header["metadata"] = model.metadata;
  nn::store_parameters<Scalar>(model.network(), ckpt);
  nn::save_checkpoint(path, ckpt);
}

template <typename Scalar>
DiffusionModel<Scalar> denoiser_from_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.kind() != "denoiser") throw RuntimeFailure("checkpoint kind '" + ckpt.kind() + "' is not a denoiser");
  const Geometry geometry = nn::geometry_from_json(ckpt.header.at("geometry"));
  const UNetConfig config = UNetConfig::from_json(ckpt.header.at("architecture").at("config"));
  const auto& sched = ckpt.header.at("schedule");
  NoiseSchedule schedule =
      schedule_from_betas(sched.at("betas").get<std::vector<double>>(), sched.value("kind", std::string("custom")));
  if (schedule.num_steps() != sched.at("num_steps").get<int>())
    throw RuntimeFailure("checkpoint schedule length does not match its beta array");
  Rng rng(0);
  UNetLite<Scalar> net(geometry, config, rng);
  nn::load_parameters<Scalar>(net, ckpt);
  DiffusionModel<Scalar> model(std::move(net), std::move(schedule));
  model.metadata = ckpt.header.value("metadata", nlohmann::json::object());
  return model;
}

template <typename Scalar>
DiffusionModel<Scalar> load_denoiser(const std::filesystem::path& path) {
  return denoiser_from_checkpoint<Scalar>(nn::load_checkpoint(path));
}

template class DiffusionModel<float>;
template class DiffusionModel<double>;
template void save_denoiser<float>(const std::filesystem::path&, DiffusionModel<float>&);
template void save_denoiser<double>(const std::filesystem::path&, DiffusionModel<double>&);
template DiffusionModel<float> load_denoiser<float>(const std::filesystem::path&);
template DiffusionModel<double> load_denoiser<double>(const std::filesystem::path&);
template DiffusionModel<float> denoiser_from_checkpoint<float>(const nn::Checkpoint&);
template DiffusionModel<double> denoiser_from_checkpoint<double>(const nn::Checkpoint&);

}  // namespace ace::diffusion
