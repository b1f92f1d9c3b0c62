#include "ace/diffusion/trainer.hpp"

#include "ace/core/errors.hpp"
#include "ace/diffusion/process.hpp"

#include <cmath>
#include <numbers>

namespace ace::diffusion {

nlohmann::json DenoiserTrainingConfig::to_json() const {
  return {{"schedule_steps", schedule_steps},   {"schedule_kind", schedule_kind},
          {"max_train_timestep", max_train_timestep}, {"full_chain_fraction", full_chain_fraction},
          {"iterations", iterations},
          {"batch_size", batch_size},           {"learning_rate", learning_rate},
          {"ema_decay", ema_decay},             {"network", network.to_json()},
          {"seed", seed}};
}

DenoiserTrainingConfig DenoiserTrainingConfig::from_json(const nlohmann::json& j) {
  DenoiserTrainingConfig c;
  c.schedule_steps = j.value("schedule_steps", c.schedule_steps);
  c.schedule_kind = j.value("schedule_kind", c.schedule_kind);
  c.max_train_timestep = j.value("max_train_timestep", c.max_train_timestep);
  c.full_chain_fraction = j.value("full_chain_fraction", c.full_chain_fraction);
  c.iterations = j.value("iterations", c.iterations);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.ema_decay = j.value("ema_decay", c.ema_decay);
  if (j.contains("network")) c.network = UNetConfig::from_json(j.at("network"));
  c.seed = j.value("seed", c.seed);
  return c;
}

std::vector<std::string> DenoiserTrainingConfig::validate() const {
  std::vector<std::string> problems;
  if (schedule_steps < 1) problems.push_back("train_ddpm.schedule_steps must be >= 1");
  if (schedule_kind != "linear" && schedule_kind != "cosine")
    problems.push_back("train_ddpm.schedule_kind must be linear or cosine");
  if (max_train_timestep < 0 || max_train_timestep > schedule_steps)
    problems.push_back("train_ddpm.max_train_timestep must lie in [0, schedule_steps]");
  if (full_chain_fraction < 0.0 || full_chain_fraction > 1.0)
    problems.push_back("train_ddpm.full_chain_fraction must lie in [0, 1]");
  if (iterations < 1) problems.push_back("train_ddpm.iterations must be >= 1");
  if (batch_size < 1) problems.push_back("train_ddpm.batch_size must be >= 1");
  if (!(learning_rate > 0.0)) problems.push_back("train_ddpm.learning_rate must be > 0");
  if (ema_decay < 0.0 || ema_decay >= 1.0) problems.push_back("train_ddpm.ema_decay must lie in [0, 1)");
  if (network.base_channels < 1 || network.mid_channels < 1) problems.push_back("train_ddpm.network widths must be >= 1");
  return problems;
}

template <typename Scalar>
DiffusionModel<Scalar> train_denoiser(const std::vector<ImageArray<Scalar>>& images, const Geometry& geometry,
                                      const DenoiserTrainingConfig& config, DenoiserTrainingLog* log,
                                      const TrainingProgress& progress) {
  require(!images.empty(), "train_denoiser: dataset is empty");
  for (std::size_t i = 0; i < images.size(); ++i)
    require(has_geometry(images[i], geometry),
            "train_denoiser: image " + std::to_string(i) + " does not match geometry " + to_string(geometry));
  if (auto problems = config.validate(); !problems.empty()) throw ConfigError(problems);

  NoiseSchedule schedule = build_schedule(config.schedule_steps, config.schedule_kind);
  const int max_t = config.max_train_timestep > 0 ? config.max_train_timestep : schedule.num_steps();

  Rng rng(config.seed);
  UNetLite<Scalar> net(geometry, config.network, rng);
  UNetLite<Scalar> ema = net;
  UNetLite<Scalar> grad = net.zeros_like();
  auto params = nn::parameter_list<Scalar>(net);
  auto grads = nn::parameter_list<Scalar>(grad);
  auto ema_params = nn::parameter_list<Scalar>(ema);
  nn::Adam<Scalar> adam(config.learning_rate);

  DenoiserTrainingLog local_log;
  DenoiserTrainingLog& out_log = log ? *log : local_log;
  out_log.loss.clear();
  out_log.max_sampled_timestep = 0;
  out_log.min_sampled_timestep = schedule.num_steps();

  const auto numel = static_cast<double>(geometry.size());
  typename UNetLite<Scalar>::Tape tape;
  for (int it = 0; it < config.iterations; ++it) {
    const double progress_frac = static_cast<double>(it) / config.iterations;
    adam.set_learning_rate(config.learning_rate * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress_frac))));
    for (auto* g : grads) g->setZero();
    double batch_loss = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
      const auto& x0 = images[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(images.size()) - 1))];
      const bool whole = config.full_chain_fraction > 0.0 && rng.uniform() < config.full_chain_fraction;
      const int t = rng.uniform_int(1, whole ? schedule.num_steps() : max_t);
      out_log.max_sampled_timestep = std::max(out_log.max_sampled_timestep, t);
      out_log.min_sampled_timestep = std::min(out_log.min_sampled_timestep, t);
      const ImageArray<Scalar> eps = rng.normal<Scalar>(geometry);
      const ImageArray<Scalar> xt = forward_diffuse(x0, t, eps, schedule);
      const Matrix<Scalar> pred = net.forward(xt.matrix(), t, &tape);
      const Matrix<Scalar> diff = pred - eps.matrix();
      batch_loss += static_cast<double>(diff.squaredNorm()) / numel;
      const Matrix<Scalar> grad_out = static_cast<Scalar>(2.0 / (numel * config.batch_size)) * diff;
      net.backward(tape, grad_out, &grad);
    }
    batch_loss /= config.batch_size;
    if (!std::isfinite(batch_loss)) throw RuntimeFailure("train_denoiser: loss became non-finite at iteration " +
                                                         std::to_string(it));
    adam.step(params, grads);
    nn::ema_update(ema_params, params, config.ema_decay);
    out_log.loss.push_back(batch_loss);
    if (progress) progress(it, batch_loss);
  }

  DiffusionModel<Scalar> model(std::move(ema), std::move(schedule));
  model.metadata = {{"training", config.to_json()},
                    {"images", images.size()},
                    {"final_loss", out_log.loss.back()},
                    {"max_sampled_timestep", out_log.max_sampled_timestep}};
  return model;
}

template DiffusionModel<float> train_denoiser<float>(const std::vector<ImageArray<float>>&, const Geometry&,
                                                     const DenoiserTrainingConfig&, DenoiserTrainingLog*,
                                                     const TrainingProgress&);
template DiffusionModel<double> train_denoiser<double>(const std::vector<ImageArray<double>>&, const Geometry&,
                                                       const DenoiserTrainingConfig&, DenoiserTrainingLog*,
                                                       const TrainingProgress&);

}  // namespace ace::diffusion
