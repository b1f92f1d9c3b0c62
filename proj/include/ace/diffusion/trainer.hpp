#pragma once

#include "ace/diffusion/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ace::diffusion {

struct DenoiserTrainingConfig {
  int schedule_steps = 1000;
  std::string schedule_kind = "linear";
  /// Upper bound of sampled training timesteps; 0 trains on the full chain.
  /// A prefix of the chain is enough when generation always starts from a
  /// partially noised input.
  int max_train_timestep = 0;
  /// Share of samples drawn from the whole chain when max_train_timestep is set.
  double full_chain_fraction = 0.0;
  int iterations = 3000;
  int batch_size = 32;
  double learning_rate = 2e-3;
  double ema_decay = 0.995;
  UNetConfig network;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static DenoiserTrainingConfig from_json(const nlohmann::json& j);
  std::vector<std::string> validate() const;
};

struct DenoiserTrainingLog {
  std::vector<double> loss;  // mean batch loss per iteration
  int max_sampled_timestep = 0;
  int min_sampled_timestep = 0;
};

using TrainingProgress = std::function<void(int iteration, double loss)>;

/// Trains a noise-prediction network with the simple epsilon MSE objective.
/// Throws ValidationError on an empty set or mixed geometries.
template <typename Scalar>
DiffusionModel<Scalar> train_denoiser(const std::vector<ImageArray<Scalar>>& images, const Geometry& geometry,
                                      const DenoiserTrainingConfig& config, DenoiserTrainingLog* log = nullptr,
                                      const TrainingProgress& progress = {});

}  // namespace ace::diffusion
