#pragma once

#include "ace/models/classifier.hpp"
#include "ace/models/dataset.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <vector>

namespace ace::models {

struct SslTrainingConfig {
  int epochs = 8;
  int batch_size = 32;
  double learning_rate = 3e-3;
  ConvNetConfig network;
  int predictor_hidden = 16;
  int max_shift = 3;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static SslTrainingConfig from_json(const nlohmann::json& j);
  std::vector<std::string> validate() const;
};

struct SslTrainingLog {
  std::vector<double> loss;       // mean symmetric negative cosine per step
  double feature_spread = 0.0;    // mean per-dimension std of unit features on held-out data
};

/// Random shift (edge replicated), horizontal flip, per-channel gain and
/// offset, and light pixel noise.
ImageArray<float> augment(const ImageArray<float>& x, const Geometry& g, int max_shift, Rng& rng);

/// Self-supervised encoder trained with a siamese stop-gradient objective:
/// two augmented views, a small predictor MLP on one branch and a negative
/// cosine against the other (detached) branch, symmetrized. Labels are not
/// used. The returned network's pooled features are the embedding; its
/// linear head is unused.
ConvClassifier<float> train_ssl_encoder(const Dataset& dataset, const SslTrainingConfig& config,
                                        SslTrainingLog* log = nullptr,
                                        const std::function<void(int, double)>& progress = {});

}  // namespace ace::models
