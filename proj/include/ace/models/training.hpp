#pragma once

#include "ace/models/classifier.hpp"
#include "ace/models/dataset.hpp"

#include <functional>

namespace ace::models {

struct ClassifierTrainingConfig {
  int epochs = 12;
  int batch_size = 32;
  double learning_rate = 3e-3;
  ConvNetConfig network;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static ClassifierTrainingConfig from_json(const nlohmann::json& j);
  std::vector<std::string> validate() const;
};

struct ClassifierTrainingLog {
  std::vector<double> loss;  // mean batch loss per step
  double heldout_accuracy = 0.0;
};

/// Fits a ConvClassifier on the "train" split with cross-entropy and reports
/// accuracy on "val" (or "test" when val is empty). Throws ValidationError on
/// empty or single-class data.
template <typename Scalar>
ConvClassifier<Scalar> train_classifier(const Dataset& dataset, const ClassifierTrainingConfig& config,
                                        ClassifierTrainingLog* log = nullptr,
                                        const std::function<void(int, double)>& progress = {});

template <typename Scalar>
double accuracy(const Classifier<Scalar>& classifier, const std::vector<ImageArray<Scalar>>& images,
                const std::vector<Label>& labels);

}  // namespace ace::models
