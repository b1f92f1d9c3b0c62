#include "ace/models/training.hpp"

#include "ace/core/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace ace::models {

nlohmann::json ClassifierTrainingConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"network", network.to_json()},
          {"seed", seed}};
}

ClassifierTrainingConfig ClassifierTrainingConfig::from_json(const nlohmann::json& j) {
  ClassifierTrainingConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  if (j.contains("network")) c.network = ConvNetConfig::from_json(j.at("network"));
  c.seed = j.value("seed", c.seed);
  return c;
}

std::vector<std::string> ClassifierTrainingConfig::validate() const {
  std::vector<std::string> problems;
  if (epochs < 1) problems.push_back("train_classifier.epochs must be >= 1");
  if (batch_size < 1) problems.push_back("train_classifier.batch_size must be >= 1");
  if (!(learning_rate > 0.0)) problems.push_back("train_classifier.learning_rate must be > 0");
  if (network.width1 < 1 || network.width2 < 1) problems.push_back("train_classifier.network widths must be >= 1");
  return problems;
}

template <typename Scalar>
double accuracy(const Classifier<Scalar>& classifier, const std::vector<ImageArray<Scalar>>& images,
                const std::vector<Label>& labels) {
  require(images.size() == labels.size() && !images.empty(), "accuracy: need matching non-empty images and labels");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i) correct += predict_label(classifier, images[i]) == labels[i];
  return static_cast<double>(correct) / static_cast<double>(images.size());
}

template <typename Scalar>
ConvClassifier<Scalar> train_classifier(const Dataset& dataset, const ClassifierTrainingConfig& config,
                                        ClassifierTrainingLog* log, const std::function<void(int, double)>& progress) {
  if (auto problems = config.validate(); !problems.empty()) throw ConfigError(problems);
  const auto it = dataset.splits.find("train");
  require(it != dataset.splits.end() && !it->second.empty(), "train_classifier: training split is empty");
  const auto& train = it->second;
  std::set<Label> classes;
  for (const auto i : train) classes.insert(dataset.samples[i].label);
  require(classes.size() >= 2, "train_classifier: labeled data has a single class");
  const int num_classes = std::max(dataset.descriptor.num_classes(), *classes.rbegin() + 1);

  Rng rng(config.seed);
  ConvClassifier<Scalar> model(dataset.descriptor.geometry, num_classes, config.network, rng);
  model.set_label_names(dataset.descriptor.class_names);
  ConvClassifier<Scalar> grad = model.zeros_like();
  auto params = nn::parameter_list<Scalar>(model);
  auto grads = nn::parameter_list<Scalar>(grad);
  nn::Adam<Scalar> adam(config.learning_rate);

  ClassifierTrainingLog local;
  ClassifierTrainingLog& out = log ? *log : local;
  out.loss.clear();

  std::vector<std::size_t> order(train.begin(), train.end());
  const int steps_per_epoch = static_cast<int>((order.size() + config.batch_size - 1) / config.batch_size);
  const int total_steps = steps_per_epoch * config.epochs;
  int step = 0;
  typename ConvClassifier<Scalar>::Tape tape;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size), ++step) {
      adam.set_learning_rate(config.learning_rate * 0.5 *
                             (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total_steps)));
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const auto batch = static_cast<Scalar>(end - start);
      for (auto* g : grads) g->setZero();
      double loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = dataset.samples[order[k]];
        const Vector<Scalar> logits = model.forward(s.image.template cast<Scalar>(), &tape);
        Vector<Scalar> p = softmax<Scalar>(logits);
        loss -= std::log(std::max(static_cast<double>(p(s.label)), 1e-30));
        p(s.label) -= Scalar(1);
        model.backward(tape, p / batch, &grad);
      }
      loss /= static_cast<double>(end - start);
      if (!std::isfinite(loss)) throw RuntimeFailure("train_classifier: loss became non-finite");
      adam.step(params, grads);
      out.loss.push_back(loss);
      if (progress) progress(step, loss);
    }
  }

  const std::string heldout = dataset.splits.count("val") && !dataset.split("val").empty() ? "val" : "test";
  std::vector<ImageArray<Scalar>> images;
  for (const auto& img : dataset.images(heldout)) images.push_back(img.template cast<Scalar>());
  out.heldout_accuracy = accuracy(model, images, dataset.labels(heldout));
  model.metadata = {{"training", config.to_json()},
                    {"dataset", dataset.descriptor.name},
                    {"heldout_split", heldout},
                    {"heldout_accuracy", out.heldout_accuracy}};
  return model;
}

template ConvClassifier<float> train_classifier<float>(const Dataset&, const ClassifierTrainingConfig&,
                                                       ClassifierTrainingLog*, const std::function<void(int, double)>&);
template ConvClassifier<double> train_classifier<double>(const Dataset&, const ClassifierTrainingConfig&,
                                                         ClassifierTrainingLog*, const std::function<void(int, double)>&);
template double accuracy<float>(const Classifier<float>&, const std::vector<ImageArray<float>>&, const std::vector<Label>&);
template double accuracy<double>(const Classifier<double>&, const std::vector<ImageArray<double>>&,
                                 const std::vector<Label>&);

}  // namespace ace::models
