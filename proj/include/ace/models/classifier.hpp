#pragma once

#include "ace/core/random.hpp"
#include "ace/core/types.hpp"
#include "ace/nn/checkpoint.hpp"
#include "ace/nn/layers.hpp"

#include <any>
#include <filesystem>
#include <string>
#include <vector>

namespace ace::models {

/// The classifier under explanation. Read-only: nothing downstream updates
/// its weights. Implementations must be deterministic and thread-safe.
template <typename Scalar>
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual Geometry geometry() const = 0;
  virtual int num_classes() const = 0;
  virtual std::vector<std::string> label_names() const;

  virtual Vector<Scalar> logits(const ImageArray<Scalar>& x, std::any* tape = nullptr) const = 0;

  /// d(loss)/d(input) of the recorded call, given d(loss)/d(logits).
  virtual ImageArray<Scalar> backward_input(const std::any& tape, const Vector<Scalar>& grad_logits) const = 0;
};

template <typename Scalar>
Vector<Scalar> softmax(const Vector<Scalar>& logits);

/// Row i holds the class probabilities of images[i]. Throws ValidationError on
/// geometry mismatch.
template <typename Scalar>
Matrix<double> predict_probs(const Classifier<Scalar>& classifier, const std::vector<ImageArray<Scalar>>& images);

template <typename Scalar>
Vector<double> predict_probs(const Classifier<Scalar>& classifier, const ImageArray<Scalar>& image);

template <typename Scalar>
Label predict_label(const Classifier<Scalar>& classifier, const ImageArray<Scalar>& image);

struct ConvNetConfig {
  int width1 = 16;
  int width2 = 32;

  nlohmann::json to_json() const { return {{"width1", width1}, {"width2", width2}}; }
  static ConvNetConfig from_json(const nlohmann::json& j);
};

/// Per-image channel means are subtracted from the input, then three conv
/// stages (silu, 2x average pooling between stages), global average pooling
/// and a linear head. Height and width must be multiples of 4.
template <typename Scalar>
class ConvClassifier final : public Classifier<Scalar> {
 public:
  struct Tape {
    Extent e0, e1, e2;
    Matrix<Scalar> col1, h1, p1, col2, h2, p2, col3, h3, feature;
  };

  ConvClassifier() = default;
  ConvClassifier(const Geometry& geometry, int num_classes, const ConvNetConfig& config, Rng& rng);

  Geometry geometry() const override { return geometry_; }
  int num_classes() const override { return static_cast<int>(head_.weight.rows()); }
  std::vector<std::string> label_names() const override;
  void set_label_names(std::vector<std::string> names) { names_ = std::move(names); }
  const ConvNetConfig& config() const { return config_; }

  Vector<Scalar> logits(const ImageArray<Scalar>& x, std::any* tape = nullptr) const override;
  ImageArray<Scalar> backward_input(const std::any& tape, const Vector<Scalar>& grad_logits) const override;

  /// Typed forward/backward used by training.
  Vector<Scalar> forward(const ImageArray<Scalar>& x, Tape* tape) const;
  ImageArray<Scalar> backward(const Tape& tape, const Vector<Scalar>& grad_logits, ConvClassifier* grad) const;

  /// Penultimate (globally pooled) features.
  Vector<Scalar> features(const ImageArray<Scalar>& x) const;

  /// Post-activation feature maps of the three stages.
  std::vector<Matrix<Scalar>> stage_activations(const ImageArray<Scalar>& x) const;

  /// Backward from the pooled feature vector (used by self-supervised training).
  ImageArray<Scalar> backward_features(const Tape& tape, const Vector<Scalar>& grad_feature, ConvClassifier* grad) const;

  ConvClassifier zeros_like() const;

  template <typename F>
  void for_each_parameter(F&& f) {
    conv1_.for_each("conv1", f);
    conv2_.for_each("conv2", f);
    conv3_.for_each("conv3", f);
    head_.for_each("head", f);
  }

  nlohmann::json metadata = nlohmann::json::object();

 private:
  Geometry geometry_;
  ConvNetConfig config_;
  std::vector<std::string> names_;
  nn::Conv2d<Scalar> conv1_, conv2_, conv3_;
  nn::Linear<Scalar> head_;
};

/// logits = W vec(x) + b. Used for closed-form checks.
template <typename Scalar>
class LinearClassifier final : public Classifier<Scalar> {
 public:
  LinearClassifier(const Geometry& geometry, Matrix<Scalar> weight, Vector<Scalar> bias);

  Geometry geometry() const override { return geometry_; }
  int num_classes() const override { return static_cast<int>(weight_.rows()); }
  Vector<Scalar> logits(const ImageArray<Scalar>& x, std::any* tape = nullptr) const override;
  ImageArray<Scalar> backward_input(const std::any& tape, const Vector<Scalar>& grad_logits) const override;

  const Matrix<Scalar>& weight() const { return weight_; }

 private:
  Geometry geometry_;
  Matrix<Scalar> weight_;  // classes x (channels * pixels), channel-major flattening
  Vector<Scalar> bias_;
};

template <typename Scalar>
void save_classifier(const std::filesystem::path& path, ConvClassifier<Scalar>& classifier,
                     const std::string& kind = "classifier");

template <typename Scalar>
ConvClassifier<Scalar> classifier_from_checkpoint(const nn::Checkpoint& checkpoint);

/// Throws RuntimeFailure when the archive does not hold a conv classifier.
template <typename Scalar>
ConvClassifier<Scalar> load_classifier(const std::filesystem::path& path);

}  // namespace ace::models
