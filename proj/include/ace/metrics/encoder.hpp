#pragma once

#include "ace/core/types.hpp"
#include "ace/models/classifier.hpp"

#include <memory>
#include <string>
#include <vector>

namespace ace::metrics {

/// Deterministic image -> feature vector map of fixed dimension.
class FeatureEncoder {
 public:
  virtual ~FeatureEncoder() = default;
  virtual std::string tag() const = 0;
  virtual int dim() const = 0;
  virtual Vector<double> encode(const ImageArray<double>& image) const = 0;
};

/// Row i holds encode(images[i]).
Matrix<double> encode_all(const FeatureEncoder& encoder, const std::vector<ImageArray<double>>& images);

/// Flattened pixels (channel-major).
class IdentityEncoder final : public FeatureEncoder {
 public:
  explicit IdentityEncoder(int dim) : dim_(dim) {}
  std::string tag() const override { return "identity"; }
  int dim() const override { return dim_; }
  Vector<double> encode(const ImageArray<double>& image) const override;

 private:
  int dim_;
};

/// Pooled penultimate features of a conv network (supervised or self-supervised).
class ConvFeatureEncoder final : public FeatureEncoder {
 public:
  ConvFeatureEncoder(std::shared_ptr<const models::ConvClassifier<float>> net, std::string tag)
      : net_(std::move(net)), tag_(std::move(tag)) {}
  std::string tag() const override { return tag_; }
  int dim() const override { return net_->config().width2; }
  Vector<double> encode(const ImageArray<double>& image) const override;

 private:
  std::shared_ptr<const models::ConvClassifier<float>> net_;
  std::string tag_;
};

/// Distance between two images.
class ImageDistance {
 public:
  virtual ~ImageDistance() = default;
  virtual double operator()(const ImageArray<double>& a, const ImageArray<double>& b) const = 0;
};

/// Learned perceptual distance: stage activations of a conv network, unit
/// normalized across channels at every position, squared differences averaged
/// over positions and summed over stages.
class PerceptualDistance final : public ImageDistance {
 public:
  explicit PerceptualDistance(std::shared_ptr<const models::ConvClassifier<float>> net) : net_(std::move(net)) {}
  double operator()(const ImageArray<double>& a, const ImageArray<double>& b) const override;

 private:
  std::shared_ptr<const models::ConvClassifier<float>> net_;
};

}  // namespace ace::metrics
