#pragma once

// Small models and helpers shared by the unit tests.

#include "ace/core/random.hpp"
#include "ace/diffusion/model.hpp"
#include "ace/diffusion/schedule.hpp"
#include "ace/models/classifier.hpp"
#include "ace/models/dataset.hpp"

#include <doctest.h>

#include <any>
#include <filesystem>
#include <string>

#include <unistd.h>

namespace toy {

using namespace ace;

/// mu = x, sigma = s: the reverse chain only adds noise.
template <typename Scalar>
class PassthroughDenoiser final : public diffusion::Denoiser<Scalar> {
 public:
  explicit PassthroughDenoiser(Geometry g, double sigma = 0.0) : g_(g), sigma_(sigma) {}
  Geometry geometry() const override { return g_; }
  diffusion::DenoiserOutput<Scalar> predict(const ImageArray<Scalar>& x, int, const diffusion::RespacedSchedule&,
                                            std::any*) const override {
    return {x, ImageArray<Scalar>::Constant(x.rows(), x.cols(), static_cast<Scalar>(sigma_))};
  }
  ImageArray<Scalar> backward_mean(const std::any&, const ImageArray<Scalar>& g) const override { return g; }

 private:
  Geometry g_;
  double sigma_;
};

/// Denoiser returning fixed mu and sigma regardless of input.
template <typename Scalar>
class ConstantDenoiser final : public diffusion::Denoiser<Scalar> {
 public:
  ConstantDenoiser(Geometry g, ImageArray<Scalar> mu, ImageArray<Scalar> sigma)
      : g_(g), mu_(std::move(mu)), sigma_(std::move(sigma)) {}
  Geometry geometry() const override { return g_; }
  diffusion::DenoiserOutput<Scalar> predict(const ImageArray<Scalar>&, int, const diffusion::RespacedSchedule&,
                                            std::any*) const override {
    return {mu_, sigma_};
  }
  ImageArray<Scalar> backward_mean(const std::any&, const ImageArray<Scalar>& g) const override {
    return ImageArray<Scalar>::Zero(g.rows(), g.cols());
  }

 private:
  Geometry g_;
  ImageArray<Scalar> mu_, sigma_;
};

/// Classifier with fixed logits, ignoring its input.
template <typename Scalar>
class ConstantClassifier final : public models::Classifier<Scalar> {
 public:
  ConstantClassifier(Geometry g, Vector<Scalar> logits) : g_(g), logits_(std::move(logits)) {}
  Geometry geometry() const override { return g_; }
  int num_classes() const override { return static_cast<int>(logits_.size()); }
  Vector<Scalar> logits(const ImageArray<Scalar>&, std::any*) const override { return logits_; }
  ImageArray<Scalar> backward_input(const std::any&, const Vector<Scalar>&) const override {
    return zero_image<Scalar>(g_);
  }

 private:
  Geometry g_;
  Vector<Scalar> logits_;
};

template <typename Scalar>
diffusion::DiffusionModel<Scalar> random_ddpm(const Geometry& g, std::uint64_t seed, int steps = 1000,
                                              int base = 4, int mid = 8) {
  Rng rng(seed);
  diffusion::UNetConfig cfg;
  cfg.base_channels = base;
  cfg.mid_channels = mid;
  cfg.embed_dim = 8;
  cfg.embed_hidden = 8;
  return diffusion::DiffusionModel<Scalar>(diffusion::UNetLite<Scalar>(g, cfg, rng),
                                           diffusion::build_schedule(steps, "linear"));
}

template <typename Scalar>
models::ConvClassifier<Scalar> random_convnet(const Geometry& g, int classes, std::uint64_t seed, int w1 = 4,
                                               int w2 = 6) {
  Rng rng(seed);
  models::ConvNetConfig cfg;
  cfg.width1 = w1;
  cfg.width2 = w2;
  return models::ConvClassifier<Scalar>(g, classes, cfg, rng);
}

template <typename Scalar>
ImageArray<Scalar> random_image(const Geometry& g, Rng& rng, double scale = 0.5) {
  ImageArray<Scalar> x(g.channels, g.pixels());
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<Scalar>(rng.uniform(-scale, scale));
  return x;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ace-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline models::BuiltinSpec small_builtin(int size = 8) {
  models::BuiltinSpec s;
  s.train = 16;
  s.val = 4;
  s.test = 8;
  s.height = size;
  s.width = size;
  return s;
}

}  // namespace toy
