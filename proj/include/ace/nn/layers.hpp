#pragma once

#include "ace/core/random.hpp"
#include "ace/core/types.hpp"

#include <string>
#include <vector>

/// Minimal differentiable building blocks. Feature maps are `channels x pixels`
/// row-major matrices; every layer exposes a forward pass and a backward pass
/// that returns the input gradient and optionally accumulates parameter
/// gradients into a same-shaped layer.
namespace ace::nn {

template <typename Scalar>
using FeatureMap = Matrix<Scalar>;

Extent conv_extent(Extent in, int kernel, int stride);

template <typename Scalar>
Matrix<Scalar> im2col(const Matrix<Scalar>& in, Extent extent, int kernel, int stride);

template <typename Scalar>
Matrix<Scalar> col2im(const Matrix<Scalar>& col, int channels, Extent extent, int kernel, int stride);

template <typename Scalar>
struct Conv2d {
  Matrix<Scalar> weight;  // out x (in * kernel * kernel)
  Matrix<Scalar> bias;    // out x 1
  int kernel = 3;
  int stride = 1;

  int in_channels() const { return static_cast<int>(weight.cols()) / (kernel * kernel); }
  int out_channels() const { return static_cast<int>(weight.rows()); }

  static Conv2d init(int in, int out, int kernel, int stride, Rng& rng, double gain = 1.0);
  Conv2d zeros_like() const;

  /// `col` receives the unfolded input (needed by backward).
  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& in, Extent extent, Matrix<Scalar>* col) const;

  /// Returns d(loss)/d(input). Parameter gradients accumulate into `grad` when non-null.
  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& grad_out, const Matrix<Scalar>& col, Extent in_extent,
                              Conv2d* grad) const;

  template <typename F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

template <typename Scalar>
struct Linear {
  Matrix<Scalar> weight;  // out x in
  Matrix<Scalar> bias;    // out x 1

  static Linear init(int in, int out, Rng& rng, double gain = 1.0);
  Linear zeros_like() const;

  Matrix<Scalar> forward(const Matrix<Scalar>& in) const;
  Matrix<Scalar> backward(const Matrix<Scalar>& grad_out, const Matrix<Scalar>& in, Linear* grad) const;

  template <typename F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

template <typename Scalar>
Matrix<Scalar> silu(const Matrix<Scalar>& x);

/// Gradient of silu evaluated at the pre-activation `x`.
template <typename Scalar>
Matrix<Scalar> silu_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& grad_out);

template <typename Scalar>
FeatureMap<Scalar> avg_pool2(const FeatureMap<Scalar>& in, Extent extent);

template <typename Scalar>
FeatureMap<Scalar> avg_pool2_backward(const FeatureMap<Scalar>& grad_out, Extent in_extent);

template <typename Scalar>
FeatureMap<Scalar> upsample2(const FeatureMap<Scalar>& in, Extent extent);

template <typename Scalar>
FeatureMap<Scalar> upsample2_backward(const FeatureMap<Scalar>& grad_out, Extent in_extent);

/// Sinusoidal embedding of a (possibly fractional) timestep.
template <typename Scalar>
Matrix<Scalar> timestep_embedding(double t, int dim);

/// Collects raw pointers to every parameter matrix of a model, in visiting order.
template <typename Scalar, typename Model>
std::vector<Matrix<Scalar>*> parameter_list(Model& model) {
  std::vector<Matrix<Scalar>*> out;
  model.for_each_parameter([&](const std::string&, Matrix<Scalar>& m) { out.push_back(&m); });
  return out;
}

template <typename Scalar, typename Model>
void zero_parameters(Model& model) {
  model.for_each_parameter([](const std::string&, Matrix<Scalar>& m) { m.setZero(); });
}

template <typename Scalar, typename Model>
std::size_t parameter_count(Model& model) {
  std::size_t n = 0;
  model.for_each_parameter([&](const std::string&, Matrix<Scalar>& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

/// Adam with optional decoupled weight decay.
template <typename Scalar>
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8,
                double weight_decay = 0.0)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon), weight_decay_(weight_decay) {}

  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }

  void step(const std::vector<Matrix<Scalar>*>& params, const std::vector<Matrix<Scalar>*>& grads);

 private:
  double lr_, beta1_, beta2_, eps_, weight_decay_;
  long steps_ = 0;
  std::vector<Matrix<Scalar>> m_, v_;
};

/// Exponential moving average of parameters.
template <typename Scalar>
void ema_update(const std::vector<Matrix<Scalar>*>& ema, const std::vector<Matrix<Scalar>*>& current, double decay);

}  // namespace ace::nn
