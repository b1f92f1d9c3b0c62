#include "ace/nn/layers.hpp"

#include "ace/core/errors.hpp"

#include <cmath>

namespace ace::nn {

Extent conv_extent(Extent in, int kernel, int stride) {
  const int pad = kernel / 2;
  return {(in.height + 2 * pad - kernel) / stride + 1, (in.width + 2 * pad - kernel) / stride + 1};
}

template <typename Scalar>
Matrix<Scalar> im2col(const Matrix<Scalar>& in, Extent e, int kernel, int stride) {
  const int channels = static_cast<int>(in.rows());
  const int pad = kernel / 2;
  const Extent o = conv_extent(e, kernel, stride);
  Matrix<Scalar> col = Matrix<Scalar>::Zero(channels * kernel * kernel, o.pixels());
  for (int c = 0; c < channels; ++c) {
    const Scalar* src = in.row(c).data();
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        Scalar* dst = col.row((c * kernel + ky) * kernel + kx).data();
        for (int oy = 0; oy < o.height; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= e.height) continue;
          for (int ox = 0; ox < o.width; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= e.width) continue;
            dst[oy * o.width + ox] = src[iy * e.width + ix];
          }
        }
      }
    }
  }
  return col;
}

template <typename Scalar>
Matrix<Scalar> col2im(const Matrix<Scalar>& col, int channels, Extent e, int kernel, int stride) {
  const int pad = kernel / 2;
  const Extent o = conv_extent(e, kernel, stride);
  Matrix<Scalar> out = Matrix<Scalar>::Zero(channels, e.pixels());
  for (int c = 0; c < channels; ++c) {
    Scalar* dst = out.row(c).data();
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const Scalar* src = col.row((c * kernel + ky) * kernel + kx).data();
        for (int oy = 0; oy < o.height; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= e.height) continue;
          for (int ox = 0; ox < o.width; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= e.width) continue;
            dst[iy * e.width + ix] += src[oy * o.width + ox];
          }
        }
      }
    }
  }
  return out;
}

namespace {

template <typename Scalar>
Matrix<Scalar> uniform_matrix(int rows, int cols, double bound, Rng& rng) {
  Matrix<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
  return m;
}

}  // namespace

template <typename Scalar>
Conv2d<Scalar> Conv2d<Scalar>::init(int in, int out, int kernel, int stride, Rng& rng, double gain) {
  Conv2d layer;
  layer.kernel = kernel;
  layer.stride = stride;
  const int fan_in = in * kernel * kernel;
  layer.weight = uniform_matrix<Scalar>(out, fan_in, gain * std::sqrt(3.0 / fan_in), rng);
  layer.bias = Matrix<Scalar>::Zero(out, 1);
  return layer;
}

template <typename Scalar>
Conv2d<Scalar> Conv2d<Scalar>::zeros_like() const {
  Conv2d z = *this;
  z.weight.setZero();
  z.bias.setZero();
  return z;
}

template <typename Scalar>
FeatureMap<Scalar> Conv2d<Scalar>::forward(const FeatureMap<Scalar>& in, Extent extent, Matrix<Scalar>* col) const {
  if (in.rows() != in_channels() || in.cols() != extent.pixels())
    throw ValidationError("conv2d input has " + std::to_string(in.rows()) + " channels, expected " +
                          std::to_string(in_channels()));
  FeatureMap<Scalar> out;
  if (kernel == 1 && stride == 1) {
    out.noalias() = weight * in;
    if (col) *col = in;
  } else {
    Matrix<Scalar> unfolded = im2col(in, extent, kernel, stride);
    out.noalias() = weight * unfolded;
    if (col) *col = std::move(unfolded);
  }
  out.colwise() += bias.col(0);
  return out;
}

template <typename Scalar>
FeatureMap<Scalar> Conv2d<Scalar>::backward(const FeatureMap<Scalar>& grad_out, const Matrix<Scalar>& col,
                                            Extent in_extent, Conv2d* grad) const {
  if (grad) {
    grad->weight.noalias() += grad_out * col.transpose();
    grad->bias.col(0) += grad_out.rowwise().sum();
  }
  Matrix<Scalar> grad_col;
  grad_col.noalias() = weight.transpose() * grad_out;
  if (kernel == 1 && stride == 1) return grad_col;
  return col2im(grad_col, in_channels(), in_extent, kernel, stride);
}

template <typename Scalar>
Linear<Scalar> Linear<Scalar>::init(int in, int out, Rng& rng, double gain) {
  Linear layer;
  layer.weight = uniform_matrix<Scalar>(out, in, gain * std::sqrt(3.0 / in), rng);
  layer.bias = Matrix<Scalar>::Zero(out, 1);
  return layer;
}

template <typename Scalar>
Linear<Scalar> Linear<Scalar>::zeros_like() const {
  Linear z = *this;
  z.weight.setZero();
  z.bias.setZero();
  return z;
}

template <typename Scalar>
Matrix<Scalar> Linear<Scalar>::forward(const Matrix<Scalar>& in) const {
  if (in.rows() != weight.cols())
    throw ValidationError("linear input has " + std::to_string(in.rows()) + " features, expected " +
                          std::to_string(weight.cols()));
  Matrix<Scalar> out = weight * in;
  out.colwise() += bias.col(0);
  return out;
}

template <typename Scalar>
Matrix<Scalar> Linear<Scalar>::backward(const Matrix<Scalar>& grad_out, const Matrix<Scalar>& in, Linear* grad) const {
  if (grad) {
    grad->weight.noalias() += grad_out * in.transpose();
    grad->bias.col(0) += grad_out.rowwise().sum();
  }
  return weight.transpose() * grad_out;
}

template <typename Scalar>
Matrix<Scalar> silu(const Matrix<Scalar>& x) {
  return x.unaryExpr([](Scalar v) { return v / (Scalar(1) + std::exp(-v)); });
}

template <typename Scalar>
Matrix<Scalar> silu_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& grad_out) {
  Matrix<Scalar> d = x.unaryExpr([](Scalar v) {
    const Scalar s = Scalar(1) / (Scalar(1) + std::exp(-v));
    return s * (Scalar(1) + v * (Scalar(1) - s));
  });
  return d.cwiseProduct(grad_out);
}

template <typename Scalar>
FeatureMap<Scalar> avg_pool2(const FeatureMap<Scalar>& in, Extent e) {
  const Extent o{e.height / 2, e.width / 2};
  FeatureMap<Scalar> out(in.rows(), o.pixels());
  for (Eigen::Index c = 0; c < in.rows(); ++c)
    for (int y = 0; y < o.height; ++y)
      for (int x = 0; x < o.width; ++x) {
        const int p = 2 * y * e.width + 2 * x;
        out(c, y * o.width + x) =
            Scalar(0.25) * (in(c, p) + in(c, p + 1) + in(c, p + e.width) + in(c, p + e.width + 1));
      }
  return out;
}

template <typename Scalar>
FeatureMap<Scalar> avg_pool2_backward(const FeatureMap<Scalar>& grad_out, Extent e) {
  const Extent o{e.height / 2, e.width / 2};
  FeatureMap<Scalar> grad = FeatureMap<Scalar>::Zero(grad_out.rows(), e.pixels());
  for (Eigen::Index c = 0; c < grad_out.rows(); ++c)
    for (int y = 0; y < o.height; ++y)
      for (int x = 0; x < o.width; ++x) {
        const Scalar g = Scalar(0.25) * grad_out(c, y * o.width + x);
        const int p = 2 * y * e.width + 2 * x;
        grad(c, p) += g;
        grad(c, p + 1) += g;
        grad(c, p + e.width) += g;
        grad(c, p + e.width + 1) += g;
      }
  return grad;
}

template <typename Scalar>
FeatureMap<Scalar> upsample2(const FeatureMap<Scalar>& in, Extent e) {
  const Extent o{e.height * 2, e.width * 2};
  FeatureMap<Scalar> out(in.rows(), o.pixels());
  for (Eigen::Index c = 0; c < in.rows(); ++c)
    for (int y = 0; y < o.height; ++y)
      for (int x = 0; x < o.width; ++x) out(c, y * o.width + x) = in(c, (y / 2) * e.width + x / 2);
  return out;
}

template <typename Scalar>
FeatureMap<Scalar> upsample2_backward(const FeatureMap<Scalar>& grad_out, Extent e) {
  const Extent o{e.height * 2, e.width * 2};
  FeatureMap<Scalar> grad = FeatureMap<Scalar>::Zero(grad_out.rows(), e.pixels());
  for (Eigen::Index c = 0; c < grad_out.rows(); ++c)
    for (int y = 0; y < o.height; ++y)
      for (int x = 0; x < o.width; ++x) grad(c, (y / 2) * e.width + x / 2) += grad_out(c, y * o.width + x);
  return grad;
}

template <typename Scalar>
Matrix<Scalar> timestep_embedding(double t, int dim) {
  const int half = dim / 2;
  Matrix<Scalar> emb = Matrix<Scalar>::Zero(dim, 1);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    emb(i, 0) = static_cast<Scalar>(std::sin(t * freq));
    emb(half + i, 0) = static_cast<Scalar>(std::cos(t * freq));
  }
  return emb;
}

template <typename Scalar>
void Adam<Scalar>::step(const std::vector<Matrix<Scalar>*>& params, const std::vector<Matrix<Scalar>*>& grads) {
  if (params.size() != grads.size()) throw ValidationError("adam: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
    }
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  const auto b1 = static_cast<Scalar>(beta1_), b2 = static_cast<Scalar>(beta2_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = m_[i];
    auto& v = v_[i];
    const auto& g = *grads[i];
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    const auto step_size = static_cast<Scalar>(lr_ / c1);
    const auto denom_scale = static_cast<Scalar>(1.0 / std::sqrt(c2));
    const auto eps = static_cast<Scalar>(eps_);
    if (weight_decay_ > 0.0) *params[i] *= static_cast<Scalar>(1.0 - lr_ * weight_decay_);
    params[i]->array() -= step_size * m.array() / (v.array().sqrt() * denom_scale + eps);
  }
}

template <typename Scalar>
void ema_update(const std::vector<Matrix<Scalar>*>& ema, const std::vector<Matrix<Scalar>*>& current, double decay) {
  const auto d = static_cast<Scalar>(decay);
  for (std::size_t i = 0; i < ema.size(); ++i) *ema[i] = d * *ema[i] + (Scalar(1) - d) * *current[i];
}

#define ACE_INSTANTIATE_LAYERS(S)                                                              \
  template Matrix<S> im2col<S>(const Matrix<S>&, Extent, int, int);                            \
  template Matrix<S> col2im<S>(const Matrix<S>&, int, Extent, int, int);                       \
  template struct Conv2d<S>;                                                                   \
  template struct Linear<S>;                                                                   \
  template Matrix<S> silu<S>(const Matrix<S>&);                                                \
  template Matrix<S> silu_backward<S>(const Matrix<S>&, const Matrix<S>&);                     \
  template FeatureMap<S> avg_pool2<S>(const FeatureMap<S>&, Extent);                           \
  template FeatureMap<S> avg_pool2_backward<S>(const FeatureMap<S>&, Extent);                  \
  template FeatureMap<S> upsample2<S>(const FeatureMap<S>&, Extent);                           \
  template FeatureMap<S> upsample2_backward<S>(const FeatureMap<S>&, Extent);                  \
  template Matrix<S> timestep_embedding<S>(double, int);                                       \
  template class Adam<S>;                                                                      \
  template void ema_update<S>(const std::vector<Matrix<S>*>&, const std::vector<Matrix<S>*>&, double);

ACE_INSTANTIATE_LAYERS(float)
ACE_INSTANTIATE_LAYERS(double)

}  // namespace ace::nn
