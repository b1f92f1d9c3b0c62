#include "ace/diffusion/unet.hpp"

#include "ace/core/errors.hpp"

namespace ace::diffusion {

nlohmann::json UNetConfig::to_json() const {
  return {{"base_channels", base_channels},
          {"mid_channels", mid_channels},
          {"embed_dim", embed_dim},
          {"embed_hidden", embed_hidden}};
}

UNetConfig UNetConfig::from_json(const nlohmann::json& j) {
  UNetConfig c;
  c.base_channels = j.value("base_channels", c.base_channels);
  c.mid_channels = j.value("mid_channels", c.mid_channels);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.embed_hidden = j.value("embed_hidden", c.embed_hidden);
  return c;
}

template <typename Scalar>
UNetLite<Scalar>::UNetLite(const Geometry& geometry, const UNetConfig& config, Rng& rng)
    : geometry_(geometry), config_(config) {
  require(geometry.channels >= 1 && geometry.height >= 2 && geometry.width >= 2, "denoiser geometry too small");
  require(geometry.height % 2 == 0 && geometry.width % 2 == 0, "denoiser needs even height and width");
  require(config.embed_dim % 2 == 0 && config.embed_dim >= 2, "embed_dim must be even");
  const int c0 = config.base_channels, c1 = config.mid_channels;
  const double gain = std::sqrt(2.0);
  embed1_ = nn::Linear<Scalar>::init(config.embed_dim, config.embed_hidden, rng, gain);
  embed2_ = nn::Linear<Scalar>::init(config.embed_hidden, c0 + 2 * c1, rng, 0.5);
  conv_in_ = nn::Conv2d<Scalar>::init(geometry.channels, c0, 3, 1, rng, gain);
  conv_down_ = nn::Conv2d<Scalar>::init(c0, c1, 3, 2, rng, gain);
  conv_mid1_ = nn::Conv2d<Scalar>::init(c1, c1, 3, 1, rng, gain);
  conv_mid2_ = nn::Conv2d<Scalar>::init(c1, c1, 3, 1, rng, 0.5);
  conv_up_ = nn::Conv2d<Scalar>::init(c1, c0, 1, 1, rng, 1.0);
  conv_full_ = nn::Conv2d<Scalar>::init(c0, c0, 3, 1, rng, gain);
  conv_out_ = nn::Conv2d<Scalar>::init(c0, geometry.channels, 3, 1, rng, 0.1);
}

template <typename Scalar>
UNetLite<Scalar> UNetLite<Scalar>::zeros_like() const {
  UNetLite z = *this;
  z.for_each_parameter([](const std::string&, Matrix<Scalar>& m) { m.setZero(); });
  return z;
}

template <typename Scalar>
Matrix<Scalar> UNetLite<Scalar>::forward(const Matrix<Scalar>& x, double t, Tape* tape) const {
  require(x.rows() == geometry_.channels && x.cols() == geometry_.pixels(),
          "denoiser input does not match geometry " + to_string(geometry_));
  const int c0 = config_.base_channels, c1 = config_.mid_channels;
  const Extent full{geometry_.height, geometry_.width};
  const Extent half = nn::conv_extent(full, 3, 2);

  Tape local;
  Tape& s = tape ? *tape : local;
  s.full = full;
  s.half = half;

  s.emb = nn::timestep_embedding<Scalar>(t, config_.embed_dim);
  s.e1 = embed1_.forward(s.emb);
  const Matrix<Scalar> bias = embed2_.forward(nn::silu(s.e1));

  s.h0 = conv_in_.forward(x, full, &s.col_in);
  s.h0.colwise() += bias.col(0).segment(0, c0);
  s.a0 = nn::silu(s.h0);

  s.h1 = conv_down_.forward(s.a0, full, &s.col_down);
  s.h1.colwise() += bias.col(0).segment(c0, c1);
  s.a1 = nn::silu(s.h1);

  s.h2 = conv_mid1_.forward(s.a1, half, &s.col_mid1);
  s.h2.colwise() += bias.col(0).segment(c0 + c1, c1);
  s.a2 = nn::silu(s.h2);

  s.r = s.a1 + conv_mid2_.forward(s.a2, half, &s.col_mid2);
  s.a3 = nn::silu(s.r);

  const Matrix<Scalar> up = nn::upsample2(conv_up_.forward(s.a3, half, &s.col_up), half);
  const Matrix<Scalar> merged = s.a0 + up;
  s.h4 = conv_full_.forward(merged, full, &s.col_full);
  s.a4 = nn::silu(s.h4);
  return conv_out_.forward(s.a4, full, &s.col_out);
}

template <typename Scalar>
Matrix<Scalar> UNetLite<Scalar>::backward(const Tape& s, const Matrix<Scalar>& grad_out, UNetLite* grad) const {
  const int c0 = config_.base_channels, c1 = config_.mid_channels;
  auto g = [&](auto member) { return grad ? &(grad->*member) : nullptr; };

  Matrix<Scalar> d_a4 = conv_out_.backward(grad_out, s.col_out, s.full, g(&UNetLite::conv_out_));
  Matrix<Scalar> d_h4 = nn::silu_backward(s.h4, d_a4);
  Matrix<Scalar> d_merged = conv_full_.backward(d_h4, s.col_full, s.full, g(&UNetLite::conv_full_));

  Matrix<Scalar> d_a0 = d_merged;
  const Matrix<Scalar> d_up = nn::upsample2_backward(d_merged, s.half);
  Matrix<Scalar> d_a3 = conv_up_.backward(d_up, s.col_up, s.half, g(&UNetLite::conv_up_));
  const Matrix<Scalar> d_r = nn::silu_backward(s.r, d_a3);

  Matrix<Scalar> d_a1 = d_r;
  const Matrix<Scalar> d_a2 = conv_mid2_.backward(d_r, s.col_mid2, s.half, g(&UNetLite::conv_mid2_));
  const Matrix<Scalar> d_h2 = nn::silu_backward(s.h2, d_a2);
  d_a1 += conv_mid1_.backward(d_h2, s.col_mid1, s.half, g(&UNetLite::conv_mid1_));
  const Matrix<Scalar> d_h1 = nn::silu_backward(s.h1, d_a1);
  d_a0 += conv_down_.backward(d_h1, s.col_down, s.full, g(&UNetLite::conv_down_));
  const Matrix<Scalar> d_h0 = nn::silu_backward(s.h0, d_a0);
  Matrix<Scalar> d_x = conv_in_.backward(d_h0, s.col_in, s.full, g(&UNetLite::conv_in_));

  if (grad) {
    Matrix<Scalar> d_bias(c0 + 2 * c1, 1);
    d_bias.col(0).segment(0, c0) = d_h0.rowwise().sum();
    d_bias.col(0).segment(c0, c1) = d_h1.rowwise().sum();
    d_bias.col(0).segment(c0 + c1, c1) = d_h2.rowwise().sum();
    const Matrix<Scalar> e1_act = nn::silu(s.e1);
    const Matrix<Scalar> d_e1_act = embed2_.backward(d_bias, e1_act, &grad->embed2_);
    embed1_.backward(nn::silu_backward(s.e1, d_e1_act), s.emb, &grad->embed1_);
  }
  return d_x;
}

template class UNetLite<float>;
template class UNetLite<double>;

}  // namespace ace::diffusion
