#pragma once

#include "ace/core/random.hpp"
#include "ace/core/types.hpp"
#include "ace/nn/layers.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace ace::diffusion {

struct UNetConfig {
  int base_channels = 24;  // full-resolution width
  int mid_channels = 48;   // half-resolution width
  int embed_dim = 32;      // sinusoidal timestep embedding size
  int embed_hidden = 64;

  nlohmann::json to_json() const;
  static UNetConfig from_json(const nlohmann::json& j);
};

/// Two-level noise-prediction network: a full-resolution stem, one
/// stride-2 stage with a residual block, nearest upsampling with an additive
/// skip, and a full-resolution head. The timestep enters as per-channel biases.
template <typename Scalar>
class UNetLite {
 public:
  struct Tape {
    Extent full, half;
    Matrix<Scalar> emb, e1, col_in, h0, a0, col_down, h1, a1, col_mid1, h2, a2, col_mid2, r, a3, col_up, col_full, h4,
        a4, col_out;
  };

  UNetLite() = default;
  UNetLite(const Geometry& geometry, const UNetConfig& config, Rng& rng);

  const Geometry& geometry() const { return geometry_; }
  const UNetConfig& config() const { return config_; }

  /// Predicts the noise component of `x` at original timestep `t`.
  Matrix<Scalar> forward(const Matrix<Scalar>& x, double t, Tape* tape) const;

  /// Returns d(loss)/dx; accumulates parameter gradients into `grad` when non-null.
  Matrix<Scalar> backward(const Tape& tape, const Matrix<Scalar>& grad_out, UNetLite* grad) const;

  UNetLite zeros_like() const;

  template <typename F>
  void for_each_parameter(F&& f) {
    embed1_.for_each("embed1", f);
    embed2_.for_each("embed2", f);
    conv_in_.for_each("conv_in", f);
    conv_down_.for_each("conv_down", f);
    conv_mid1_.for_each("conv_mid1", f);
    conv_mid2_.for_each("conv_mid2", f);
    conv_up_.for_each("conv_up", f);
    conv_full_.for_each("conv_full", f);
    conv_out_.for_each("conv_out", f);
  }

 private:
  Geometry geometry_;
  UNetConfig config_;
  nn::Linear<Scalar> embed1_, embed2_;
  nn::Conv2d<Scalar> conv_in_, conv_down_, conv_mid1_, conv_mid2_, conv_up_, conv_full_, conv_out_;
};

}  // namespace ace::diffusion
