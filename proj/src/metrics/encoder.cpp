#include "ace/metrics/encoder.hpp"

#include "ace/core/errors.hpp"

namespace ace::metrics {

Matrix<double> encode_all(const FeatureEncoder& encoder, const std::vector<ImageArray<double>>& images) {
  Matrix<double> out(static_cast<Eigen::Index>(images.size()), encoder.dim());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Vector<double> f = encoder.encode(images[i]);
    require(f.size() == encoder.dim(), "encoder '" + encoder.tag() + "' returned a feature of the wrong size");
    out.row(static_cast<Eigen::Index>(i)) = f.transpose();
  }
  return out;
}

Vector<double> IdentityEncoder::encode(const ImageArray<double>& image) const {
  require(image.size() == dim_, "identity encoder: image has " + std::to_string(image.size()) + " values, expected " +
                                    std::to_string(dim_));
  return Eigen::Map<const Vector<double>>(image.data(), image.size());
}

Vector<double> ConvFeatureEncoder::encode(const ImageArray<double>& image) const {
  return net_->features(image.cast<float>()).cast<double>();
}

namespace {

Matrix<double> unit_channels(const Matrix<float>& act) {
  Matrix<double> a = act.cast<double>();
  const Eigen::RowVectorXd norms = (a.colwise().norm().array() + 1e-10).matrix();
  for (Eigen::Index p = 0; p < a.cols(); ++p) a.col(p) /= norms(p);
  return a;
}

}  // namespace

double PerceptualDistance::operator()(const ImageArray<double>& a, const ImageArray<double>& b) const {
  const auto sa = net_->stage_activations(a.cast<float>());
  const auto sb = net_->stage_activations(b.cast<float>());
  double total = 0.0;
  for (std::size_t s = 0; s < sa.size(); ++s) {
    const Matrix<double> d = unit_channels(sa[s]) - unit_channels(sb[s]);
    total += d.colwise().squaredNorm().mean();
  }
  return total;
}

}  // namespace ace::metrics
