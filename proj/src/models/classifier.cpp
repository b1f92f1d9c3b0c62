#include "ace/models/classifier.hpp"

#include "ace/core/errors.hpp"

#include <cmath>
#include <variant>

namespace ace::models {

template <typename Scalar>
std::vector<std::string> Classifier<Scalar>::label_names() const {
  std::vector<std::string> names;
  for (int c = 0; c < num_classes(); ++c) names.push_back("class" + std::to_string(c));
  return names;
}

template <typename Scalar>
Vector<Scalar> softmax(const Vector<Scalar>& logits) {
  const Scalar top = logits.maxCoeff();
  Vector<Scalar> e = (logits.array() - top).exp().matrix();
  return e / e.sum();
}

template <typename Scalar>
Vector<double> predict_probs(const Classifier<Scalar>& classifier, const ImageArray<Scalar>& image) {
  require(has_geometry(image, classifier.geometry()),
          "predict_probs: image does not match classifier geometry " + to_string(classifier.geometry()));
  return softmax<double>(classifier.logits(image).template cast<double>());
}

template <typename Scalar>
Matrix<double> predict_probs(const Classifier<Scalar>& classifier, const std::vector<ImageArray<Scalar>>& images) {
  Matrix<double> probs(static_cast<Eigen::Index>(images.size()), classifier.num_classes());
  for (std::size_t i = 0; i < images.size(); ++i)
    probs.row(static_cast<Eigen::Index>(i)) = predict_probs(classifier, images[i]).transpose();
  return probs;
}

template <typename Scalar>
Label predict_label(const Classifier<Scalar>& classifier, const ImageArray<Scalar>& image) {
  Eigen::Index best = 0;
  predict_probs(classifier, image).maxCoeff(&best);
  return static_cast<Label>(best);
}

ConvNetConfig ConvNetConfig::from_json(const nlohmann::json& j) {
  ConvNetConfig c;
  c.width1 = j.value("width1", c.width1);
  c.width2 = j.value("width2", c.width2);
  return c;
}

template <typename Scalar>
ConvClassifier<Scalar>::ConvClassifier(const Geometry& geometry, int num_classes, const ConvNetConfig& config,
                                       Rng& rng)
    : geometry_(geometry), config_(config) {
  require(num_classes >= 2, "classifier needs at least 2 classes");
  require(geometry.height % 4 == 0 && geometry.width % 4 == 0 && geometry.height >= 4 && geometry.width >= 4,
          "conv classifier needs height and width divisible by 4");
  const double gain = std::sqrt(2.0);
  conv1_ = nn::Conv2d<Scalar>::init(geometry.channels, config.width1, 3, 1, rng, gain);
  conv2_ = nn::Conv2d<Scalar>::init(config.width1, config.width2, 3, 1, rng, gain);
  conv3_ = nn::Conv2d<Scalar>::init(config.width2, config.width2, 3, 1, rng, gain);
  head_ = nn::Linear<Scalar>::init(config.width2, num_classes, rng, 1.0);
}

template <typename Scalar>
std::vector<std::string> ConvClassifier<Scalar>::label_names() const {
  if (static_cast<int>(names_.size()) == num_classes()) return names_;
  return Classifier<Scalar>::label_names();
}

template <typename Scalar>
ConvClassifier<Scalar> ConvClassifier<Scalar>::zeros_like() const {
  ConvClassifier z = *this;
  z.for_each_parameter([](const std::string&, Matrix<Scalar>& m) { m.setZero(); });
  return z;
}

template <typename Scalar>
Vector<Scalar> ConvClassifier<Scalar>::forward(const ImageArray<Scalar>& x, Tape* tape) const {
  require(has_geometry(x, geometry_), "classifier input does not match geometry " + to_string(geometry_));
  Tape local;
  Tape& s = tape ? *tape : local;
  s.e0 = {geometry_.height, geometry_.width};
  s.e1 = {s.e0.height / 2, s.e0.width / 2};
  s.e2 = {s.e1.height / 2, s.e1.width / 2};
  const Matrix<Scalar> centered = x.matrix().colwise() - x.matrix().rowwise().mean();
  s.h1 = conv1_.forward(centered, s.e0, &s.col1);
  s.p1 = nn::avg_pool2(nn::silu(s.h1), s.e0);
  s.h2 = conv2_.forward(s.p1, s.e1, &s.col2);
  s.p2 = nn::avg_pool2(nn::silu(s.h2), s.e1);
  s.h3 = conv3_.forward(s.p2, s.e2, &s.col3);
  s.feature = nn::silu(s.h3).rowwise().mean();
  return head_.forward(s.feature).col(0);
}

template <typename Scalar>
ImageArray<Scalar> ConvClassifier<Scalar>::backward_features(const Tape& s, const Vector<Scalar>& grad_feature,
                                                             ConvClassifier* grad) const {
  auto g = [&](auto member) { return grad ? &(grad->*member) : nullptr; };
  const auto pixels3 = static_cast<Scalar>(s.e2.pixels());
  Matrix<Scalar> d_a3 = (grad_feature / pixels3).replicate(1, s.e2.pixels());
  const Matrix<Scalar> d_p2 = conv3_.backward(nn::silu_backward(s.h3, d_a3), s.col3, s.e2, g(&ConvClassifier::conv3_));
  const Matrix<Scalar> d_a2 = nn::avg_pool2_backward(d_p2, s.e1);
  const Matrix<Scalar> d_p1 = conv2_.backward(nn::silu_backward(s.h2, d_a2), s.col2, s.e1, g(&ConvClassifier::conv2_));
  const Matrix<Scalar> d_a1 = nn::avg_pool2_backward(d_p1, s.e0);
  const Matrix<Scalar> d_c = conv1_.backward(nn::silu_backward(s.h1, d_a1), s.col1, s.e0, g(&ConvClassifier::conv1_));
  return (d_c.colwise() - d_c.rowwise().mean()).array();
}

template <typename Scalar>
ImageArray<Scalar> ConvClassifier<Scalar>::backward(const Tape& s, const Vector<Scalar>& grad_logits,
                                                    ConvClassifier* grad) const {
  const Matrix<Scalar> d_feature = head_.backward(grad_logits, s.feature, grad ? &grad->head_ : nullptr);
  return backward_features(s, d_feature.col(0), grad);
}

template <typename Scalar>
Vector<Scalar> ConvClassifier<Scalar>::logits(const ImageArray<Scalar>& x, std::any* tape) const {
  if (!tape) return forward(x, nullptr);
  *tape = Tape{};
  return forward(x, std::any_cast<Tape>(tape));
}

template <typename Scalar>
ImageArray<Scalar> ConvClassifier<Scalar>::backward_input(const std::any& tape, const Vector<Scalar>& grad_logits) const {
  const auto* s = std::any_cast<Tape>(&tape);
  if (!s) throw RuntimeFailure("classifier tape missing or of the wrong type");
  return backward(*s, grad_logits, nullptr);
}

template <typename Scalar>
Vector<Scalar> ConvClassifier<Scalar>::features(const ImageArray<Scalar>& x) const {
  Tape s;
  forward(x, &s);
  return s.feature.col(0);
}

template <typename Scalar>
std::vector<Matrix<Scalar>> ConvClassifier<Scalar>::stage_activations(const ImageArray<Scalar>& x) const {
  Tape s;
  forward(x, &s);
  return {nn::silu(s.h1), nn::silu(s.h2), nn::silu(s.h3)};
}

template <typename Scalar>
LinearClassifier<Scalar>::LinearClassifier(const Geometry& geometry, Matrix<Scalar> weight, Vector<Scalar> bias)
    : geometry_(geometry), weight_(std::move(weight)), bias_(std::move(bias)) {
  require(weight_.cols() == geometry.size(), "linear classifier weight does not match geometry");
  require(weight_.rows() >= 2 && bias_.size() == weight_.rows(), "linear classifier needs >= 2 classes and matching bias");
}

template <typename Scalar>
Vector<Scalar> LinearClassifier<Scalar>::logits(const ImageArray<Scalar>& x, std::any* tape) const {
  require(has_geometry(x, geometry_), "classifier input does not match geometry " + to_string(geometry_));
  if (tape) *tape = std::monostate{};
  const Eigen::Map<const Vector<Scalar>> flat(x.data(), x.size());
  return weight_ * flat + bias_;
}

template <typename Scalar>
ImageArray<Scalar> LinearClassifier<Scalar>::backward_input(const std::any&, const Vector<Scalar>& grad_logits) const {
  const Vector<Scalar> flat = weight_.transpose() * grad_logits;
  ImageArray<Scalar> out(geometry_.channels, geometry_.pixels());
  Eigen::Map<Vector<Scalar>>(out.data(), out.size()) = flat;
  return out;
}

template <typename Scalar>
void save_classifier(const std::filesystem::path& path, ConvClassifier<Scalar>& classifier, const std::string& kind) {
  nn::Checkpoint ckpt;
  ckpt.header["kind"] = kind;
  ckpt.header["geometry"] = nn::geometry_to_json(classifier.geometry());
  ckpt.header["architecture"] = {{"name", "convnet"},
                                 {"config", classifier.config().to_json()},
                                 {"num_classes", classifier.num_classes()}};
  ckpt.header["label_names"] = classifier.label_names();
  ckpt.header["metadata"] = classifier.metadata;
  nn::store_parameters<Scalar>(classifier, ckpt);
  nn::save_checkpoint(path, ckpt);
}

template <typename Scalar>
ConvClassifier<Scalar> classifier_from_checkpoint(const nn::Checkpoint& ckpt) {
  const auto& arch = ckpt.header.at("architecture");
  if (arch.value("name", std::string{}) != "convnet")
    throw RuntimeFailure("checkpoint kind '" + ckpt.kind() + "' does not hold a conv classifier");
  Rng rng(0);
  ConvClassifier<Scalar> model(nn::geometry_from_json(ckpt.header.at("geometry")), arch.at("num_classes").get<int>(),
                               ConvNetConfig::from_json(arch.at("config")), rng);
  nn::load_parameters<Scalar>(model, ckpt);
  if (ckpt.header.contains("label_names"))
    model.set_label_names(ckpt.header.at("label_names").get<std::vector<std::string>>());
  model.metadata = ckpt.header.value("metadata", nlohmann::json::object());
  return model;
}

template <typename Scalar>
ConvClassifier<Scalar> load_classifier(const std::filesystem::path& path) {
  return classifier_from_checkpoint<Scalar>(nn::load_checkpoint(path));
}

#define ACE_INSTANTIATE_CLASSIFIER(S)                                                                 \
  template class Classifier<S>;                                                                        \
  template class ConvClassifier<S>;                                                                    \
  template class LinearClassifier<S>;                                                                  \
  template Vector<S> softmax<S>(const Vector<S>&);                                                     \
  template Vector<double> predict_probs<S>(const Classifier<S>&, const ImageArray<S>&);                \
  template Matrix<double> predict_probs<S>(const Classifier<S>&, const std::vector<ImageArray<S>>&);   \
  template Label predict_label<S>(const Classifier<S>&, const ImageArray<S>&);                         \
  template void save_classifier<S>(const std::filesystem::path&, ConvClassifier<S>&, const std::string&); \
  template ConvClassifier<S> classifier_from_checkpoint<S>(const nn::Checkpoint&);                     \
  template ConvClassifier<S> load_classifier<S>(const std::filesystem::path&);

ACE_INSTANTIATE_CLASSIFIER(float)
ACE_INSTANTIATE_CLASSIFIER(double)

}  // namespace ace::models
