#include "ace/models/ssl.hpp"

#include "ace/core/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ace::models {

nlohmann::json SslTrainingConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"network", network.to_json()},
          {"predictor_hidden", predictor_hidden},
          {"max_shift", max_shift},
          {"seed", seed}};
}

SslTrainingConfig SslTrainingConfig::from_json(const nlohmann::json& j) {
  SslTrainingConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  if (j.contains("network")) c.network = ConvNetConfig::from_json(j.at("network"));
  c.predictor_hidden = j.value("predictor_hidden", c.predictor_hidden);
  c.max_shift = j.value("max_shift", c.max_shift);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::vector<std::string> SslTrainingConfig::validate() const {
  std::vector<std::string> problems;
  if (epochs < 1) problems.push_back("train_ssl.epochs must be >= 1");
  if (batch_size < 2) problems.push_back("train_ssl.batch_size must be >= 2");
  if (!(learning_rate > 0.0)) problems.push_back("train_ssl.learning_rate must be > 0");
  if (predictor_hidden < 1) problems.push_back("train_ssl.predictor_hidden must be >= 1");
  if (max_shift < 0) problems.push_back("train_ssl.max_shift must be >= 0");
  return problems;
}

ImageArray<float> augment(const ImageArray<float>& x, const Geometry& g, int max_shift, Rng& rng) {
  const int dx = max_shift > 0 ? rng.uniform_int(-max_shift, max_shift) : 0;
  const int dy = max_shift > 0 ? rng.uniform_int(-max_shift, max_shift) : 0;
  const bool flip = rng.uniform() < 0.5;
  ImageArray<float> out(g.channels, g.pixels());
  for (int c = 0; c < g.channels; ++c) {
    const auto gain = static_cast<float>(rng.uniform(0.8, 1.2));
    const auto offset = static_cast<float>(rng.uniform(-0.2, 0.2));
    for (int y = 0; y < g.height; ++y)
      for (int xx = 0; xx < g.width; ++xx) {
        const int sx0 = std::clamp(xx - dx, 0, g.width - 1);
        const int sx = flip ? g.width - 1 - sx0 : sx0;
        const int sy = std::clamp(y - dy, 0, g.height - 1);
        out(c, y * g.width + xx) = gain * x(c, sy * g.width + sx) + offset;
      }
  }
  out += 0.03f * rng.normal<float>(g);
  return out.cwiseMax(-1.0f).cwiseMin(1.0f);
}

namespace {

struct Predictor {
  nn::Linear<float> l1, l2;

  template <typename F>
  void for_each_parameter(F&& f) {
    l1.for_each("pred1", f);
    l2.for_each("pred2", f);
  }
};

/// d(-cos(p, z))/dp with z held fixed.
Vector<float> neg_cos_grad(const Vector<float>& p, const Vector<float>& z, double* value) {
  const float np = std::max(p.norm(), 1e-8f), nz = std::max(z.norm(), 1e-8f);
  const float cosv = p.dot(z) / (np * nz);
  *value = -cosv;
  return -(z / (np * nz) - cosv * p / (np * np));
}

}  // namespace

ConvClassifier<float> train_ssl_encoder(const Dataset& dataset, const SslTrainingConfig& config, SslTrainingLog* log,
                                        const std::function<void(int, double)>& progress) {
  if (auto problems = config.validate(); !problems.empty()) throw ConfigError(problems);
  const auto it = dataset.splits.find("train");
  require(it != dataset.splits.end() && it->second.size() >= 2, "train_ssl_encoder: training split needs >= 2 images");
  const Geometry g = dataset.descriptor.geometry;
  const int dim = config.network.width2;

  Rng rng(config.seed);
  ConvClassifier<float> net(g, 2, config.network, rng);
  Predictor pred{nn::Linear<float>::init(dim, config.predictor_hidden, rng, std::sqrt(2.0)),
                 nn::Linear<float>::init(config.predictor_hidden, dim, rng, 1.0)};
  ConvClassifier<float> net_grad = net.zeros_like();
  Predictor pred_grad{pred.l1.zeros_like(), pred.l2.zeros_like()};
  auto params = nn::parameter_list<float>(net);
  auto grads = nn::parameter_list<float>(net_grad);
  for (auto* p : nn::parameter_list<float>(pred)) params.push_back(p);
  for (auto* p : nn::parameter_list<float>(pred_grad)) grads.push_back(p);
  nn::Adam<float> adam(config.learning_rate);

  SslTrainingLog local;
  SslTrainingLog& out = log ? *log : local;
  out.loss.clear();

  std::vector<std::size_t> order(it->second.begin(), it->second.end());
  const int steps_per_epoch = static_cast<int>((order.size() + config.batch_size - 1) / config.batch_size);
  const int total_steps = steps_per_epoch * config.epochs;
  int step = 0;
  ConvClassifier<float>::Tape tape[2];
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size), ++step) {
      adam.set_learning_rate(config.learning_rate * 0.5 *
                             (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total_steps)));
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const auto scale = 1.0f / (2.0f * static_cast<float>(end - start));
      for (auto* gm : grads) gm->setZero();
      double loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& img = dataset.samples[order[k]].image;
        Vector<float> z[2], h[2], p[2];
        for (int v = 0; v < 2; ++v) {
          net.forward(augment(img, g, config.max_shift, rng), &tape[v]);
          z[v] = tape[v].feature.col(0);
          h[v] = pred.l1.forward(z[v]).col(0);
          p[v] = pred.l2.forward(nn::silu<float>(h[v])).col(0);
        }
        for (int v = 0; v < 2; ++v) {
          double value = 0.0;
          const Vector<float> dp = scale * neg_cos_grad(p[v], z[1 - v], &value);
          loss += value / 2.0;
          const Matrix<float> dh_act = pred.l2.backward(dp, nn::silu<float>(h[v]), &pred_grad.l2);
          const Matrix<float> dz = pred.l1.backward(nn::silu_backward<float>(h[v], dh_act), z[v], &pred_grad.l1);
          net.backward_features(tape[v], dz.col(0), &net_grad);
        }
      }
      loss /= static_cast<double>(end - start);
      if (!std::isfinite(loss)) throw RuntimeFailure("train_ssl_encoder: loss became non-finite");
      adam.step(params, grads);
      out.loss.push_back(loss);
      if (progress) progress(step, loss);
    }
  }

  const std::string heldout = dataset.splits.count("val") && !dataset.split("val").empty() ? "val" : "train";
  const auto images = dataset.images(heldout);
  Matrix<double> feats(static_cast<Eigen::Index>(images.size()), dim);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Vector<double> f = net.features(images[i]).cast<double>();
    feats.row(static_cast<Eigen::Index>(i)) = (f / std::max(f.norm(), 1e-12)).transpose();
  }
  const Matrix<double> centered = feats.rowwise() - feats.colwise().mean();
  out.feature_spread = (centered.colwise().squaredNorm() / std::max<double>(1.0, feats.rows() - 1.0)).cwiseSqrt().mean();
  net.metadata = {{"training", config.to_json()},
                  {"objective", "siamese-stop-gradient"},
                  {"dataset", dataset.descriptor.name},
                  {"final_loss", out.loss.back()},
                  {"feature_spread", out.feature_spread}};
  return net;
}

}  // namespace ace::models
