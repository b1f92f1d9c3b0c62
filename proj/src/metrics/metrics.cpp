#include "ace/metrics/metrics.hpp"

#include "ace/core/errors.hpp"
#include "ace/core/random.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <map>
#include <numeric>

namespace ace::metrics {

double flip_rate(const std::vector<bool>& flipped) {
  require(!flipped.empty(), "flip_rate of an empty result list");
  return static_cast<double>(std::count(flipped.begin(), flipped.end(), true)) / static_cast<double>(flipped.size());
}

GaussianStats fit_gaussian(const Matrix<double>& features) {
  require(features.rows() >= 2, "Gaussian fit needs at least 2 samples");
  GaussianStats s;
  s.count = static_cast<std::size_t>(features.rows());
  s.mean = features.colwise().mean().transpose();
  const Matrix<double> centered = features.rowwise() - s.mean.transpose();
  s.covariance = centered.transpose() * centered / static_cast<double>(features.rows() - 1);
  return s;
}

namespace {

Matrix<double> psd_sqrt(const Matrix<double>& m) {
  Eigen::SelfAdjointEigenSolver<Matrix<double>> eig(m);
  const Vector<double> roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  require(a.mean.size() == b.mean.size() && a.covariance.rows() == a.mean.size() &&
              b.covariance.rows() == b.mean.size(),
          "frechet_distance: dimension mismatch");
  const Matrix<double> root_a = psd_sqrt(a.covariance);
  const Matrix<double> inner = root_a * b.covariance * root_a;
  Eigen::SelfAdjointEigenSolver<Matrix<double>> eig(Matrix<double>((inner + inner.transpose()) / 2.0),
                                                    Eigen::EigenvaluesOnly);
  const double cross = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value = (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2.0 * cross;
  return std::max(value, 0.0);
}

double fid_features(const Matrix<double>& a, const Matrix<double>& b) {
  require(a.rows() >= 2 && b.rows() >= 2, "fid needs at least 2 images per set");
  require(a.cols() == b.cols(), "fid: feature dimensions differ");
  return frechet_distance(fit_gaussian(a), fit_gaussian(b));
}

double fid(const std::vector<ImageArray<double>>& set_a, const std::vector<ImageArray<double>>& set_b,
           const FeatureEncoder& encoder) {
  require(set_a.size() >= 2 && set_b.size() >= 2, "fid needs at least 2 images per set");
  return fid_features(encode_all(encoder, set_a), encode_all(encoder, set_b));
}

SfidResult sfid(const std::vector<ImageArray<double>>& dataset, const CounterfactualSource& generate,
                const FeatureEncoder& encoder, int num_splits, std::uint64_t seed) {
  require(dataset.size() >= 4, "sfid needs at least 4 images");
  require(num_splits >= 1, "sfid needs at least 1 split");
  const std::size_t n = dataset.size();
  std::map<std::size_t, Vector<double>> raw_features;
  std::map<std::size_t, std::optional<Vector<double>>> cf_features;
  auto raw = [&](std::size_t i) -> const Vector<double>& {
    auto it = raw_features.find(i);
    if (it == raw_features.end()) it = raw_features.emplace(i, encoder.encode(dataset[i])).first;
    return it->second;
  };
  auto counterfactual = [&](std::size_t i) -> const std::optional<Vector<double>>& {
    auto it = cf_features.find(i);
    if (it == cf_features.end()) {
      std::optional<Vector<double>> f;
      if (auto ce = generate(i)) f = encoder.encode(*ce);
      it = cf_features.emplace(i, std::move(f)).first;
    }
    return it->second;
  };

  SfidResult out;
  Rng rng(seed);
  std::vector<std::size_t> order(n);
  for (int s = 0; s < num_splits; ++s) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng.engine());
    const std::size_t half = n / 2;
    std::vector<Vector<double>> generated, reference;
    for (std::size_t k = 0; k < half; ++k)
      if (const auto& f = counterfactual(order[k])) generated.push_back(*f);
    for (std::size_t k = half; k < n; ++k) reference.push_back(raw(order[k]));
    require(generated.size() >= 2, "sfid split " + std::to_string(s) + " has fewer than 2 valid counterfactuals");
    Matrix<double> a(static_cast<Eigen::Index>(generated.size()), encoder.dim());
    Matrix<double> b(static_cast<Eigen::Index>(reference.size()), encoder.dim());
    for (std::size_t k = 0; k < generated.size(); ++k) a.row(static_cast<Eigen::Index>(k)) = generated[k].transpose();
    for (std::size_t k = 0; k < reference.size(); ++k) b.row(static_cast<Eigen::Index>(k)) = reference[k].transpose();
    out.per_split.push_back(fid_features(a, b));
  }
  out.mean = std::accumulate(out.per_split.begin(), out.per_split.end(), 0.0) / static_cast<double>(num_splits);
  for (const auto& [i, f] : cf_features) out.excluded += !f.has_value();
  return out;
}

SimilarityResult embedding_similarity(const std::vector<std::pair<ImageArray<double>, ImageArray<double>>>& pairs,
                                      const FeatureEncoder& encoder) {
  require(!pairs.empty(), "embedding_similarity of an empty pair list");
  SimilarityResult out;
  double total = 0.0;
  for (const auto& [x, x_ce] : pairs) {
    const Vector<double> a = encoder.encode(x), b = encoder.encode(x_ce);
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) {
      ++out.excluded;
      continue;
    }
    total += a.dot(b) / (na * nb);
    ++out.used;
  }
  require(out.used > 0, "embedding_similarity: every pair has a zero-norm embedding");
  out.mean = total / static_cast<double>(out.used);
  return out;
}

double cout(const ImageArray<double>& x, const ImageArray<double>& x_ce, const ProbabilityFn& probs, Label source,
            Label target, int num_steps) {
  require(source != target, "cout: source and target labels are equal");
  require(num_steps >= 1, "cout: num_steps must be >= 1");
  require(x.rows() == x_ce.rows() && x.cols() == x_ce.cols(), "cout: image shapes differ");
  const Eigen::Index pixels = x.cols();
  const Eigen::RowVectorXd magnitude = (x - x_ce).abs().colwise().sum().matrix();
  std::vector<Eigen::Index> rank(static_cast<std::size_t>(pixels));
  std::iota(rank.begin(), rank.end(), Eigen::Index{0});
  std::stable_sort(rank.begin(), rank.end(), [&](Eigen::Index a, Eigen::Index b) { return magnitude(a) > magnitude(b); });

  const Eigen::Index batch = pixels / num_steps;
  ImageArray<double> current = x;
  auto evaluate = [&](const ImageArray<double>& img, double& auc_source, double& auc_target) {
    const Vector<double> p = probs(img);
    require(source < p.size() && target < p.size(), "cout: label outside the classifier output");
    auc_source += p(source);
    auc_target += p(target);
  };
  double auc_source = 0.0, auc_target = 0.0;
  evaluate(current, auc_source, auc_target);
  Eigen::Index next = 0;
  for (int k = 1; k <= num_steps; ++k) {
    const Eigen::Index end = k == num_steps ? pixels : next + batch;
    for (; next < end; ++next) current.col(rank[static_cast<std::size_t>(next)]) = x_ce.col(rank[static_cast<std::size_t>(next)]);
    evaluate(current, auc_source, auc_target);
  }
  const double count = num_steps + 1.0;
  return std::clamp(auc_target / count - auc_source / count, -1.0, 1.0);
}

double diversity(const std::vector<ImageArray<double>>& images,
                 const std::function<double(const ImageArray<double>&, const ImageArray<double>&)>& distance) {
  require(images.size() >= 2, "diversity needs at least 2 counterfactuals");
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < images.size(); ++i)
    for (std::size_t j = i + 1; j < images.size(); ++j, ++pairs) total += distance(images[i], images[j]);
  return total / static_cast<double>(pairs);
}

}  // namespace ace::metrics
