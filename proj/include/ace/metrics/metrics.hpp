#pragma once

#include "ace/core/types.hpp"
#include "ace/metrics/encoder.hpp"
#include "ace/models/classifier.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace ace::metrics {

/// Fraction of true entries. Throws ValidationError on an empty list.
double flip_rate(const std::vector<bool>& flipped);

struct GaussianStats {
  Vector<double> mean;
  Matrix<double> covariance;
  std::size_t count = 0;
};

/// Mean and unbiased (N - 1) covariance of the rows of `features`.
GaussianStats fit_gaussian(const Matrix<double>& features);

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)). The trace term is
/// computed as the sum of square roots of the eigenvalues of
/// S_a^(1/2) S_b S_a^(1/2), with negative eigenvalues clamped at 0.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

/// Encodes both sets (>= 2 images each) and compares their Gaussian fits.
double fid(const std::vector<ImageArray<double>>& set_a, const std::vector<ImageArray<double>>& set_b,
           const FeatureEncoder& encoder);

/// Gaussian fits of two feature matrices, compared.
double fid_features(const Matrix<double>& a, const Matrix<double>& b);

struct SfidResult {
  double mean = 0.0;
  std::vector<double> per_split;
  std::size_t excluded = 0;  // instances whose generator returned nothing
};

/// Returns the counterfactual of dataset[i], or nothing when it is not valid.
using CounterfactualSource = std::function<std::optional<ImageArray<double>>(std::size_t)>;

/// For each of num_splits seeded random halves (A, B): FID between the valid
/// counterfactuals of A and the raw images of B. Reports every split and
/// their mean. The generator is called at most once per instance.
SfidResult sfid(const std::vector<ImageArray<double>>& dataset, const CounterfactualSource& generate,
                const FeatureEncoder& encoder, int num_splits = 10, std::uint64_t seed = 0);

struct SimilarityResult {
  double mean = 0.0;
  std::size_t used = 0;
  std::size_t excluded = 0;  // pairs with a zero-norm embedding
};

/// Mean cosine similarity between encode(x) and encode(x_ce) over the pairs.
SimilarityResult embedding_similarity(const std::vector<std::pair<ImageArray<double>, ImageArray<double>>>& pairs,
                                      const FeatureEncoder& encoder);

/// Class probabilities of an image.
using ProbabilityFn = std::function<Vector<double>(const ImageArray<double>&)>;

template <typename Scalar>
ProbabilityFn probability_fn(const models::Classifier<Scalar>& classifier) {
  return [&classifier](const ImageArray<double>& x) {
    return models::predict_probs(classifier, ImageArray<Scalar>(x.template cast<Scalar>()));
  };
}

/// Pixels ranked by channel-summed |x - x_ce| (descending, ties by index) are
/// copied from x_ce into x in K batches as equal as possible (the remainder
/// goes to the last batch). Returns AUC_target - AUC_source with
/// AUC_c = mean over the K + 1 images of p_c.
double cout(const ImageArray<double>& x, const ImageArray<double>& x_ce, const ProbabilityFn& probs, Label source,
            Label target, int num_steps = 20);

/// Mean pairwise distance over all unordered pairs (>= 2 images).
double diversity(const std::vector<ImageArray<double>>& images,
                 const std::function<double(const ImageArray<double>&, const ImageArray<double>&)>& distance);

}  // namespace ace::metrics
