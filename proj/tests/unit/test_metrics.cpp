#include "ace/core/errors.hpp"
#include "ace/core/image_io.hpp"
#include "ace/metrics/report.hpp"
#include "toy.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

using namespace ace;
using namespace ace::metrics;

namespace {

GaussianStats stats(Vector<double> mean, Matrix<double> cov) { return {std::move(mean), std::move(cov), 100}; }

Matrix<double> random_spd(int d, Rng& rng) {
  Matrix<double> a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.gaussian();
  return a * a.transpose() / d + 0.05 * Matrix<double>::Identity(d, d);
}

Vector<double> random_vector(int d, Rng& rng) {
  Vector<double> v(d);
  for (int i = 0; i < d; ++i) v(i) = rng.gaussian();
  return v;
}

// Trace of (S_a S_b)^(1/2) from the eigenvalues of the non-symmetric product.
double frechet_oracle(const GaussianStats& a, const GaussianStats& b) {
  Eigen::EigenSolver<Matrix<double>> es(a.covariance * b.covariance);
  double tr_sqrt = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    tr_sqrt += std::sqrt(std::max(es.eigenvalues()(i).real(), 0.0));
  return (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2.0 * tr_sqrt;
}

ImageArray<double> pixels(std::initializer_list<double> v) {
  ImageArray<double> x(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double p : v) x(0, i++) = p;
  return x;
}

}  // namespace

TEST_CASE("flip rate") {
  CHECK(flip_rate({true, true, true}) == 1.0);
  CHECK(flip_rate({true, false, true, true}) == 0.75);
  CHECK(flip_rate({false, false}) == 0.0);
  CHECK_THROWS_AS(flip_rate({}), ValidationError);
  std::vector<bool> v = {true, false, false, true, true, false, true};
  const double base = flip_rate(v);
  std::mt19937 g(3);
  for (int i = 0; i < 10; ++i) {
    std::shuffle(v.begin(), v.end(), g);
    CHECK(flip_rate(v) == base);
  }
}

TEST_CASE("frechet distance closed forms") {
  const auto a = stats(Vector<double>::Constant(1, 0.0), Matrix<double>::Constant(1, 1, 1.0));
  const auto b = stats(Vector<double>::Constant(1, 1.0), Matrix<double>::Constant(1, 1, 1.0));
  CHECK(frechet_distance(a, b) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(frechet_distance(a, a)) < 1e-12);

  Matrix<double> sa = Matrix<double>::Zero(2, 2), sb = Matrix<double>::Zero(2, 2);
  sa.diagonal() << 1.0, 4.0;
  sb.diagonal() << 4.0, 1.0;
  const Vector<double> mu = Vector<double>::Zero(2);
  CHECK(frechet_distance(stats(mu, sa), stats(mu, sb)) == doctest::Approx(2.0).epsilon(1e-12));

  CHECK_THROWS_AS(frechet_distance(a, stats(mu, sa)), ValidationError);
}

TEST_CASE("frechet distance against an eigen-solver oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + trial % 6;
    const auto a = stats(random_vector(d, rng), random_spd(d, rng));
    const auto b = stats(random_vector(d, rng), random_spd(d, rng));
    const double got = frechet_distance(a, b);
    CHECK(got == doctest::Approx(frechet_oracle(a, b)).epsilon(1e-6));
    CHECK(std::abs(got - frechet_distance(b, a)) < 1e-8);
    CHECK(got >= 0.0);
    CHECK(std::abs(frechet_distance(a, a)) < 1e-8);
  }
  // Commuting covariances: sum of (sqrt(a_i) - sqrt(b_i))^2 in a shared eigenbasis.
  for (int trial = 0; trial < 5; ++trial) {
    const int d = 4;
    Eigen::HouseholderQR<Matrix<double>> qr(random_spd(d, rng));
    const Matrix<double> q = qr.householderQ();
    Vector<double> la(d), lb(d);
    for (int i = 0; i < d; ++i) {
      la(i) = rng.uniform(0.1, 3.0);
      lb(i) = rng.uniform(0.1, 3.0);
    }
    const Vector<double> mu = random_vector(d, rng);
    const auto a = stats(mu, q * la.asDiagonal() * q.transpose());
    const auto b = stats(mu, q * lb.asDiagonal() * q.transpose());
    CHECK(frechet_distance(a, b) ==
          doctest::Approx((la.array().sqrt() - lb.array().sqrt()).square().sum()).epsilon(1e-8));
  }
}

TEST_CASE("gaussian fit uses the unbiased covariance") {
  Matrix<double> f(4, 2);
  f << 1, 0, 3, 2, 5, 2, 7, 4;
  const auto s = fit_gaussian(f);
  CHECK(s.mean(0) == doctest::Approx(4.0));
  CHECK(s.mean(1) == doctest::Approx(2.0));
  CHECK(s.covariance(0, 0) == doctest::Approx(20.0 / 3.0));
  CHECK(s.covariance(1, 1) == doctest::Approx(8.0 / 3.0));
  CHECK(s.covariance(0, 1) == doctest::Approx(12.0 / 3.0));
  CHECK(s.count == 4);
}

TEST_CASE("fid with the identity encoder equals the closed form on the sample statistics") {
  Rng rng(5);
  const int d = 3;
  std::vector<ImageArray<double>> a, b;
  Matrix<double> fa(60, d), fb(50, d);
  for (int i = 0; i < 60; ++i) {
    ImageArray<double> x(1, d);
    for (int k = 0; k < d; ++k) x(0, k) = rng.gaussian() * (1.0 + k);
    fa.row(i) = x.row(0).matrix();
    a.push_back(x);
  }
  for (int i = 0; i < 50; ++i) {
    ImageArray<double> x(1, d);
    for (int k = 0; k < d; ++k) x(0, k) = 0.5 + rng.gaussian();
    fb.row(i) = x.row(0).matrix();
    b.push_back(x);
  }
  const IdentityEncoder enc(d);
  CHECK(fid(a, b, enc) == doctest::Approx(frechet_oracle(fit_gaussian(fa), fit_gaussian(fb))).epsilon(1e-6));
  CHECK(std::abs(fid(a, a, enc)) < 1e-6);
  std::vector<ImageArray<double>> zeros(4, pixels({0, 0, 0})), ones(4, pixels({1, 1, 1}));
  CHECK(fid(zeros, ones, enc) > 0.0);
  CHECK_THROWS_AS(fid({pixels({0, 0, 0})}, b, enc), ValidationError);
}

TEST_CASE("sfid protocol") {
  Rng rng(8);
  std::vector<ImageArray<double>> data;
  for (int i = 0; i < 120; ++i) data.push_back(pixels({rng.gaussian(), rng.gaussian()}));
  const IdentityEncoder enc(2);
  std::map<std::size_t, int> calls;
  const CounterfactualSource identity = [&](std::size_t i) -> std::optional<ImageArray<double>> {
    ++calls[i];
    return data[i];
  };
  const auto r = sfid(data, identity, enc, 10, 3);
  REQUIRE(r.per_split.size() == 10);
  CHECK(r.mean == std::accumulate(r.per_split.begin(), r.per_split.end(), 0.0) / 10.0);
  for (const auto& [i, n] : calls) CHECK(n == 1);
  CHECK(r.excluded == 0);
  const auto again = sfid(data, identity, enc, 10, 3);
  CHECK(again.per_split == r.per_split);

  // Baseline: FID between random raw halves, averaged over many independent splits.
  std::mt19937_64 g(101);
  std::vector<std::size_t> order(data.size());
  double baseline = 0.0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), g);
    std::vector<ImageArray<double>> a(data.size() / 2), b(data.size() / 2);
    for (std::size_t k = 0; k < a.size(); ++k) {
      a[k] = data[order[k]];
      b[k] = data[order[k + a.size()]];
    }
    baseline += fid(a, b, enc) / trials;
  }
  const auto wide = sfid(data, identity, enc, 200, 4);
  CHECK(wide.mean == doctest::Approx(baseline).epsilon(0.15));

  const CounterfactualSource odd_only = [&](std::size_t i) -> std::optional<ImageArray<double>> {
    if (i % 2) return data[i];
    return std::nullopt;
  };
  const auto partial = sfid(data, odd_only, enc, 3, 3);
  CHECK(partial.excluded > 0);
  CHECK_THROWS_AS(sfid({data[0], data[1], data[2]}, identity, enc), ValidationError);
}

TEST_CASE("embedding similarity") {
  const IdentityEncoder enc(2);
  const auto a = pixels({1, 0});
  CHECK(embedding_similarity({{a, a}, {pixels({0.3, -2}), pixels({0.3, -2})}}, enc).mean == doctest::Approx(1.0));
  CHECK(embedding_similarity({{a, pixels({0, 5})}}, enc).mean == doctest::Approx(0.0));
  const auto r = embedding_similarity({{a, pixels({0.8, 0.6})}, {a, pixels({0.6, 0.8})}}, enc);
  CHECK(r.mean == doctest::Approx(0.7));
  CHECK(embedding_similarity({{pixels({3, 0}), pixels({4.8, 3.6})}, {pixels({0.1, 0}), pixels({0.06, 0.08})}}, enc)
            .mean == doctest::Approx(0.7));
  const auto z = embedding_similarity({{a, pixels({0.8, 0.6})}, {pixels({0, 0}), a}}, enc);
  CHECK(z.mean == doctest::Approx(0.8));
  CHECK(z.excluded == 1);
  CHECK(z.used == 1);
  CHECK_THROWS_AS(embedding_similarity({}, enc), ValidationError);
}

TEST_CASE("cout endpoints and the scripted K = 2 example") {
  const auto x = pixels({0, 0, 0, 0});
  const auto ce = pixels({0.4, -0.3, 0.2, 0.1});
  const ProbabilityFn sure_target = [](const ImageArray<double>&) { return Vector<double>(Eigen::Vector2d(0, 1)); };
  const ProbabilityFn sure_source = [](const ImageArray<double>&) { return Vector<double>(Eigen::Vector2d(1, 0)); };
  CHECK(cout(x, ce, sure_target, 0, 1, 5) == doctest::Approx(1.0));
  CHECK(cout(x, ce, sure_source, 0, 1, 5) == doctest::Approx(-1.0));

  // Pixels enter in the order 0, 1, 2, 3 (largest change first), two per step.
  int unexpected = 0;
  const ProbabilityFn scripted = [&](const ImageArray<double>& img) {
    const bool r0 = img(0, 0) != 0.0, r1 = img(0, 1) != 0.0, r2 = img(0, 2) != 0.0, r3 = img(0, 3) != 0.0;
    if (!r0 && !r1 && !r2 && !r3) return Vector<double>(Eigen::Vector2d(0.9, 0.1));
    if (r0 && r1 && !r2 && !r3) return Vector<double>(Eigen::Vector2d(0.4, 0.6));
    if (r0 && r1 && r2 && r3) return Vector<double>(Eigen::Vector2d(0.1, 0.9));
    ++unexpected;
    return Vector<double>(Eigen::Vector2d(0.5, 0.5));
  };
  CHECK(cout(x, ce, scripted, 0, 1, 2) == doctest::Approx(1.6 / 3 - 1.4 / 3).epsilon(1e-12));
  CHECK(unexpected == 0);
  CHECK_THROWS_AS(cout(x, ce, scripted, 1, 1, 2), ValidationError);
}

TEST_CASE("cout stays in range and ignores untracked classes") {
  Rng rng(4);
  const Geometry g{3, 8, 8};
  const auto clf = toy::random_convnet<double>(g, 3, 9);
  const auto probs = probability_fn(clf);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = toy::random_image<double>(g, rng);
    const auto ce = toy::random_image<double>(g, rng);
    const double v = cout(x, ce, probs, 0, 2, 7);
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
    // Reshuffle the untracked mass: tracked probabilities unchanged.
    const ProbabilityFn reshaped = [&](const ImageArray<double>& img) {
      Vector<double> p = probs(img);
      Vector<double> q(5);
      q << p(0), p(1) * 0.25, p(2), p(1) * 0.5, p(1) * 0.25;
      return q;
    };
    CHECK(cout(x, ce, reshaped, 0, 2, 7) == doctest::Approx(v).epsilon(1e-12));
  }
}

TEST_CASE("diversity is the mean pairwise distance") {
  const std::vector<ImageArray<double>> imgs = {pixels({0}), pixels({1}), pixels({2})};
  const auto stub = [](const ImageArray<double>& a, const ImageArray<double>& b) {
    const int i = static_cast<int>(std::min(a(0, 0), b(0, 0))), j = static_cast<int>(std::max(a(0, 0), b(0, 0)));
    if (i == 0 && j == 1) return 0.1;
    if (i == 0 && j == 2) return 0.2;
    if (i == 1 && j == 2) return 0.3;
    return 0.0;
  };
  CHECK(diversity(imgs, stub) == doctest::Approx(0.2));
  CHECK(diversity({pixels({0}), pixels({0}), pixels({0}), pixels({0})}, stub) == 0.0);
  CHECK_THROWS_AS(diversity({pixels({0})}, stub), ValidationError);
}

TEST_CASE("perceptual distance is a symmetric nonnegative dissimilarity") {
  const Geometry g{3, 8, 8};
  const auto net = std::make_shared<const models::ConvClassifier<float>>(toy::random_convnet<float>(g, 2, 3));
  const PerceptualDistance dist(net);
  Rng rng(6);
  for (int i = 0; i < 5; ++i) {
    const auto a = toy::random_image<double>(g, rng), b = toy::random_image<double>(g, rng);
    CHECK(dist(a, a) == doctest::Approx(0.0));
    CHECK(dist(a, b) > 0.0);
    CHECK(dist(a, b) == doctest::Approx(dist(b, a)));
  }
}

TEST_CASE("evaluation report over stored runs") {
  const Geometry g{3, 8, 8};
  const auto clf = std::make_shared<const models::ConvClassifier<float>>(toy::random_convnet<float>(g, 2, 3));
  Rng rng(12);
  std::vector<engine::StoredRun> runs;
  for (int i = 0; i < 10; ++i) {
    engine::StoredRun r;
    r.geometry = g;
    r.input = quantize(toy::random_image<double>(g, rng));
    r.counterfactual = quantize(toy::random_image<double>(g, rng));
    r.source = 0;
    r.target = 1;
    r.flipped = i != 4;
    runs.push_back(r);
  }
  runs[7].input = runs[6].input;  // two runs of one instance
  const auto assets = make_evaluation_assets(clf);
  EvaluationConfig cfg;
  cfg.seed = 7;
  const auto report = evaluate_runs(runs, assets, cfg);
  CHECK(report.total == 10);
  CHECK(report.valid == 9);
  CHECK(report.invalid == 1);
  CHECK(report.flip_rate == doctest::Approx(0.9));
  REQUIRE(report.sfid);
  CHECK(report.sfid->per_split.size() == 10);
  CHECK(report.sfid->mean ==
        std::accumulate(report.sfid->per_split.begin(), report.sfid->per_split.end(), 0.0) / 10.0);
  REQUIRE(report.fid);
  CHECK(*report.fid >= 0.0);
  REQUIRE(report.cout);
  CHECK(std::abs(*report.cout) <= 1.0);
  REQUIRE(report.diversity);
  CHECK(report.diversity_groups == 1);
  CHECK(report.skipped.count("fs") == 1);
  CHECK(report.skipped.count("s3") == 1);
  CHECK(evaluate_runs(runs, assets, cfg).to_json().dump() == report.to_json().dump());

  EvaluationConfig only;
  only.metrics = EvaluationConfig::parse_metric_list("flip_rate");
  const auto small = evaluate_runs(runs, assets, only);
  CHECK(small.flip_rate);
  CHECK_FALSE(small.fid);
  EvaluationConfig unknown;
  unknown.metrics = EvaluationConfig::parse_metric_list("flip_rate,nope");
  unknown.sfid_splits = 0;
  CHECK(unknown.validate().size() == 2);
}
