#pragma once

#include "ace/engine/run_io.hpp"
#include "ace/metrics/metrics.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ace::metrics {

inline constexpr int kReportSchemaVersion = 1;

/// Metric names accepted by EvaluationConfig::metrics.
const std::vector<std::string>& metric_names();

struct EvaluationConfig {
  std::set<std::string> metrics = {metric_names().begin(), metric_names().end()};
  int sfid_splits = 10;
  int cout_steps = 20;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static EvaluationConfig from_json(const nlohmann::json& j);
  /// Accepts "all" or a comma-separated list.
  static std::set<std::string> parse_metric_list(const std::string& list);
  std::vector<std::string> validate() const;
};

/// Models used by evaluation. Missing entries make their metrics unavailable.
struct EvaluationAssets {
  std::shared_ptr<const models::ConvClassifier<float>> classifier;
  std::shared_ptr<const FeatureEncoder> fid_encoder;         // FID and sFID features
  std::shared_ptr<const FeatureEncoder> face_encoder;        // FS
  std::shared_ptr<const FeatureEncoder> ssl_encoder;         // S3
  std::shared_ptr<const ImageDistance> perceptual_distance;  // diversity
};

/// Default wiring. FID/sFID features come from `fid` when given, else from
/// the self-supervised encoder, else from the classifier. S3 needs `ssl`, FS
/// needs `face`. The perceptual distance uses the ssl network when present,
/// else the classifier.
EvaluationAssets make_evaluation_assets(std::shared_ptr<const models::ConvClassifier<float>> classifier,
                                        std::shared_ptr<const models::ConvClassifier<float>> ssl = nullptr,
                                        std::shared_ptr<const models::ConvClassifier<float>> face = nullptr,
                                        std::shared_ptr<const models::ConvClassifier<float>> fid = nullptr);

struct MetricReport {
  std::size_t total = 0;
  std::size_t valid = 0;    // flipped counterfactuals
  std::size_t invalid = 0;
  std::optional<double> flip_rate, fid, fs, s3, cout, diversity;
  std::optional<SfidResult> sfid;
  std::size_t similarity_excluded = 0;
  std::size_t diversity_groups = 0;
  std::map<std::string, std::string> skipped;  // metric -> reason it was not computed

  nlohmann::json to_json() const;
};

/// Scores a batch of stored runs. Counterfactuals that did not flip count as
/// invalid and are left out of FID and sFID. Diversity averages the pairwise
/// perceptual distance within groups of runs sharing an input image.
MetricReport evaluate_runs(const std::vector<engine::StoredRun>& runs, const EvaluationAssets& assets,
                           const EvaluationConfig& config);

}  // namespace ace::metrics
