#include "ace/metrics/report.hpp"

#include "ace/core/errors.hpp"

#include <sstream>

namespace ace::metrics {

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"flip_rate", "fid", "sfid", "fs", "s3", "cout", "diversity"};
  return names;
}

nlohmann::json EvaluationConfig::to_json() const {
  return {{"metrics", std::vector<std::string>(metrics.begin(), metrics.end())},
          {"sfid_splits", sfid_splits},
          {"cout_steps", cout_steps},
          {"seed", seed}};
}

std::set<std::string> EvaluationConfig::parse_metric_list(const std::string& list) {
  if (list == "all" || list.empty()) return {metric_names().begin(), metric_names().end()};
  std::set<std::string> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.insert(item);
  return out;
}

EvaluationConfig EvaluationConfig::from_json(const nlohmann::json& j) {
  EvaluationConfig c;
  std::vector<std::string> problems;
  try {
    if (j.contains("metrics")) {
      const auto& m = j.at("metrics");
      if (m.is_string()) c.metrics = parse_metric_list(m.get<std::string>());
      else c.metrics = m.get<std::set<std::string>>();
    }
    c.sfid_splits = j.value("sfid_splits", c.sfid_splits);
    c.cout_steps = j.value("cout_steps", c.cout_steps);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    problems.push_back(std::string("metrics config: ") + e.what());
  }
  if (!problems.empty()) throw ConfigError(problems);
  return c;
}

std::vector<std::string> EvaluationConfig::validate() const {
  std::vector<std::string> problems;
  for (const auto& m : metrics)
    if (std::find(metric_names().begin(), metric_names().end(), m) == metric_names().end())
      problems.push_back("unknown metric '" + m + "'");
  if (sfid_splits < 1) problems.push_back("sfid_splits must be >= 1");
  if (cout_steps < 1) problems.push_back("cout_steps must be >= 1");
  return problems;
}

nlohmann::json MetricReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j = {{"schema_version", kReportSchemaVersion},
                      {"counts", {{"total", total}, {"valid", valid}, {"invalid", invalid},
                                  {"similarity_excluded", similarity_excluded},
                                  {"diversity_groups", diversity_groups}}},
                      {"flip_rate", opt(flip_rate)},
                      {"fid", opt(fid)},
                      {"fs", opt(fs)},
                      {"s3", opt(s3)},
                      {"cout", opt(cout)},
                      {"diversity", opt(diversity)}};
  if (sfid) {
    j["sfid"] = sfid->mean;
    j["sfid_splits"] = sfid->per_split;
    j["counts"]["sfid_excluded"] = sfid->excluded;
  } else {
    j["sfid"] = nullptr;
    j["sfid_splits"] = nlohmann::json::array();
  }
  j["skipped"] = skipped;
  return j;
}

MetricReport evaluate_runs(const std::vector<engine::StoredRun>& runs, const EvaluationAssets& assets,
                           const EvaluationConfig& config) {
  if (auto problems = config.validate(); !problems.empty()) throw ConfigError(problems);
  require(!runs.empty(), "no runs to evaluate");
  MetricReport report;
  report.total = runs.size();
  std::vector<bool> flags;
  std::vector<ImageArray<double>> inputs, valid_cfs;
  std::vector<std::pair<ImageArray<double>, ImageArray<double>>> pairs;
  for (const auto& r : runs) {
    flags.push_back(r.flipped);
    inputs.push_back(r.input);
    pairs.emplace_back(r.input, r.counterfactual);
    if (r.flipped) valid_cfs.push_back(r.counterfactual);
  }
  report.valid = valid_cfs.size();
  report.invalid = runs.size() - valid_cfs.size();
  const auto wants = [&](const char* m) { return config.metrics.count(m) > 0; };
  auto attempt = [&](const char* name, bool available, const char* missing, auto&& fn) {
    if (!wants(name)) return;
    if (!available) {
      report.skipped[name] = missing;
      return;
    }
    try {
      fn();
    } catch (const ValidationError& e) {
      report.skipped[name] = e.what();
    }
  };

  attempt("flip_rate", true, "", [&] { report.flip_rate = flip_rate(flags); });
  attempt("fid", assets.fid_encoder != nullptr, "no FID encoder", [&] {
    report.fid = fid(inputs, valid_cfs, *assets.fid_encoder);
  });
  attempt("sfid", assets.fid_encoder != nullptr, "no FID encoder", [&] {
    report.sfid = sfid(
        inputs,
        [&](std::size_t i) -> std::optional<ImageArray<double>> {
          if (!runs[i].flipped) return std::nullopt;
          return runs[i].counterfactual;
        },
        *assets.fid_encoder, config.sfid_splits, config.seed);
  });
  attempt("fs", assets.face_encoder != nullptr, "no FS encoder", [&] {
    const auto s = embedding_similarity(pairs, *assets.face_encoder);
    report.fs = s.mean;
    report.similarity_excluded += s.excluded;
  });
  attempt("s3", assets.ssl_encoder != nullptr, "no self-supervised encoder", [&] {
    const auto s = embedding_similarity(pairs, *assets.ssl_encoder);
    report.s3 = s.mean;
    report.similarity_excluded += s.excluded;
  });
  attempt("cout", assets.classifier != nullptr, "no classifier", [&] {
    const auto probs = probability_fn(*assets.classifier);
    double total = 0.0;
    for (const auto& r : runs) total += cout(r.input, r.counterfactual, probs, r.source, r.target, config.cout_steps);
    report.cout = total / static_cast<double>(runs.size());
  });
  attempt("diversity", assets.perceptual_distance != nullptr, "no perceptual distance", [&] {
    std::vector<std::vector<ImageArray<double>>> groups;
    std::vector<const ImageArray<double>*> keys;
    for (const auto& r : runs) {
      std::size_t g = 0;
      while (g < keys.size() && !(keys[g]->rows() == r.input.rows() && keys[g]->cols() == r.input.cols() &&
                                  (*keys[g] == r.input).all()))
        ++g;
      if (g == keys.size()) {
        keys.push_back(&r.input);
        groups.emplace_back();
      }
      groups[g].push_back(r.counterfactual);
    }
    double total = 0.0;
    for (const auto& group : groups) {
      if (group.size() < 2) continue;
      total += diversity(group, [&](const auto& a, const auto& b) { return (*assets.perceptual_distance)(a, b); });
      ++report.diversity_groups;
    }
    require(report.diversity_groups > 0, "diversity needs at least 2 runs of the same input");
    report.diversity = total / static_cast<double>(report.diversity_groups);
  });
  return report;
}

EvaluationAssets make_evaluation_assets(std::shared_ptr<const models::ConvClassifier<float>> classifier,
                                        std::shared_ptr<const models::ConvClassifier<float>> ssl,
                                        std::shared_ptr<const models::ConvClassifier<float>> face,
                                        std::shared_ptr<const models::ConvClassifier<float>> fid) {
  EvaluationAssets a;
  a.classifier = classifier;
  if (fid) a.fid_encoder = std::make_shared<ConvFeatureEncoder>(fid, "fid");
  else if (ssl) a.fid_encoder = std::make_shared<ConvFeatureEncoder>(ssl, "ssl");
  else if (classifier) a.fid_encoder = std::make_shared<ConvFeatureEncoder>(classifier, "classifier");
  if (face) a.face_encoder = std::make_shared<ConvFeatureEncoder>(face, "face");
  if (ssl) a.ssl_encoder = std::make_shared<ConvFeatureEncoder>(ssl, "ssl");
  if (ssl || classifier) a.perceptual_distance = std::make_shared<PerceptualDistance>(ssl ? ssl : classifier);
  return a;
}

}  // namespace ace::metrics
