#include "ace/engine/explain.hpp"

#include "ace/core/errors.hpp"

#include <chrono>
#include <cmath>

namespace ace::engine {

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& field, const std::string& prefix,
                std::vector<std::string>& problems) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    problems.push_back(prefix + key + " has the wrong type");
  }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

nlohmann::json RefineConfig::to_json() const {
  return {{"enabled", enabled}, {"dilation", dilation}, {"threshold", threshold}};
}

RefineConfig RefineConfig::from_json(const nlohmann::json& j, const RefineConfig& base) {
  RefineConfig c = base;
  std::vector<std::string> problems;
  read_field(j, "enabled", c.enabled, "refine.", problems);
  read_field(j, "dilation", c.dilation, "refine.", problems);
  read_field(j, "threshold", c.threshold, "refine.", problems);
  if (!problems.empty()) throw ConfigError(problems);
  return c;
}

std::vector<std::string> RefineConfig::validate() const {
  std::vector<std::string> problems;
  if (dilation < 1 || dilation % 2 == 0) problems.push_back("refine.dilation must be an odd positive integer");
  if (!(threshold >= 0.0 && threshold <= 1.0)) problems.push_back("refine.threshold must lie in [0, 1]");
  return problems;
}

nlohmann::json ExplainConfig::to_json() const {
  return {{"attack", attack.to_json()}, {"refine", refine.to_json()}, {"respacing", respacing}};
}

ExplainConfig ExplainConfig::from_json(const nlohmann::json& j, const ExplainConfig& base) {
  ExplainConfig c = base;
  std::vector<std::string> problems;
  auto collect = [&](auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      problems.insert(problems.end(), e.problems().begin(), e.problems().end());
    }
  };
  if (j.contains("attack")) collect([&] { c.attack = AttackConfig::from_json(j.at("attack"), base.attack); });
  if (j.contains("refine")) collect([&] { c.refine = RefineConfig::from_json(j.at("refine"), base.refine); });
  read_field(j, "respacing", c.respacing, "", problems);
  if (!problems.empty()) throw ConfigError(problems);
  return c;
}

std::vector<std::string> ExplainConfig::validate() const {
  std::vector<std::string> problems = attack.validate();
  const auto refine_problems = refine.validate();
  problems.insert(problems.end(), refine_problems.begin(), refine_problems.end());
  if (respacing < 1) problems.push_back("respacing must be >= 1");
  else if (attack.tau > respacing) problems.push_back("attack.tau must not exceed respacing");
  return problems;
}

nlohmann::json DiversityConfig::to_json() const { return {{"respacings", respacings}}; }

DiversityConfig DiversityConfig::from_json(const nlohmann::json& j, const DiversityConfig& base) {
  DiversityConfig c = base;
  std::vector<std::string> problems;
  read_field(j, "respacings", c.respacings, "diversity.", problems);
  if (!problems.empty()) throw ConfigError(problems);
  return c;
}

std::vector<std::string> DiversityConfig::validate(int schedule_steps) const {
  std::vector<std::string> problems;
  if (respacings.empty()) problems.push_back("diversity.respacings must not be empty");
  for (const int r : respacings) {
    if (r < 1) problems.push_back("diversity.respacings entries must be >= 1");
    else if (schedule_steps > 0 && r > schedule_steps)
      problems.push_back("diversity.respacings entry " + std::to_string(r) + " exceeds the schedule length " +
                         std::to_string(schedule_steps));
  }
  return problems;
}

int scaled_tau(int base_tau, int base_respacing, int respacing) {
  require(base_respacing >= 1 && respacing >= 1, "scaled_tau: chain lengths must be >= 1");
  const double exact = static_cast<double>(base_tau) * respacing / base_respacing;
  const int tau = static_cast<int>(std::lround(exact));
  return base_tau > 0 ? std::clamp(tau, 1, respacing) : 0;
}

std::vector<std::uint64_t> diversity_seeds(std::uint64_t base_seed, int k) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < k; ++i) seeds.push_back(derive_seed(base_seed, static_cast<std::uint64_t>(i) + 1));
  return seeds;
}

namespace {

template <typename Scalar>
Label check_request(const ImageArray<Scalar>& x, Label target, const models::Classifier<Scalar>& classifier,
                    const diffusion::Denoiser<Scalar>& model, const ExplainConfig& config, Vector<double>* probs) {
  if (auto problems = config.validate(); !problems.empty()) throw ConfigError(problems);
  require(classifier.geometry() == model.geometry(), "classifier and denoiser geometries differ");
  require(has_geometry(x, classifier.geometry()), "input does not match model geometry " + to_string(model.geometry()));
  require(target >= 0 && target < classifier.num_classes(),
          "target label " + std::to_string(target) + " outside [0, " + std::to_string(classifier.num_classes()) + ")");
  *probs = models::predict_probs(classifier, x);
  Eigen::Index source = 0;
  probs->maxCoeff(&source);
  require(source != target, "target equals prediction");
  return static_cast<Label>(source);
}

template <typename Scalar>
void finish(CounterfactualResult<Scalar>& r, const models::Classifier<Scalar>& classifier) {
  r.counterfactual_probs = models::predict_probs(classifier, r.counterfactual);
  Eigen::Index best = 0;
  r.counterfactual_probs.maxCoeff(&best);
  r.flipped = best == r.target;
}

}  // namespace

template <typename Scalar>
CounterfactualResult<Scalar> explain(const ImageArray<Scalar>& x, Label target,
                                     const models::Classifier<Scalar>& classifier,
                                     const diffusion::Denoiser<Scalar>& model, const diffusion::NoiseSchedule& schedule,
                                     const ExplainConfig& config, const AttackProgress& progress) {
  CounterfactualResult<Scalar> r;
  r.source = check_request(x, target, classifier, model, config, &r.input_probs);
  r.input = x;
  r.target = target;
  r.config = config;
  const auto chain = diffusion::respace(schedule, config.respacing);

  auto start = std::chrono::steady_clock::now();
  r.pre_explanation = generate_pre_explanation(x, target, classifier, model, chain, config.attack, progress, r.source);
  r.timing.attack_seconds = seconds_since(start);

  start = std::chrono::steady_clock::now();
  const Geometry g = model.geometry();
  r.mask = config.refine.enabled
               ? compute_mask(x, r.pre_explanation.image, g, config.refine.dilation, config.refine.threshold)
               : full_mask(g);
  r.refine_respacing = config.respacing;
  r.refine_tau = config.attack.tau;
  r.counterfactual = repaint_refine(x, r.pre_explanation.image, r.mask, config.attack.tau, model, chain,
                                    derive_seed(config.attack.seed, 1));
  r.timing.refine_seconds = seconds_since(start);
  finish(r, classifier);
  return r;
}

template <typename Scalar>
std::vector<CounterfactualResult<Scalar>> diverse_explanations(
    const ImageArray<Scalar>& x, Label target, const std::vector<std::uint64_t>& seeds,
    const models::Classifier<Scalar>& classifier, const diffusion::Denoiser<Scalar>& model,
    const diffusion::NoiseSchedule& schedule, const ExplainConfig& base, const DiversityConfig& diversity) {
  require(seeds.size() >= 2, "diverse_explanations needs k >= 2");
  if (auto problems = diversity.validate(schedule.num_steps()); !problems.empty()) throw ConfigError(problems);
  Vector<double> probs;
  const Label source = check_request(x, target, classifier, model, base, &probs);
  const auto attack_chain = diffusion::respace(schedule, base.respacing);

  std::vector<CounterfactualResult<Scalar>> results;
  for (const auto seed : seeds) {
    CounterfactualResult<Scalar> r;
    r.input = x;
    r.source = source;
    r.target = target;
    r.input_probs = probs;
    r.config = base;
    r.config.attack.seed = seed;
    r.config.refine.enabled = false;

    auto start = std::chrono::steady_clock::now();
    r.pre_explanation =
        generate_pre_explanation(x, target, classifier, model, attack_chain, r.config.attack, {}, source);
    r.timing.attack_seconds = seconds_since(start);

    start = std::chrono::steady_clock::now();
    r.refine_respacing = diversity.respacings[seed % diversity.respacings.size()];
    r.refine_tau = scaled_tau(base.attack.tau, base.respacing, r.refine_respacing);
    const auto chain = diffusion::respace(schedule, r.refine_respacing);
    r.mask = full_mask(model.geometry());
    r.counterfactual =
        repaint_refine(x, r.pre_explanation.image, r.mask, r.refine_tau, model, chain, derive_seed(seed, 1));
    r.timing.refine_seconds = seconds_since(start);
    finish(r, classifier);
    results.push_back(std::move(r));
  }
  return results;
}

template <typename Scalar>
std::vector<CounterfactualResult<Scalar>> diverse_explanations(
    const ImageArray<Scalar>& x, Label target, int k, const models::Classifier<Scalar>& classifier,
    const diffusion::Denoiser<Scalar>& model, const diffusion::NoiseSchedule& schedule, const ExplainConfig& base,
    const DiversityConfig& diversity) {
  require(k >= 2, "diverse_explanations needs k >= 2");
  return diverse_explanations(x, target, diversity_seeds(base.attack.seed, k), classifier, model, schedule, base,
                              diversity);
}

#define ACE_INSTANTIATE_EXPLAIN(S)                                                                                    \
  template CounterfactualResult<S> explain<S>(const ImageArray<S>&, Label, const models::Classifier<S>&,              \
                                              const diffusion::Denoiser<S>&, const diffusion::NoiseSchedule&,         \
                                              const ExplainConfig&, const AttackProgress&);                           \
  template std::vector<CounterfactualResult<S>> diverse_explanations<S>(                                              \
      const ImageArray<S>&, Label, const std::vector<std::uint64_t>&, const models::Classifier<S>&,                   \
      const diffusion::Denoiser<S>&, const diffusion::NoiseSchedule&, const ExplainConfig&, const DiversityConfig&);  \
  template std::vector<CounterfactualResult<S>> diverse_explanations<S>(                                              \
      const ImageArray<S>&, Label, int, const models::Classifier<S>&, const diffusion::Denoiser<S>&,                  \
      const diffusion::NoiseSchedule&, const ExplainConfig&, const DiversityConfig&);

ACE_INSTANTIATE_EXPLAIN(float)
ACE_INSTANTIATE_EXPLAIN(double)

}  // namespace ace::engine
