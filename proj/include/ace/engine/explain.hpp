#pragma once

#include "ace/engine/attack.hpp"
#include "ace/engine/mask.hpp"
#include "ace/engine/refine.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <vector>

namespace ace::engine {

struct RefineConfig {
  /// Disabled refinement keeps the whole pre-explanation (all-ones mask).
  bool enabled = true;
  int dilation = 15;
  double threshold = 0.15;

  nlohmann::json to_json() const;
  static RefineConfig from_json(const nlohmann::json& j) { return from_json(j, RefineConfig{}); }
  static RefineConfig from_json(const nlohmann::json& j, const RefineConfig& base);
  std::vector<std::string> validate() const;
};

struct ExplainConfig {
  AttackConfig attack;
  RefineConfig refine;
  /// Number of steps the model's chain is respaced to.
  int respacing = 50;

  nlohmann::json to_json() const;
  static ExplainConfig from_json(const nlohmann::json& j) { return from_json(j, ExplainConfig{}); }
  static ExplainConfig from_json(const nlohmann::json& j, const ExplainConfig& base);
  std::vector<std::string> validate() const;
};

struct ExplainTiming {
  double attack_seconds = 0.0;
  double refine_seconds = 0.0;
};

template <typename Scalar>
struct CounterfactualResult {
  ImageArray<Scalar> input;
  Label source = 0;
  Label target = 0;
  PreExplanation<Scalar> pre_explanation;
  Mask mask;
  ImageArray<Scalar> counterfactual;
  Vector<double> input_probs;
  Vector<double> counterfactual_probs;
  bool flipped = false;
  ExplainConfig config;
  int refine_respacing = 0;  // chain length used by the refinement stage
  int refine_tau = 0;
  ExplainTiming timing;
};

/// Pre-explanation, mask and refinement. Throws ValidationError when the
/// target equals the classifier's prediction on x. A result that fails to
/// flip is returned normally with flipped = false.
template <typename Scalar>
CounterfactualResult<Scalar> explain(const ImageArray<Scalar>& x, Label target,
                                     const models::Classifier<Scalar>& classifier,
                                     const diffusion::Denoiser<Scalar>& model, const diffusion::NoiseSchedule& schedule,
                                     const ExplainConfig& config, const AttackProgress& progress = {});

struct DiversityConfig {
  /// Alternative chain lengths for the refinement stage; run i uses entry
  /// seed_i mod size, with tau scaled to keep the base tau / respacing ratio.
  std::vector<int> respacings = {50, 100, 200};

  nlohmann::json to_json() const;
  static DiversityConfig from_json(const nlohmann::json& j) { return from_json(j, DiversityConfig{}); }
  static DiversityConfig from_json(const nlohmann::json& j, const DiversityConfig& base);
  std::vector<std::string> validate(int schedule_steps = 0) const;
};

/// tau for a chain of `respacing` steps preserving base_tau / base_respacing.
int scaled_tau(int base_tau, int base_respacing, int respacing);

/// Per-run seeds derived from the base seed.
std::vector<std::uint64_t> diversity_seeds(std::uint64_t base_seed, int k);

/// One explanation per seed. Each run attacks with its own seed, then
/// re-denoises the whole pre-explanation (no region mask) on the respacing
/// picked by that seed. Throws ValidationError for fewer than 2 seeds.
template <typename Scalar>
std::vector<CounterfactualResult<Scalar>> diverse_explanations(
    const ImageArray<Scalar>& x, Label target, const std::vector<std::uint64_t>& seeds,
    const models::Classifier<Scalar>& classifier, const diffusion::Denoiser<Scalar>& model,
    const diffusion::NoiseSchedule& schedule, const ExplainConfig& base, const DiversityConfig& diversity = {});

/// k runs with seeds from diversity_seeds(base.attack.seed, k).
template <typename Scalar>
std::vector<CounterfactualResult<Scalar>> diverse_explanations(
    const ImageArray<Scalar>& x, Label target, int k, const models::Classifier<Scalar>& classifier,
    const diffusion::Denoiser<Scalar>& model, const diffusion::NoiseSchedule& schedule, const ExplainConfig& base,
    const DiversityConfig& diversity = {});

}  // namespace ace::engine
