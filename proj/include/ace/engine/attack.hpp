#pragma once

#include "ace/core/types.hpp"
#include "ace/diffusion/process.hpp"
#include "ace/models/classifier.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ace::engine {

enum class AttackMethod { pgd, gd, cw };
enum class DistanceNorm { l1, l2 };
enum class DistanceAnchor { iterate, filtered };

std::string to_string(AttackMethod m);
std::string to_string(DistanceNorm n);
std::string to_string(DistanceAnchor a);
AttackMethod parse_attack_method(const std::string& s);
DistanceNorm parse_distance_norm(const std::string& s);
DistanceAnchor parse_distance_anchor(const std::string& s);

struct AttackConfig {
  AttackMethod method = AttackMethod::pgd;
  int num_iterations = 50;
  /// Step size on the [0, 1] pixel scale; internal images span [-1, 1], so the
  /// applied step is twice this value.
  double step_size = 2.0 / 255.0;
  double lambda_d = 0.001;
  DistanceNorm distance = DistanceNorm::l1;
  int tau = 5;
  std::uint64_t seed = 0;
  DistanceAnchor distance_anchor = DistanceAnchor::iterate;
  /// Confidence margin of the cw objective.
  double cw_kappa = 0.0;

  /// Iterations actually executed (cw runs twice as many).
  int effective_iterations() const { return method == AttackMethod::cw ? 2 * num_iterations : num_iterations; }

  static double default_step_size(AttackMethod m);
  static double default_lambda_d(DistanceNorm n);

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; a method given without step_size takes
  /// that method's default step.
  static AttackConfig from_json(const nlohmann::json& j) { return from_json(j, AttackConfig{}); }
  static AttackConfig from_json(const nlohmann::json& j, const AttackConfig& base);
  std::vector<std::string> validate() const;
};

/// Cross-entropy of the logits against `target`. Writes d/d(logits) when asked.
template <typename Scalar>
double classification_objective(const Vector<Scalar>& logits, Label target, Vector<Scalar>* grad_logits = nullptr);

/// max(logit_source - logit_target, -kappa).
template <typename Scalar>
double margin_objective(const Vector<Scalar>& logits, Label source, Label target, double kappa,
                        Vector<Scalar>* grad_logits = nullptr);

/// Mean l1 or mean squared difference.
template <typename Scalar>
double distance(const ImageArray<Scalar>& a, const ImageArray<Scalar>& b, DistanceNorm norm,
                ImageArray<Scalar>* grad_a = nullptr);

template <typename Scalar>
struct ObjectiveEvaluation {
  double value = 0.0;
  double class_term = 0.0;
  double distance_term = 0.0;
  ImageArray<Scalar> filtered;
  Vector<Scalar> logits;
  ImageArray<Scalar> gradient;  // with respect to the iterate; empty unless requested
};

/// L_class(F_tau(x'); y') + lambda_d d(anchor, x) with the filter noise fixed.
/// The cw method swaps L_class for the margin objective against `source`.
template <typename Scalar>
ObjectiveEvaluation<Scalar> total_objective(const ImageArray<Scalar>& iterate, const ImageArray<Scalar>& original,
                                            Label source, Label target, const models::Classifier<Scalar>& classifier,
                                            const diffusion::Denoiser<Scalar>& model,
                                            const diffusion::RespacedSchedule& chain,
                                            const diffusion::FilterNoise<Scalar>& noise, const AttackConfig& config,
                                            bool with_gradient);

/// pgd: x - a sign(g); gd and cw: x - a g; then clipped to the pixel range.
template <typename Scalar>
ImageArray<Scalar> attack_step(const ImageArray<Scalar>& x, const ImageArray<Scalar>& grad, const AttackConfig& config);

template <typename Scalar>
struct PreExplanation {
  ImageArray<Scalar> image;     // final iterate x'
  ImageArray<Scalar> filtered;  // F_tau of the last evaluated iterate; equals `image` when nothing ran
  std::vector<double> objective_trace;
  double final_target_prob = 0.0;
  bool flipped = false;
};

/// Called after every iteration with (iteration index, objective value).
using AttackProgress = std::function<void(int, double)>;

/// Runs the attack loop through the diffusion filter with fresh noise each
/// iteration. Throws RuntimeFailure on a non-finite objective or gradient.
template <typename Scalar>
PreExplanation<Scalar> generate_pre_explanation(const ImageArray<Scalar>& x, Label target,
                                                const models::Classifier<Scalar>& classifier,
                                                const diffusion::Denoiser<Scalar>& model,
                                                const diffusion::RespacedSchedule& chain, const AttackConfig& config,
                                                const AttackProgress& progress = {},
                                                std::optional<Label> source = std::nullopt);

}  // namespace ace::engine
