#include "ace/engine/attack.hpp"

#include "ace/core/errors.hpp"
#include "ace/core/random.hpp"

#include <cmath>
#include <sstream>

namespace ace::engine {

std::string to_string(AttackMethod m) {
  switch (m) {
    case AttackMethod::pgd: return "pgd";
    case AttackMethod::gd: return "gd";
    case AttackMethod::cw: return "cw";
  }
  return "?";
}

std::string to_string(DistanceNorm n) { return n == DistanceNorm::l1 ? "l1" : "l2"; }

std::string to_string(DistanceAnchor a) { return a == DistanceAnchor::iterate ? "iterate" : "filtered"; }

AttackMethod parse_attack_method(const std::string& s) {
  if (s == "pgd") return AttackMethod::pgd;
  if (s == "gd") return AttackMethod::gd;
  if (s == "cw") return AttackMethod::cw;
  throw ConfigError("attack.method must be one of pgd, gd, cw (got '" + s + "')");
}

DistanceNorm parse_distance_norm(const std::string& s) {
  if (s == "l1") return DistanceNorm::l1;
  if (s == "l2") return DistanceNorm::l2;
  throw ConfigError("attack.distance must be l1 or l2 (got '" + s + "')");
}

DistanceAnchor parse_distance_anchor(const std::string& s) {
  if (s == "iterate") return DistanceAnchor::iterate;
  if (s == "filtered") return DistanceAnchor::filtered;
  throw ConfigError("attack.distance_anchor must be iterate or filtered (got '" + s + "')");
}

double AttackConfig::default_step_size(AttackMethod m) {
  switch (m) {
    case AttackMethod::pgd: return 2.0 / 255.0;
    case AttackMethod::gd: return 5.0;
    case AttackMethod::cw: return 2.0;
  }
  return 2.0 / 255.0;
}

double AttackConfig::default_lambda_d(DistanceNorm n) { return n == DistanceNorm::l1 ? 0.001 : 0.1; }

nlohmann::json AttackConfig::to_json() const {
  return {{"method", to_string(method)},
          {"num_iterations", num_iterations},
          {"step_size", step_size},
          {"lambda_d", lambda_d},
          {"distance", to_string(distance)},
          {"tau", tau},
          {"seed", seed},
          {"distance_anchor", to_string(distance_anchor)},
          {"cw_kappa", cw_kappa}};
}

AttackConfig AttackConfig::from_json(const nlohmann::json& j, const AttackConfig& base) {
  AttackConfig c = base;
  std::vector<std::string> problems;
  auto read_enum = [&](const char* key, auto parse, auto& field) {
    if (!j.contains(key)) return;
    try {
      field = parse(j.at(key).template get<std::string>());
    } catch (const ConfigError& e) {
      problems.push_back(e.what());
    } catch (const nlohmann::json::exception&) {
      problems.push_back(std::string("attack.") + key + " must be a string");
    }
  };
  auto read_num = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      field = j.at(key).template get<std::decay_t<decltype(field)>>();
    } catch (const nlohmann::json::exception&) {
      problems.push_back(std::string("attack.") + key + " has the wrong type");
    }
  };
  read_enum("method", parse_attack_method, c.method);
  if (j.contains("method") && !j.contains("step_size") && c.method != base.method)
    c.step_size = default_step_size(c.method);
  if (j.contains("distance") && !j.contains("lambda_d")) {
    const DistanceNorm before = c.distance;
    read_enum("distance", parse_distance_norm, c.distance);
    if (c.distance != before) c.lambda_d = default_lambda_d(c.distance);
  } else {
    read_enum("distance", parse_distance_norm, c.distance);
  }
  read_enum("distance_anchor", parse_distance_anchor, c.distance_anchor);
  read_num("num_iterations", c.num_iterations);
  read_num("step_size", c.step_size);
  read_num("lambda_d", c.lambda_d);
  read_num("tau", c.tau);
  read_num("seed", c.seed);
  read_num("cw_kappa", c.cw_kappa);
  if (!problems.empty()) throw ConfigError(problems);
  return c;
}

std::vector<std::string> AttackConfig::validate() const {
  std::vector<std::string> problems;
  if (num_iterations < 0) problems.push_back("attack.num_iterations must be >= 0");
  if (!(step_size > 0.0) || !std::isfinite(step_size)) problems.push_back("attack.step_size must be > 0");
  if (!(lambda_d >= 0.0) || !std::isfinite(lambda_d)) problems.push_back("attack.lambda_d must be >= 0");
  if (tau < 0) problems.push_back("attack.tau must be >= 0");
  if (!(cw_kappa >= 0.0)) problems.push_back("attack.cw_kappa must be >= 0");
  return problems;
}

namespace {

void check_label(Label label, Eigen::Index classes, const char* what) {
  require(label >= 0 && label < classes,
          std::string(what) + " label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
}

}  // namespace

template <typename Scalar>
double classification_objective(const Vector<Scalar>& logits, Label target, Vector<Scalar>* grad_logits) {
  check_label(target, logits.size(), "target");
  const Vector<double> z = logits.template cast<double>();
  const double top = z.maxCoeff();
  const double lse = top + std::log((z.array() - top).exp().sum());
  if (grad_logits) {
    Vector<double> p = (z.array() - lse).exp().matrix();
    p(target) -= 1.0;
    *grad_logits = p.template cast<Scalar>();
  }
  return lse - z(target);
}

template <typename Scalar>
double margin_objective(const Vector<Scalar>& logits, Label source, Label target, double kappa,
                        Vector<Scalar>* grad_logits) {
  check_label(target, logits.size(), "target");
  check_label(source, logits.size(), "source");
  const double margin = static_cast<double>(logits(source)) - static_cast<double>(logits(target));
  if (grad_logits) {
    grad_logits->setZero(logits.size());
    if (margin > -kappa) {
      (*grad_logits)(source) += Scalar(1);
      (*grad_logits)(target) -= Scalar(1);
    }
  }
  return std::max(margin, -kappa);
}

template <typename Scalar>
double distance(const ImageArray<Scalar>& a, const ImageArray<Scalar>& b, DistanceNorm norm, ImageArray<Scalar>* grad_a) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "distance: shape mismatch");
  const auto n = static_cast<double>(a.size());
  const ImageArray<Scalar> diff = a - b;
  if (norm == DistanceNorm::l1) {
    if (grad_a) *grad_a = diff.sign() / static_cast<Scalar>(n);
    return diff.abs().template cast<double>().sum() / n;
  }
  if (grad_a) *grad_a = diff * static_cast<Scalar>(2.0 / n);
  return diff.square().template cast<double>().sum() / n;
}

template <typename Scalar>
ObjectiveEvaluation<Scalar> total_objective(const ImageArray<Scalar>& iterate, const ImageArray<Scalar>& original,
                                            Label source, Label target, const models::Classifier<Scalar>& classifier,
                                            const diffusion::Denoiser<Scalar>& model,
                                            const diffusion::RespacedSchedule& chain,
                                            const diffusion::FilterNoise<Scalar>& noise, const AttackConfig& config,
                                            bool with_gradient) {
  require(has_geometry(iterate, classifier.geometry()) && has_geometry(original, classifier.geometry()),
          "total_objective: images do not match classifier geometry");
  ObjectiveEvaluation<Scalar> out;
  diffusion::FilterTrace<Scalar> trace;
  out.filtered = diffusion::filter(iterate, config.tau, model, chain, noise, with_gradient ? &trace : nullptr);

  std::any tape;
  out.logits = classifier.logits(out.filtered, with_gradient ? &tape : nullptr);
  Vector<Scalar> grad_logits;
  Vector<Scalar>* grad_ptr = with_gradient ? &grad_logits : nullptr;
  out.class_term = config.method == AttackMethod::cw
                       ? margin_objective(out.logits, source, target, config.cw_kappa, grad_ptr)
                       : classification_objective(out.logits, target, grad_ptr);

  const bool on_filtered = config.distance_anchor == DistanceAnchor::filtered;
  ImageArray<Scalar> grad_distance;
  const double d = distance(on_filtered ? out.filtered : iterate, original, config.distance,
                            with_gradient ? &grad_distance : nullptr);
  out.distance_term = config.lambda_d * d;
  out.value = out.class_term + out.distance_term;
  if (!with_gradient) return out;

  const auto lambda = static_cast<Scalar>(config.lambda_d);
  ImageArray<Scalar> grad_filtered = classifier.backward_input(tape, grad_logits);
  if (on_filtered) grad_filtered += lambda * grad_distance;
  out.gradient = diffusion::filter_backward(trace, model, grad_filtered);
  if (!on_filtered) out.gradient += lambda * grad_distance;
  return out;
}

template <typename Scalar>
ImageArray<Scalar> attack_step(const ImageArray<Scalar>& x, const ImageArray<Scalar>& grad, const AttackConfig& config) {
  require(x.rows() == grad.rows() && x.cols() == grad.cols(), "attack_step: gradient shape does not match image");
  const auto step = static_cast<Scalar>(2.0 * config.step_size);
  ImageArray<Scalar> next;
  switch (config.method) {
    case AttackMethod::pgd: next = x - step * grad.sign(); break;
    case AttackMethod::gd:
    case AttackMethod::cw: next = x - step * grad; break;
  }
  return next.cwiseMax(static_cast<Scalar>(kPixelMin)).cwiseMin(static_cast<Scalar>(kPixelMax));
}

template <typename Scalar>
PreExplanation<Scalar> generate_pre_explanation(const ImageArray<Scalar>& x, Label target,
                                                const models::Classifier<Scalar>& classifier,
                                                const diffusion::Denoiser<Scalar>& model,
                                                const diffusion::RespacedSchedule& chain, const AttackConfig& config,
                                                const AttackProgress& progress, std::optional<Label> source) {
  if (auto problems = config.validate(); !problems.empty()) throw ConfigError(problems);
  require(classifier.geometry() == model.geometry(), "classifier and denoiser geometries differ");
  require(has_geometry(x, classifier.geometry()), "input does not match model geometry " + to_string(model.geometry()));
  require(config.tau <= chain.length(), "attack.tau " + std::to_string(config.tau) + " exceeds the respaced chain length " +
                                            std::to_string(chain.length()));
  check_label(target, classifier.num_classes(), "target");
  const Label src = source ? *source : models::predict_label(classifier, x);

  PreExplanation<Scalar> out;
  out.image = x;
  out.filtered = x;
  Rng rng(derive_seed(config.seed, 0));
  const int iterations = config.effective_iterations();
  out.objective_trace.reserve(static_cast<std::size_t>(iterations));
  for (int it = 0; it < iterations; ++it) {
    const auto noise = diffusion::sample_filter_noise<Scalar>(model.geometry(), config.tau, rng);
    auto eval = total_objective(out.image, x, src, target, classifier, model, chain, noise, config, true);
    if (!std::isfinite(eval.value) || !eval.gradient.allFinite()) {
      std::ostringstream msg;
      msg << "attack diverged at iteration " << it << ": objective " << eval.value << ", class term " << eval.class_term
          << ", distance term " << eval.distance_term << ", gradient finite " << eval.gradient.allFinite();
      throw RuntimeFailure(msg.str());
    }
    out.objective_trace.push_back(eval.value);
    out.filtered = std::move(eval.filtered);
    out.image = attack_step(out.image, eval.gradient, config);
    if (progress) progress(it, eval.value);
  }
  const Vector<double> probs = models::predict_probs(classifier, out.image);
  out.final_target_prob = probs(target);
  Eigen::Index best = 0;
  probs.maxCoeff(&best);
  out.flipped = best == target;
  return out;
}

#define ACE_INSTANTIATE_ATTACK(S)                                                                                     \
  template double classification_objective<S>(const Vector<S>&, Label, Vector<S>*);                                   \
  template double margin_objective<S>(const Vector<S>&, Label, Label, double, Vector<S>*);                            \
  template double distance<S>(const ImageArray<S>&, const ImageArray<S>&, DistanceNorm, ImageArray<S>*);              \
  template ObjectiveEvaluation<S> total_objective<S>(                                                                  \
      const ImageArray<S>&, const ImageArray<S>&, Label, Label, const models::Classifier<S>&,                         \
      const diffusion::Denoiser<S>&, const diffusion::RespacedSchedule&, const diffusion::FilterNoise<S>&,             \
      const AttackConfig&, bool);                                                                                      \
  template ImageArray<S> attack_step<S>(const ImageArray<S>&, const ImageArray<S>&, const AttackConfig&);            \
  template PreExplanation<S> generate_pre_explanation<S>(                                                              \
      const ImageArray<S>&, Label, const models::Classifier<S>&, const diffusion::Denoiser<S>&,                       \
      const diffusion::RespacedSchedule&, const AttackConfig&, const AttackProgress&, std::optional<Label>);

ACE_INSTANTIATE_ATTACK(float)
ACE_INSTANTIATE_ATTACK(double)

}  // namespace ace::engine
