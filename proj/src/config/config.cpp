#include "ace/config/config.hpp"

#include "ace/core/errors.hpp"

#include <algorithm>
#include <fstream>
#include <functional>

namespace ace::config {

nlohmann::json ServiceConfig::to_json() const {
  return {{"host", host},
          {"port", port},
          {"data_root", data_root},
          {"compute_slots", compute_slots},
          {"queue_capacity", queue_capacity},
          {"strict_ingestion", strict_ingestion}};
}

namespace {

nlohmann::json builtin_to_json(const models::BuiltinSpec& b) {
  return {{"train", b.train}, {"val", b.val}, {"test", b.test}, {"height", b.height}, {"width", b.width},
          {"seed", b.seed}};
}

/// Reports keys absent from `reference` and removes them from `layer`.
void prune_unknown_keys(nlohmann::json& layer, const nlohmann::json& reference, const std::string& prefix,
                        std::vector<std::string>& problems) {
  if (!layer.is_object()) return;
  std::vector<std::string> drop;
  for (auto& [key, value] : layer.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!reference.is_object() || !reference.contains(key)) {
      problems.push_back("unknown config key '" + path + "'");
      drop.push_back(key);
      continue;
    }
    const auto& ref = reference.at(key);
    if (ref.is_object()) {
      if (!value.is_object()) {
        problems.push_back("config key '" + path + "' must be an object");
        drop.push_back(key);
      } else {
        prune_unknown_keys(value, ref, path, problems);
      }
    }
  }
  for (const auto& key : drop) layer.erase(key);
}

template <typename Fn>
void section(const char* name, std::vector<std::string>& problems, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    problems.insert(problems.end(), e.problems().begin(), e.problems().end());
  } catch (const nlohmann::json::exception& e) {
    problems.push_back(std::string(name) + ": " + e.what());
  }
}

}  // namespace

nlohmann::json AppConfig::to_json() const {
  return {{"dataset", {{"builtin", builtin_to_json(builtin)}}},
          {"train_ddpm", train_ddpm.to_json()},
          {"train_classifier", train_classifier.to_json()},
          {"train_ssl", train_ssl.to_json()},
          {"explain", explain.to_json()},
          {"diversity", {{"respacings", diversity.respacings}, {"k", diversity_k}}},
          {"metrics", metrics.to_json()},
          {"service", service.to_json()}};
}

std::vector<std::string> AppConfig::validate() const {
  std::vector<std::string> problems;
  auto add = [&](const std::vector<std::string>& more) { problems.insert(problems.end(), more.begin(), more.end()); };
  if (builtin.train < 0 || builtin.val < 0 || builtin.test < 0) problems.push_back("dataset.builtin split sizes must be >= 0");
  if (builtin.height < 4 || builtin.width < 4 || builtin.height % 4 || builtin.width % 4)
    problems.push_back("dataset.builtin height and width must be multiples of 4 and >= 4");
  add(train_ddpm.validate());
  add(train_classifier.validate());
  add(train_ssl.validate());
  add(explain.validate());
  if (explain.respacing > train_ddpm.schedule_steps)
    problems.push_back("explain.respacing must not exceed train_ddpm.schedule_steps");
  add(diversity.validate(train_ddpm.schedule_steps));
  if (diversity_k < 2) problems.push_back("diversity.k must be >= 2");
  add(metrics.validate());
  if (service.port < 0 || service.port > 65535) problems.push_back("service.port must lie in [0, 65535]");
  if (service.compute_slots < 1) problems.push_back("service.compute_slots must be >= 1");
  if (service.queue_capacity < 1) problems.push_back("service.queue_capacity must be >= 1");
  if (service.data_root.empty()) problems.push_back("service.data_root must not be empty");
  return problems;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"desk", "celeba-like", "bdd-like"};
  return names;
}

nlohmann::json preset(const std::string& name) {
  if (name == "desk")
    return {{"train_ddpm", {{"iterations", 2000}, {"max_train_timestep", 250}, {"full_chain_fraction", 0.2}}},
            {"explain", {{"respacing", 50}, {"attack", {{"tau", 5}}}, {"refine", {{"dilation", 5}, {"threshold", 0.15}}}}}};
  if (name == "celeba-like")
    return {{"train_ddpm", {{"max_train_timestep", 0}, {"full_chain_fraction", 0.0}}},
            {"explain", {{"respacing", 50}, {"attack", {{"tau", 5}}}, {"refine", {{"dilation", 15}, {"threshold", 0.15}}}}}};
  if (name == "bdd-like")
    return {{"train_ddpm", {{"max_train_timestep", 250}, {"full_chain_fraction", 0.0}}},
            {"explain", {{"respacing", 100}, {"attack", {{"tau", 5}}}, {"refine", {{"dilation", 15}, {"threshold", 0.05}}}}}};
  throw ConfigError("unknown preset '" + name + "' (known: desk, celeba-like, bdd-like)");
}

nlohmann::json parse_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json patch = value;
  std::size_t end = key.size();
  while (true) {
    const auto dot = key.rfind('.', end - 1);
    const std::string part = key.substr(dot == std::string::npos ? 0 : dot + 1, end - (dot == std::string::npos ? 0 : dot + 1));
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    patch = nlohmann::json{{part, patch}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  return patch;
}

nlohmann::json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("config file " + path.string() + " not found");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file " + path.string() + " is not valid JSON");
  if (!j.is_object()) throw ConfigError("config file " + path.string() + " must hold a JSON object");
  return j;
}

namespace {

/// Merges `layer` into `merged` after checking its keys against `reference`.
void merge_layer(nlohmann::json& merged, const nlohmann::json& raw_layer, const nlohmann::json& reference,
                 std::vector<std::string>& problems) {
  if (!raw_layer.is_object()) {
    problems.push_back("config layer must be a JSON object");
    return;
  }
  nlohmann::json layer = raw_layer;
  prune_unknown_keys(layer, reference, "", problems);
  // Switching attack method or norm without an explicit step or weight picks
  // that method's or norm's default.
  if (layer.contains("explain") && layer["explain"].contains("attack")) {
    const auto& a = layer["explain"]["attack"];
    if (a.contains("method") && !a.contains("step_size") && a["method"].is_string()) {
      try {
        merged["explain"]["attack"]["step_size"] =
            engine::AttackConfig::default_step_size(engine::parse_attack_method(a["method"].get<std::string>()));
      } catch (const ConfigError&) {
      }
    }
    if (a.contains("distance") && !a.contains("lambda_d") && a["distance"].is_string()) {
      try {
        merged["explain"]["attack"]["lambda_d"] =
            engine::AttackConfig::default_lambda_d(engine::parse_distance_norm(a["distance"].get<std::string>()));
      } catch (const ConfigError&) {
      }
    }
  }
  merged.merge_patch(layer);
}

/// Parses every leaf of `node` on its own; a leaf that fails is reported and
/// reset to its default so the remaining fields still parse and validate.
void sanitize(nlohmann::json& root, const nlohmann::json& defaults, const nlohmann::json::json_pointer& at,
              const std::function<void(const nlohmann::json&)>& parse_one, std::vector<std::string>& problems) {
  nlohmann::json& node = root[at];
  if (!node.is_object()) return;
  for (auto& [key, value] : node.items()) {
    const auto path = at / key;
    if (value.is_object() && defaults.contains(path) && defaults[path].is_object()) {
      sanitize(root, defaults, path, parse_one, problems);
      continue;
    }
    nlohmann::json probe;
    probe[path] = value;
    bool bad = false;
    try {
      parse_one(probe);
    } catch (const ConfigError& e) {
      problems.insert(problems.end(), e.problems().begin(), e.problems().end());
      bad = true;
    } catch (const nlohmann::json::exception& e) {
      std::string where = path.to_string().substr(1);
      std::replace(where.begin(), where.end(), '/', '.');
      std::string what = e.what();
      if (const auto close = what.find("] "); close != std::string::npos) what = what.substr(close + 2);
      problems.push_back(where + ": " + what);
      bad = true;
    }
    if (bad && defaults.contains(path)) value = defaults[path];
  }
}

AppConfig parse(const nlohmann::json& input, std::vector<std::string>& problems) {
  AppConfig c;
  nlohmann::json merged = input;
  const nlohmann::json defaults = AppConfig{}.to_json();
  using ptr = nlohmann::json::json_pointer;
  auto leafwise = [&](const char* name, const std::function<void(const nlohmann::json&)>& fn) {
    sanitize(merged, defaults, ptr("/" + std::string(name)), [&](const nlohmann::json& probe) {
      nlohmann::json section = probe.at(name);
      fn(section);
    }, problems);
  };
  leafwise("train_ddpm", [](const nlohmann::json& j) { diffusion::DenoiserTrainingConfig::from_json(j); });
  leafwise("train_classifier", [](const nlohmann::json& j) { models::ClassifierTrainingConfig::from_json(j); });
  leafwise("train_ssl", [](const nlohmann::json& j) { models::SslTrainingConfig::from_json(j); });
  leafwise("explain", [](const nlohmann::json& j) { engine::ExplainConfig::from_json(j); });
  leafwise("metrics", [](const nlohmann::json& j) { metrics::EvaluationConfig::from_json(j); });
  section("dataset", problems, [&] {
    const auto& b = merged.at("dataset").at("builtin");
    c.builtin.train = b.at("train").get<int>();
    c.builtin.val = b.at("val").get<int>();
    c.builtin.test = b.at("test").get<int>();
    c.builtin.height = b.at("height").get<int>();
    c.builtin.width = b.at("width").get<int>();
    c.builtin.seed = b.at("seed").get<std::uint64_t>();
  });
  section("train_ddpm", problems, [&] {
    c.train_ddpm = diffusion::DenoiserTrainingConfig::from_json(merged.at("train_ddpm"));
  });
  section("train_classifier", problems, [&] {
    c.train_classifier = models::ClassifierTrainingConfig::from_json(merged.at("train_classifier"));
  });
  section("train_ssl", problems, [&] { c.train_ssl = models::SslTrainingConfig::from_json(merged.at("train_ssl")); });
  section("explain", problems, [&] { c.explain = engine::ExplainConfig::from_json(merged.at("explain")); });
  section("diversity", problems, [&] {
    c.diversity = engine::DiversityConfig::from_json(merged.at("diversity"));
    c.diversity_k = merged.at("diversity").at("k").get<int>();
  });
  section("metrics", problems, [&] { c.metrics = metrics::EvaluationConfig::from_json(merged.at("metrics")); });
  section("service", problems, [&] {
    const auto& s = merged.at("service");
    c.service.host = s.at("host").get<std::string>();
    c.service.port = s.at("port").get<int>();
    c.service.data_root = s.at("data_root").get<std::string>();
    c.service.compute_slots = s.at("compute_slots").get<int>();
    c.service.queue_capacity = s.at("queue_capacity").get<int>();
    c.service.strict_ingestion = s.at("strict_ingestion").get<bool>();
  });
  const auto more = c.validate();
  problems.insert(problems.end(), more.begin(), more.end());
  if (!problems.empty()) {
    std::vector<std::string> unique;
    for (auto& p : problems)
      if (std::find(unique.begin(), unique.end(), p) == unique.end()) unique.push_back(std::move(p));
    throw ConfigError(unique);
  }
  return c;
}

}  // namespace

AppConfig overlay(const AppConfig& base, const nlohmann::json& layer) {
  std::vector<std::string> problems;
  nlohmann::json merged = base.to_json();
  merge_layer(merged, layer, merged, problems);
  return parse(merged, problems);
}

AppConfig resolve(const std::vector<nlohmann::json>& layers) {
  std::vector<std::string> problems;
  const nlohmann::json reference = AppConfig{}.to_json();
  nlohmann::json merged = reference;
  for (const auto& layer : layers) merge_layer(merged, layer, reference, problems);
  return parse(merged, problems);
}

}  // namespace ace::config
