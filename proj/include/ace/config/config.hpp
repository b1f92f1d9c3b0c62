#pragma once

#include "ace/diffusion/trainer.hpp"
#include "ace/engine/explain.hpp"
#include "ace/metrics/report.hpp"
#include "ace/models/dataset.hpp"
#include "ace/models/ssl.hpp"
#include "ace/models/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace ace::config {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_root = "ace-data";
  int compute_slots = 1;
  int queue_capacity = 64;
  bool strict_ingestion = true;

  nlohmann::json to_json() const;
};

/// Every tunable of the toolkit. Sections map one-to-one onto top-level keys
/// of a config file.
struct AppConfig {
  models::BuiltinSpec builtin;
  diffusion::DenoiserTrainingConfig train_ddpm;
  models::ClassifierTrainingConfig train_classifier;
  models::SslTrainingConfig train_ssl;
  engine::ExplainConfig explain;
  engine::DiversityConfig diversity;
  int diversity_k = 4;
  metrics::EvaluationConfig metrics;
  ServiceConfig service;

  nlohmann::json to_json() const;
  /// Every problem found (unknown keys, wrong types, invalid values), not just the first.
  std::vector<std::string> validate() const;
};

/// Names accepted by preset().
const std::vector<std::string>& preset_names();

/// Partial config overriding the defaults. Throws ConfigError for an unknown name.
nlohmann::json preset(const std::string& name);

/// Parses "a.b.c=value" into {"a": {"b": {"c": value}}}. The value is read as
/// JSON when it parses, otherwise as a string.
nlohmann::json parse_override(const std::string& assignment);

/// Reads a JSON config file. Throws NotFoundError or ConfigError.
nlohmann::json read_config_file(const std::filesystem::path& path);

/// defaults < each layer in order. All layers are merged before anything is
/// parsed; unknown keys, type errors and invalid values are collected and
/// thrown together as one ConfigError.
AppConfig resolve(const std::vector<nlohmann::json>& layers);

/// Applies one layer over `base` with the same checks as resolve().
AppConfig overlay(const AppConfig& base, const nlohmann::json& layer);

}  // namespace ace::config
