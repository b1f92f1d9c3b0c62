#pragma once

#include "ace/diffusion/model.hpp"
#include "ace/models/classifier.hpp"
#include "ace/models/dataset.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace ace::service {

/// Checkpoint kinds the registry accepts.
inline const std::vector<std::string> kModelKinds = {"classifier", "denoiser", "ssl-encoder"};

struct ModelEntry {
  std::string id;
  std::string kind;
  std::filesystem::path path;
  Geometry geometry;
  nlohmann::json metadata;

  nlohmann::json to_json() const;
};

struct DatasetEntry {
  std::string id;
  std::filesystem::path path;  // empty for the generated builtin set
  nlohmann::json descriptor;
};

/// Models and datasets known to the service. Models live under
/// <root>/models/<id>.ckpt, datasets under <root>/datasets/<id>/. A
/// "builtin" dataset generated from `builtin` is always listed unless a
/// directory of that name exists. Raw folders <root>/incoming/<id>/ (PNG files
/// plus labels.csv) are ingested into datasets/<id>/ on refresh; the outcome
/// is written to incoming/<id>/ingest_report.json. Loaded assets are cached
/// and shared read-only.
class AssetRegistry {
 public:
  AssetRegistry(std::filesystem::path root, models::BuiltinSpec builtin, bool strict_ingestion = true);

  /// Ingests pending incoming folders and rescans models and datasets.
  void refresh();

  std::vector<ModelEntry> models() const;
  std::vector<DatasetEntry> datasets() const;

  /// Copies the checkpoint into the models directory. Throws NotFoundError for
  /// a missing file and ValidationError for an unreadable or unsupported checkpoint
  /// or a taken id.
  ModelEntry register_model(const std::filesystem::path& source, std::optional<std::string> id = std::nullopt);

  /// Throws NotFoundError.
  ModelEntry model(const std::string& id) const;
  /// Entry of `id`, or the only model of `kind` when id is empty.
  ModelEntry resolve_model(const std::string& id, const std::string& kind) const;

  std::shared_ptr<const models::ConvClassifier<float>> classifier(const std::string& id);
  std::shared_ptr<const diffusion::DiffusionModel<float>> denoiser(const std::string& id);
  std::shared_ptr<const models::Dataset> dataset(const std::string& id);

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  models::BuiltinSpec builtin_;
  bool strict_ingestion_;
  mutable std::mutex mutex_;
  std::map<std::string, ModelEntry> models_;
  std::map<std::string, DatasetEntry> datasets_;
  std::map<std::string, std::shared_ptr<const models::ConvClassifier<float>>> classifiers_;
  std::map<std::string, std::shared_ptr<const diffusion::DiffusionModel<float>>> denoisers_;
  std::map<std::string, std::shared_ptr<const models::Dataset>> loaded_datasets_;
};

}  // namespace ace::service
