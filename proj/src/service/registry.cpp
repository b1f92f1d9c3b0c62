#include "ace/service/registry.hpp"

#include "ace/core/errors.hpp"
#include "ace/engine/run_io.hpp"
#include "ace/nn/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <regex>

namespace ace::service {

namespace fs = std::filesystem;

nlohmann::json ModelEntry::to_json() const {
  return {{"id", id}, {"kind", kind}, {"geometry", nn::geometry_to_json(geometry)}, {"metadata", metadata}};
}

namespace {

bool valid_id(const std::string& id) {
  static const std::regex pattern("[A-Za-z0-9][A-Za-z0-9._-]{0,63}");
  return std::regex_match(id, pattern);
}

std::optional<ModelEntry> read_model_entry(const fs::path& path, const std::string& id) {
  try {
    const auto header = nn::read_checkpoint_header(path);
    ModelEntry e;
    e.id = id;
    e.kind = header.value("kind", std::string{});
    e.path = path;
    e.geometry = nn::geometry_from_json(header.at("geometry"));
    e.metadata = header.value("metadata", nlohmann::json::object());
    if (std::find(kModelKinds.begin(), kModelKinds.end(), e.kind) == kModelKinds.end()) return std::nullopt;
    return e;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

AssetRegistry::AssetRegistry(fs::path root, models::BuiltinSpec builtin, bool strict_ingestion)
    : root_(std::move(root)), builtin_(builtin), strict_ingestion_(strict_ingestion) {
  fs::create_directories(root_ / "models");
  fs::create_directories(root_ / "datasets");
  fs::create_directories(root_ / "incoming");
  refresh();
}

void AssetRegistry::refresh() {
  for (const auto& entry : fs::directory_iterator(root_ / "incoming")) {
    const fs::path dir = entry.path();
    const std::string id = dir.filename().string();
    if (!entry.is_directory() || !fs::exists(dir / "labels.csv") || fs::exists(dir / "ingest_report.json")) continue;
    nlohmann::json outcome;
    try {
      require(valid_id(id), "dataset id '" + id + "' is not a valid identifier");
      require(!fs::exists(root_ / "datasets" / id), "dataset '" + id + "' already exists");
      models::IngestOptions options;
      options.strict = strict_ingestion_;
      options.name = id;
      models::IngestReport report;
      const auto dataset = models::ingest_dataset(dir, dir / "labels.csv", options, &report);
      models::save_dataset(root_ / "datasets" / id, dataset);
      outcome = {{"status", "ingested"}, {"report", report.to_json()}};
    } catch (const std::exception& e) {
      outcome = {{"status", "rejected"}, {"error", e.what()}};
    }
    outcome["strict"] = strict_ingestion_;
    engine::write_file_atomic(dir / "ingest_report.json", outcome.dump(2) + "\n");
  }

  std::map<std::string, ModelEntry> found_models;
  for (const auto& entry : fs::directory_iterator(root_ / "models")) {
    if (entry.path().extension() != ".ckpt") continue;
    const std::string id = entry.path().stem().string();
    if (auto e = read_model_entry(entry.path(), id)) found_models.emplace(id, std::move(*e));
  }
  std::map<std::string, DatasetEntry> found_datasets;
  for (const auto& entry : fs::directory_iterator(root_ / "datasets")) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "dataset.json")) continue;
    try {
      std::ifstream in(entry.path() / "dataset.json");
      const auto j = nlohmann::json::parse(in);
      const std::string id = entry.path().filename().string();
      found_datasets[id] = {id, entry.path(), j.at("descriptor")};
    } catch (const std::exception&) {
    }
  }
  if (!found_datasets.count("builtin")) {
    models::DatasetDescriptor d;
    d.name = "builtin";
    d.geometry = {3, builtin_.height, builtin_.width};
    d.class_names = {"smile", "frown"};
    d.split_sizes = {{"train", builtin_.train}, {"val", builtin_.val}, {"test", builtin_.test}};
    d.provenance = "builtin-synthetic";
    found_datasets["builtin"] = {"builtin", {}, d.to_json()};
  }
  std::lock_guard lock(mutex_);
  models_ = std::move(found_models);
  datasets_ = std::move(found_datasets);
}

std::vector<ModelEntry> AssetRegistry::models() const {
  std::lock_guard lock(mutex_);
  std::vector<ModelEntry> out;
  for (const auto& [id, e] : models_) out.push_back(e);
  return out;
}

std::vector<DatasetEntry> AssetRegistry::datasets() const {
  std::lock_guard lock(mutex_);
  std::vector<DatasetEntry> out;
  for (const auto& [id, e] : datasets_) out.push_back(e);
  return out;
}

ModelEntry AssetRegistry::register_model(const fs::path& source, std::optional<std::string> id) {
  if (!fs::exists(source)) throw NotFoundError("checkpoint " + source.string() + " not found");
  const std::string model_id = id ? *id : source.stem().string();
  require(valid_id(model_id), "model id '" + model_id + "' must match [A-Za-z0-9][A-Za-z0-9._-]*");
  auto entry = read_model_entry(source, model_id);
  require(entry.has_value(), "file " + source.string() + " is not a classifier, denoiser or ssl-encoder checkpoint");
  std::lock_guard lock(mutex_);
  require(!models_.count(model_id), "model id '" + model_id + "' is already registered");
  const fs::path target = root_ / "models" / (model_id + ".ckpt");
  const fs::path tmp = target.string() + ".tmp";
  fs::copy_file(source, tmp, fs::copy_options::overwrite_existing);
  fs::rename(tmp, target);
  entry->path = target;
  models_[model_id] = *entry;
  return *entry;
}

ModelEntry AssetRegistry::model(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = models_.find(id);
  if (it == models_.end()) throw NotFoundError("model '" + id + "' is not registered");
  return it->second;
}

ModelEntry AssetRegistry::resolve_model(const std::string& id, const std::string& kind) const {
  if (!id.empty()) {
    ModelEntry e = model(id);
    require(e.kind == kind, "model '" + id + "' is a " + e.kind + ", expected a " + kind);
    return e;
  }
  std::lock_guard lock(mutex_);
  std::vector<const ModelEntry*> matches;
  for (const auto& [mid, e] : models_)
    if (e.kind == kind) matches.push_back(&e);
  if (matches.empty()) throw NotFoundError("no " + kind + " model is registered");
  require(matches.size() == 1, "several " + kind + " models are registered; name one explicitly");
  return *matches.front();
}

std::shared_ptr<const models::ConvClassifier<float>> AssetRegistry::classifier(const std::string& id) {
  const ModelEntry e = model(id);
  require(e.kind == "classifier" || e.kind == "ssl-encoder", "model '" + id + "' is not a conv network");
  std::lock_guard lock(mutex_);
  auto& slot = classifiers_[id];
  if (!slot) slot = std::make_shared<const models::ConvClassifier<float>>(models::load_classifier<float>(e.path));
  return slot;
}

std::shared_ptr<const diffusion::DiffusionModel<float>> AssetRegistry::denoiser(const std::string& id) {
  const ModelEntry e = model(id);
  require(e.kind == "denoiser", "model '" + id + "' is not a denoiser");
  std::lock_guard lock(mutex_);
  auto& slot = denoisers_[id];
  if (!slot) slot = std::make_shared<const diffusion::DiffusionModel<float>>(diffusion::load_denoiser<float>(e.path));
  return slot;
}

std::shared_ptr<const models::Dataset> AssetRegistry::dataset(const std::string& id) {
  DatasetEntry e;
  {
    std::lock_guard lock(mutex_);
    const auto it = datasets_.find(id);
    if (it == datasets_.end()) throw NotFoundError("dataset '" + id + "' is not registered");
    if (auto cached = loaded_datasets_.find(id); cached != loaded_datasets_.end()) return cached->second;
    e = it->second;
  }
  auto loaded = std::make_shared<const models::Dataset>(e.path.empty() ? models::make_builtin_dataset(builtin_)
                                                                        : models::load_dataset(e.path));
  std::lock_guard lock(mutex_);
  return loaded_datasets_.emplace(id, std::move(loaded)).first->second;
}

}  // namespace ace::service
