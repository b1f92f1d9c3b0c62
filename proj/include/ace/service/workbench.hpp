#pragma once

#include "ace/config/config.hpp"
#include "ace/service/job_queue.hpp"
#include "ace/service/registry.hpp"
#include "ace/service/run_store.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace ace::service {

/// Validation failure listing one entry per offending item.
class ItemizedError : public ValidationError {
 public:
  ItemizedError(const std::string& message, std::vector<std::string> items)
      : ValidationError(message), items_(std::move(items)) {}
  const std::vector<std::string>& items() const { return items_; }

 private:
  std::vector<std::string> items_;
};

struct WorkbenchOptions {
  /// Base configuration; requests overlay their "config" on its explain section.
  config::AppConfig base;
  /// When false the queue holds jobs until queue().resume().
  bool start_workers = true;
};

/// Service logic behind the HTTP API. Every method returns a JSON payload
/// carrying schema_version and throws ValidationError, ConfigError,
/// NotFoundError or QueueFullError.
class Workbench {
 public:
  explicit Workbench(WorkbenchOptions options);
  ~Workbench();
  Workbench(const Workbench&) = delete;
  Workbench& operator=(const Workbench&) = delete;

  /// Request: {dataset?, instance, target, classifier?, denoiser?, seed?, config?}
  /// where config overlays the explain section (attack, refine, respacing).
  /// Returns the created record: queued, or rejected when the target equals
  /// the classifier's prediction.
  nlohmann::json submit(const nlohmann::json& request);

  nlohmann::json run(const std::string& id) const;
  nlohmann::json runs(const std::string& status_filter = {}) const;
  /// Path of a stored artifact ("input", "pre_explanation", "mask",
  /// "counterfactual", with or without ".png", or "manifest").
  std::filesystem::path artifact(const std::string& id, const std::string& name) const;

  /// Request: {runs: [ids]} or {dataset, split}, plus metrics?, seed?,
  /// sfid_splits?, cout_steps?, classifier?, ssl_encoder?, face_encoder?,
  /// fid_encoder?. Persists and returns the batch record.
  nlohmann::json evaluate(const nlohmann::json& request);
  nlohmann::json batch(const std::string& id) const;

  nlohmann::json datasets() const;
  nlohmann::json instances(const std::string& dataset, const std::string& split, std::size_t offset,
                           std::size_t limit);
  std::vector<std::uint8_t> instance_png(const std::string& dataset, const std::string& instance);

  nlohmann::json models() const;
  /// Request: {path, id?}.
  nlohmann::json register_model(const nlohmann::json& request);

  nlohmann::json health() const;
  nlohmann::json capabilities() const;

  RunStore& store() { return *store_; }
  AssetRegistry& registry() { return *registry_; }
  JobQueue& queue() { return *queue_; }
  const config::AppConfig& base_config() const { return options_.base; }

  /// Blocks until the job queue is drained.
  void wait_idle() { queue_->wait_idle(); }

 private:
  void execute(const std::string& id);

  WorkbenchOptions options_;
  std::filesystem::path root_;
  std::unique_ptr<AssetRegistry> registry_;
  std::unique_ptr<RunStore> store_;
  std::unique_ptr<JobQueue> queue_;
  std::mutex batch_mutex_;
  long next_batch_ = 1;
};

/// Knob table published by capabilities(): per knob its path under the
/// explain section, type, range or options and default.
nlohmann::json knob_table(const config::AppConfig& base, int max_respacing);

/// Problems of an explain config against the published knob ranges.
std::vector<std::string> check_knobs(const engine::ExplainConfig& config, int max_respacing);

}  // namespace ace::service
