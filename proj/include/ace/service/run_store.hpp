#pragma once

#include <nlohmann/json.hpp>

#include <condition_variable>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace ace::service {

inline constexpr int kSchemaVersion = 1;

enum class RunStatus { queued, running, succeeded, failed, rejected };

std::string to_string(RunStatus s);
RunStatus parse_run_status(const std::string& s);
bool is_terminal(RunStatus s);
/// queued -> running | rejected | failed, running -> succeeded | failed.
bool is_allowed_transition(RunStatus from, RunStatus to);

/// One progress event of a running job.
struct RunEvent {
  int index = 0;  // position in the run's event stream
  std::string type;  // "status" | "progress"
  nlohmann::json data;
};

/// Directory-per-run persistence: <root>/runs/<id>/record.json (replaced
/// atomically) plus <root>/runs/index.jsonl with one line per status change.
/// Ids are "run-" followed by a zero-padded counter, so they sort in
/// submission order and survive restarts.
class RunStore {
 public:
  /// Loads existing records. Queued or running records left by a previous
  /// process become failed with reason "interrupted".
  explicit RunStore(std::filesystem::path root);

  /// Creates a record with a fresh id and the given status (queued or rejected).
  nlohmann::json create(nlohmann::json request, RunStatus status, const std::string& reason = {});

  /// Throws NotFoundError.
  nlohmann::json get(const std::string& id) const;
  std::vector<nlohmann::json> list(std::optional<RunStatus> status = std::nullopt) const;

  /// Moves a run to `to` and merges `fields` into its record. Throws
  /// ValidationError for a transition that is not allowed.
  nlohmann::json transition(const std::string& id, RunStatus to, const nlohmann::json& fields = nlohmann::json::object());

  /// Records an attack iteration (kept in memory and streamed as an event).
  void progress(const std::string& id, int iteration, int total, double objective);

  /// Events with index >= from; blocks up to `wait_ms` for new ones when none
  /// are available and the run is not terminal. `done` is set once the run is
  /// terminal and every event has been returned.
  std::vector<RunEvent> events(const std::string& id, int from, int wait_ms, bool* done) const;

  std::filesystem::path run_dir(const std::string& id) const;
  const std::filesystem::path& runs_root() const { return runs_root_; }

 private:
  struct Entry {
    nlohmann::json record;
    std::vector<RunEvent> events;
  };

  void persist(const Entry& entry);
  void append_index(const nlohmann::json& record);
  void push_event(Entry& entry, const std::string& type, nlohmann::json data);
  const Entry& find(const std::string& id) const;
  Entry& find(const std::string& id);

  std::filesystem::path runs_root_;
  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::map<std::string, Entry> entries_;
  long next_id_ = 1;
};

/// UTC timestamp in ISO 8601 with a trailing Z.
std::string utc_now();

}  // namespace ace::service
