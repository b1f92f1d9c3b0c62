#include "ace/service/run_store.hpp"

#include "ace/core/errors.hpp"
#include "ace/engine/run_io.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

namespace ace::service {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kStatusNames = {"queued", "running", "succeeded", "failed", "rejected"};

}  // namespace

std::string to_string(RunStatus s) { return kStatusNames[static_cast<std::size_t>(s)]; }

RunStatus parse_run_status(const std::string& s) {
  for (std::size_t i = 0; i < kStatusNames.size(); ++i)
    if (kStatusNames[i] == s) return static_cast<RunStatus>(i);
  throw ValidationError("unknown run status '" + s + "'");
}

bool is_terminal(RunStatus s) {
  return s == RunStatus::succeeded || s == RunStatus::failed || s == RunStatus::rejected;
}

bool is_allowed_transition(RunStatus from, RunStatus to) {
  switch (from) {
    case RunStatus::queued:
      return to == RunStatus::running || to == RunStatus::rejected || to == RunStatus::failed;
    case RunStatus::running:
      return to == RunStatus::succeeded || to == RunStatus::failed;
    default:
      return false;
  }
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

RunStore::RunStore(fs::path root) : runs_root_(std::move(root) / "runs") {
  fs::create_directories(runs_root_);
  for (const auto& dir : fs::directory_iterator(runs_root_)) {
    const fs::path file = dir.path() / "record.json";
    if (!dir.is_directory() || !fs::exists(file)) continue;
    std::ifstream in(file);
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(in);
    } catch (const std::exception&) {
      continue;
    }
    const std::string id = record.value("id", std::string{});
    if (id.rfind("run-", 0) != 0) continue;
    next_id_ = std::max(next_id_, std::stol(id.substr(4)) + 1);
    Entry entry{record, {}};
    const RunStatus status = parse_run_status(record.at("status"));
    if (status == RunStatus::queued || status == RunStatus::running) {
      entry.record["status"] = "failed";
      entry.record["reason"] = "interrupted";
      entry.record["timestamps"]["finished"] = utc_now();
      persist(entry);
      append_index(entry.record);
    }
    nlohmann::json data = {{"status", entry.record.at("status")}};
    if (entry.record.contains("reason")) data["reason"] = entry.record["reason"];
    push_event(entry, "status", std::move(data));
    entries_.emplace(id, std::move(entry));
  }
}

fs::path RunStore::run_dir(const std::string& id) const { return runs_root_ / id; }

void RunStore::persist(const Entry& entry) {
  const std::string id = entry.record.at("id");
  fs::create_directories(run_dir(id));
  engine::write_file_atomic(run_dir(id) / "record.json", entry.record.dump(2) + "\n");
}

void RunStore::append_index(const nlohmann::json& record) {
  const nlohmann::json line = {{"id", record.at("id")}, {"status", record.at("status")}, {"time", utc_now()}};
  std::ofstream out(runs_root_ / "index.jsonl", std::ios::app);
  out << line.dump() << "\n";
}

void RunStore::push_event(Entry& entry, const std::string& type, nlohmann::json data) {
  entry.events.push_back({static_cast<int>(entry.events.size()), type, std::move(data)});
  changed_.notify_all();
}

const RunStore::Entry& RunStore::find(const std::string& id) const {
  const auto it = entries_.find(id);
  if (it == entries_.end()) throw NotFoundError("run '" + id + "' not found");
  return it->second;
}

RunStore::Entry& RunStore::find(const std::string& id) {
  return const_cast<Entry&>(static_cast<const RunStore*>(this)->find(id));
}

nlohmann::json RunStore::create(nlohmann::json request, RunStatus status, const std::string& reason) {
  require(status == RunStatus::queued || status == RunStatus::rejected, "runs start queued or rejected");
  std::lock_guard lock(mutex_);
  char id[32];
  std::snprintf(id, sizeof id, "run-%06ld", next_id_++);
  const std::string now = utc_now();
  nlohmann::json record = {{"schema_version", kSchemaVersion},
                           {"id", id},
                           {"status", to_string(status)},
                           {"request", std::move(request)},
                           {"timestamps", {{"created", now}}},
                           {"progress", {{"iteration", 0}, {"total", 0}}},
                           {"artifacts", nlohmann::json::object()}};
  if (!reason.empty()) record["reason"] = reason;
  if (status == RunStatus::rejected) record["timestamps"]["finished"] = now;
  Entry entry{record, {}};
  push_event(entry, "status", {{"status", to_string(status)}});
  persist(entry);
  append_index(record);
  entries_.emplace(id, std::move(entry));
  return record;
}

nlohmann::json RunStore::get(const std::string& id) const {
  std::lock_guard lock(mutex_);
  return find(id).record;
}

std::vector<nlohmann::json> RunStore::list(std::optional<RunStatus> status) const {
  std::lock_guard lock(mutex_);
  std::vector<nlohmann::json> out;
  for (const auto& [id, entry] : entries_)
    if (!status || entry.record.at("status") == to_string(*status)) out.push_back(entry.record);
  return out;
}

nlohmann::json RunStore::transition(const std::string& id, RunStatus to, const nlohmann::json& fields) {
  std::lock_guard lock(mutex_);
  Entry& entry = find(id);
  const RunStatus from = parse_run_status(entry.record.at("status"));
  require(is_allowed_transition(from, to), "run " + id + " cannot move from " + to_string(from) + " to " + to_string(to));
  entry.record.merge_patch(fields);
  entry.record["status"] = to_string(to);
  entry.record["timestamps"][to == RunStatus::running ? "started" : "finished"] = utc_now();
  nlohmann::json data = {{"status", to_string(to)}};
  if (entry.record.contains("reason")) data["reason"] = entry.record["reason"];
  push_event(entry, "status", std::move(data));
  persist(entry);
  append_index(entry.record);
  return entry.record;
}

void RunStore::progress(const std::string& id, int iteration, int total, double objective) {
  std::lock_guard lock(mutex_);
  Entry& entry = find(id);
  entry.record["progress"] = {{"iteration", iteration}, {"total", total}};
  push_event(entry, "progress", {{"iteration", iteration}, {"total", total}, {"objective", objective}});
}

std::vector<RunEvent> RunStore::events(const std::string& id, int from, int wait_ms, bool* done) const {
  std::unique_lock lock(mutex_);
  const Entry* entry = &find(id);
  auto ready = [&] {
    return static_cast<int>(entry->events.size()) > from ||
           is_terminal(parse_run_status(entry->record.at("status")));
  };
  if (!ready()) changed_.wait_for(lock, std::chrono::milliseconds(wait_ms), ready);
  std::vector<RunEvent> out;
  for (int i = std::max(from, 0); i < static_cast<int>(entry->events.size()); ++i) out.push_back(entry->events[i]);
  if (done) *done = is_terminal(parse_run_status(entry->record.at("status")));
  return out;
}

}  // namespace ace::service
