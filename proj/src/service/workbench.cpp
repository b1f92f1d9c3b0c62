#include "ace/service/workbench.hpp"

#include "ace/core/image_io.hpp"
#include "ace/engine/run_io.hpp"
#include "ace/metrics/report.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

namespace ace::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kImageArtifacts = {"input", "pre_explanation", "mask", "counterfactual"};

std::string string_field(const json& j, const char* key, const std::string& fallback, bool required,
                         std::vector<std::string>& problems) {
  if (!j.contains(key)) {
    if (required) problems.push_back(std::string(key) + " is required");
    return fallback;
  }
  if (!j.at(key).is_string()) {
    problems.push_back(std::string(key) + " must be a string");
    return fallback;
  }
  return j.at(key).get<std::string>();
}

std::string split_of(const models::Dataset& dataset, std::size_t index) {
  for (const auto& [name, indices] : dataset.splits)
    if (std::find(indices.begin(), indices.end(), index) != indices.end()) return name;
  return {};
}

std::size_t sample_index(const models::Dataset& dataset, const std::string& id) {
  const models::Sample& s = dataset.sample(id);
  return static_cast<std::size_t>(&s - dataset.samples.data());
}

json probabilities_json(const Vector<double>& p) { return std::vector<double>(p.data(), p.data() + p.size()); }

void check_geometry(const Geometry& a, const Geometry& b, const std::string& what) {
  require(a.channels == b.channels && a.height == b.height && a.width == b.width,
          what + " geometry " + std::to_string(a.channels) + "x" + std::to_string(a.height) + "x" +
              std::to_string(a.width) + " does not match " + std::to_string(b.channels) + "x" +
              std::to_string(b.height) + "x" + std::to_string(b.width));
}

json number_knob(const char* path, double lo, double hi, double def) {
  return {{"path", path}, {"type", "number"}, {"min", lo}, {"max", hi}, {"default", def}};
}

json int_knob(const char* path, long lo, long hi, long def, long step = 1) {
  return {{"path", path}, {"type", "integer"}, {"min", lo}, {"max", hi}, {"step", step}, {"default", def}};
}

json enum_knob(const char* path, std::vector<std::string> options, const std::string& def) {
  return {{"path", path}, {"type", "enum"}, {"options", std::move(options)}, {"default", def}};
}

constexpr int kMaxIterations = 1000;
constexpr double kMaxStep = 1000.0;
constexpr double kMaxLambda = 100.0;
constexpr double kMaxKappa = 100.0;
constexpr int kMaxDilation = 63;

}  // namespace

json knob_table(const config::AppConfig& base, int max_respacing) {
  const auto& a = base.explain.attack;
  const auto& r = base.explain.refine;
  return json::array({
      enum_knob("attack.method", {"pgd", "gd", "cw"}, engine::to_string(a.method)),
      int_knob("attack.num_iterations", 0, kMaxIterations, a.num_iterations),
      number_knob("attack.step_size", 0.0, kMaxStep, a.step_size),
      number_knob("attack.lambda_d", 0.0, kMaxLambda, a.lambda_d),
      enum_knob("attack.distance", {"l1", "l2"}, engine::to_string(a.distance)),
      int_knob("attack.tau", 0, max_respacing, a.tau),
      int_knob("attack.seed", 0, (1LL << 53), static_cast<long>(a.seed)),
      enum_knob("attack.distance_anchor", {"iterate", "filtered"}, engine::to_string(a.distance_anchor)),
      number_knob("attack.cw_kappa", 0.0, kMaxKappa, a.cw_kappa),
      json{{"path", "refine.enabled"}, {"type", "boolean"}, {"default", r.enabled}},
      int_knob("refine.dilation", 1, kMaxDilation, r.dilation, 2),
      number_knob("refine.threshold", 0.0, 1.0, r.threshold),
      int_knob("respacing", 1, max_respacing, base.explain.respacing),
  });
}

std::vector<std::string> check_knobs(const engine::ExplainConfig& c, int max_respacing) {
  std::vector<std::string> problems = c.validate();
  auto above = [&](bool bad, const std::string& what) {
    if (bad) problems.push_back(what);
  };
  above(c.attack.num_iterations > kMaxIterations, "attack.num_iterations must be <= " + std::to_string(kMaxIterations));
  above(c.attack.step_size > kMaxStep, "attack.step_size must be <= 1000");
  above(c.attack.lambda_d > kMaxLambda, "attack.lambda_d must be <= 100");
  above(c.attack.cw_kappa > kMaxKappa, "attack.cw_kappa must be <= 100");
  above(c.attack.seed > (1ULL << 53), "attack.seed must be <= 2^53");
  above(c.refine.dilation > kMaxDilation, "refine.dilation must be <= " + std::to_string(kMaxDilation));
  above(c.respacing > max_respacing, "respacing must not exceed the denoiser's " + std::to_string(max_respacing) +
                                         " steps");
  return problems;
}

Workbench::Workbench(WorkbenchOptions options) : options_(std::move(options)) {
  const auto& svc = options_.base.service;
  root_ = svc.data_root;
  fs::create_directories(root_ / "batches");
  registry_ = std::make_unique<AssetRegistry>(root_, options_.base.builtin, svc.strict_ingestion);
  store_ = std::make_unique<RunStore>(root_);
  for (const auto& entry : fs::directory_iterator(root_ / "batches")) {
    const std::string stem = entry.path().stem().string();
    if (stem.rfind("batch-", 0) == 0) next_batch_ = std::max(next_batch_, std::stol(stem.substr(6)) + 1);
  }
  queue_ = std::make_unique<JobQueue>(svc.compute_slots, static_cast<std::size_t>(svc.queue_capacity),
                                      [this](const std::string& id) { execute(id); }, !options_.start_workers);
}

Workbench::~Workbench() { queue_->stop(); }

json Workbench::submit(const json& request) {
  require(request.is_object(), "request body must be a JSON object");
  std::vector<std::string> problems;
  static const std::set<std::string> known = {"dataset", "instance", "target", "classifier", "denoiser", "seed",
                                              "config"};
  for (const auto& [key, value] : request.items())
    if (!known.count(key)) problems.push_back("unknown request field '" + key + "'");
  const std::string dataset_id = string_field(request, "dataset", "builtin", false, problems);
  const std::string instance = string_field(request, "instance", "", true, problems);
  const std::string classifier_id = string_field(request, "classifier", "", false, problems);
  const std::string denoiser_id = string_field(request, "denoiser", "", false, problems);
  int target = -1;
  if (!request.contains("target")) problems.push_back("target is required");
  else if (!request.at("target").is_number_integer()) problems.push_back("target must be an integer");
  else target = request.at("target").get<int>();
  json layer = json::object();
  if (request.contains("config")) {
    if (request.at("config").is_object()) layer["explain"] = request.at("config");
    else problems.push_back("config must be an object");
  }
  if (request.contains("seed")) {
    const auto& seed = request.at("seed");
    if (seed.is_number_unsigned() || (seed.is_number_integer() && seed.get<std::int64_t>() >= 0))
      layer["explain"]["attack"]["seed"] = seed.get<std::uint64_t>();
    else problems.push_back("seed must be a non-negative integer");
  }
  config::AppConfig effective = options_.base;
  bool config_ok = true;
  try {
    effective = config::overlay(options_.base, layer);
  } catch (const ConfigError& e) {
    config_ok = false;
    problems.insert(problems.end(), e.problems().begin(), e.problems().end());
  }

  const ModelEntry clf_entry = registry_->resolve_model(classifier_id, "classifier");
  const ModelEntry den_entry = registry_->resolve_model(denoiser_id, "denoiser");
  const auto clf = registry_->classifier(clf_entry.id);
  const auto den = registry_->denoiser(den_entry.id);
  if (config_ok) {
    const auto knob_problems = check_knobs(effective.explain, den->schedule().num_steps());
    problems.insert(problems.end(), knob_problems.begin(), knob_problems.end());
  }
  if (!problems.empty()) throw ConfigError(problems);
  const auto dataset = registry_->dataset(dataset_id);
  const models::Sample& sample = dataset->sample(instance);
  check_geometry(clf->geometry(), dataset->descriptor.geometry, "classifier");
  check_geometry(den->geometry(), dataset->descriptor.geometry, "denoiser");
  require(target >= 0 && target < clf->num_classes(),
          "target " + std::to_string(target) + " is outside [0, " + std::to_string(clf->num_classes()) + ")");

  const Label source = models::predict_label(*clf, sample.image);
  json echo = {{"dataset", dataset_id},
               {"instance", instance},
               {"split", split_of(*dataset, sample_index(*dataset, instance))},
               {"target", target},
               {"source", source},
               {"classifier", clf_entry.id},
               {"denoiser", den_entry.id},
               {"seed", effective.explain.attack.seed},
               {"config", effective.explain.to_json()}};
  if (source == target) return store_->create(std::move(echo), RunStatus::rejected, "target equals prediction");

  queue_->check_capacity();
  json record = store_->create(std::move(echo), RunStatus::queued);
  const std::string id = record.at("id");
  try {
    queue_->push(id);
  } catch (const std::exception& e) {
    store_->transition(id, RunStatus::failed, {{"reason", e.what()}});
    throw;
  }
  return record;
}

void Workbench::execute(const std::string& id) {
  json record;
  try {
    record = store_->transition(id, RunStatus::running);
  } catch (const std::exception& e) {
    spdlog::error("run {}: {}", id, e.what());
    return;
  }
  const fs::path dir = store_->run_dir(id);
  const fs::path staging = dir / "artifacts.tmp";
  try {
    const json& req = record.at("request");
    const auto clf = registry_->classifier(req.at("classifier"));
    const auto den = registry_->denoiser(req.at("denoiser"));
    const auto dataset = registry_->dataset(req.at("dataset"));
    const models::Sample& sample = dataset->sample(req.at("instance"));
    const auto cfg = engine::ExplainConfig::from_json(req.at("config"));
    const int total = cfg.attack.effective_iterations();
    spdlog::info("run {}: {} target {} ({} iterations)", id, sample.id, req.at("target").get<int>(), total);
    const auto result = engine::explain<float>(
        sample.image, req.at("target").get<Label>(), *clf, *den, den->schedule(), cfg,
        [&](int iteration, double objective) { store_->progress(id, iteration + 1, total, objective); });

    engine::ManifestOptions opts;
    opts.label_names = clf->label_names();
    opts.provenance = {{"classifier", req.at("classifier")},
                       {"denoiser", req.at("denoiser")},
                       {"dataset", req.at("dataset")},
                       {"instance", req.at("instance")},
                       {"run_id", id}};
    fs::remove_all(staging);
    engine::write_run(staging, result, opts);
    fs::remove_all(dir / "artifacts");
    fs::rename(staging, dir / "artifacts");

    json artifacts = json::object();
    for (const auto& name : kImageArtifacts) artifacts[name] = "artifacts/" + name + ".png";
    artifacts["manifest"] = "artifacts/manifest.json";
    store_->transition(id, RunStatus::succeeded,
                       {{"artifacts", artifacts},
                        {"flipped", result.flipped},
                        {"probabilities",
                         {{"input", probabilities_json(result.input_probs)},
                          {"counterfactual", probabilities_json(result.counterfactual_probs)}}},
                        {"pre_explanation",
                         {{"final_target_prob", result.pre_explanation.final_target_prob},
                          {"flipped", result.pre_explanation.flipped},
                          {"objective_trace", result.pre_explanation.objective_trace}}},
                        {"mask", {{"count", result.mask.count()}, {"pixels", result.mask.binary.size()}}},
                        {"timing",
                         {{"attack_seconds", result.timing.attack_seconds},
                          {"refine_seconds", result.timing.refine_seconds}}}});
    spdlog::info("run {}: succeeded, flipped={}", id, result.flipped);
  } catch (const std::exception& e) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    spdlog::error("run {}: failed: {}", id, e.what());
    try {
      store_->transition(id, RunStatus::failed, {{"reason", e.what()}});
    } catch (const std::exception& inner) {
      spdlog::error("run {}: {}", id, inner.what());
    }
  }
}

json Workbench::run(const std::string& id) const { return store_->get(id); }

json Workbench::runs(const std::string& status_filter) const {
  std::optional<RunStatus> status;
  if (!status_filter.empty()) status = parse_run_status(status_filter);
  return {{"schema_version", kSchemaVersion}, {"runs", store_->list(status)}};
}

fs::path Workbench::artifact(const std::string& id, const std::string& name) const {
  const json record = store_->get(id);
  std::string key = name;
  if (key.size() > 4 && key.substr(key.size() - 4) == ".png") key = key.substr(0, key.size() - 4);
  if (key == "manifest.json") key = "manifest";
  const auto& artifacts = record.at("artifacts");
  if (!artifacts.contains(key)) {
    if (record.at("status") != "succeeded")
      throw NotFoundError("run " + id + " has no artifacts (status " + record.at("status").get<std::string>() + ")");
    throw NotFoundError("run " + id + " has no artifact '" + name + "'");
  }
  return store_->run_dir(id) / artifacts.at(key).get<std::string>();
}

json Workbench::evaluate(const json& request) {
  require(request.is_object(), "request body must be a JSON object");
  std::vector<std::string> problems;
  static const std::set<std::string> known = {"runs",        "dataset",     "split",        "metrics",
                                              "seed",        "sfid_splits", "cout_steps",   "classifier",
                                              "ssl_encoder", "face_encoder", "fid_encoder"};
  for (const auto& [key, value] : request.items())
    if (!known.count(key)) problems.push_back("unknown request field '" + key + "'");
  metrics::EvaluationConfig mc;
  try {
    mc = metrics::EvaluationConfig::from_json(request);
    auto more = mc.validate();
    problems.insert(problems.end(), more.begin(), more.end());
  } catch (const ConfigError& e) {
    problems.insert(problems.end(), e.problems().begin(), e.problems().end());
  }
  const bool by_ids = request.contains("runs");
  if (by_ids == request.contains("split")) problems.push_back("give either runs or dataset+split");
  if (by_ids && !request.at("runs").is_array()) problems.push_back("runs must be an array of run ids");
  if (!problems.empty()) throw ConfigError(problems);

  std::vector<json> records;
  if (by_ids) {
    std::vector<std::string> missing;
    for (const auto& id : request.at("runs")) {
      try {
        records.push_back(store_->get(id.get<std::string>()));
      } catch (const std::exception&) {
        missing.push_back(id.dump());
      }
    }
    if (!missing.empty()) {
      std::string joined;
      for (const auto& m : missing) joined += (joined.empty() ? "" : ", ") + m;
      throw NotFoundError("unknown runs: " + joined);
    }
  } else {
    const std::string dataset = request.value("dataset", std::string("builtin"));
    const std::string split = request.at("split").get<std::string>();
    for (auto& r : store_->list())
      if (r.at("request").value("dataset", "") == dataset && r.at("request").value("split", "") == split &&
          r.at("status") != "rejected")
        records.push_back(std::move(r));
    if (records.empty()) throw NotFoundError("no runs on " + dataset + "/" + split);
  }
  std::vector<std::string> bad;
  std::set<std::string> classifiers;
  for (const auto& r : records) {
    if (r.at("status") != "succeeded") {
      std::string item = r.at("id").get<std::string>() + ": " + r.at("status").get<std::string>();
      if (r.contains("reason")) item += " (" + r.at("reason").get<std::string>() + ")";
      bad.push_back(item);
    }
    classifiers.insert(r.at("request").at("classifier").get<std::string>());
  }
  if (!bad.empty()) throw ItemizedError("batch includes runs that did not succeed", bad);
  if (records.empty()) throw ValidationError("batch is empty");

  const std::string clf_id = request.value("classifier", *classifiers.begin());
  require(request.contains("classifier") || classifiers.size() == 1,
          "runs use different classifiers; name one explicitly");
  auto optional_net = [&](const char* key) -> std::shared_ptr<const models::ConvClassifier<float>> {
    if (request.contains(key)) return registry_->classifier(request.at(key).get<std::string>());
    if (std::string(key) != "ssl_encoder") return nullptr;
    std::vector<std::string> ssl;
    for (const auto& m : registry_->models())
      if (m.kind == "ssl-encoder") ssl.push_back(m.id);
    return ssl.size() == 1 ? registry_->classifier(ssl.front()) : nullptr;
  };
  const auto assets = metrics::make_evaluation_assets(
      registry_->classifier(registry_->resolve_model(clf_id, "classifier").id), optional_net("ssl_encoder"),
      optional_net("face_encoder"), optional_net("fid_encoder"));

  std::vector<engine::StoredRun> stored;
  std::vector<std::string> ids;
  for (const auto& r : records) {
    ids.push_back(r.at("id"));
    stored.push_back(engine::read_run(store_->run_dir(ids.back()) / "artifacts"));
  }
  const metrics::MetricReport report = metrics::evaluate_runs(stored, assets, mc);

  std::lock_guard lock(batch_mutex_);
  char id[32];
  std::snprintf(id, sizeof id, "batch-%06ld", next_batch_++);
  json batch = {{"schema_version", kSchemaVersion},
                {"id", id},
                {"runs", ids},
                {"config", mc.to_json()},
                {"classifier", clf_id},
                {"report", report.to_json()},
                {"created", utc_now()}};
  engine::write_file_atomic(root_ / "batches" / (std::string(id) + ".json"), batch.dump(2) + "\n");
  return batch;
}

json Workbench::batch(const std::string& id) const {
  const fs::path path = root_ / "batches" / (id + ".json");
  if (id.find('/') != std::string::npos || !fs::exists(path)) throw NotFoundError("batch '" + id + "' not found");
  std::ifstream in(path);
  return json::parse(in);
}

json Workbench::datasets() const {
  json list = json::array();
  for (const auto& d : registry_->datasets()) list.push_back({{"id", d.id}, {"descriptor", d.descriptor}});
  return {{"schema_version", kSchemaVersion}, {"datasets", list}};
}

json Workbench::instances(const std::string& dataset_id, const std::string& split, std::size_t offset,
                          std::size_t limit) {
  const auto dataset = registry_->dataset(dataset_id);
  if (!dataset->splits.count(split)) throw NotFoundError("dataset '" + dataset_id + "' has no split '" + split + "'");
  const auto& indices = dataset->split(split);
  json items = json::array();
  const auto& names = dataset->descriptor.class_names;
  for (std::size_t i = offset; i < indices.size() && i < offset + limit; ++i) {
    const auto& s = dataset->samples[indices[i]];
    items.push_back({{"id", s.id},
                     {"label", s.label},
                     {"label_name", s.label < static_cast<Label>(names.size()) ? names[s.label] : ""}});
  }
  return {{"schema_version", kSchemaVersion}, {"dataset", dataset_id}, {"split", split},
          {"total", indices.size()},          {"offset", offset},      {"instances", items}};
}

std::vector<std::uint8_t> Workbench::instance_png(const std::string& dataset_id, const std::string& instance) {
  const auto dataset = registry_->dataset(dataset_id);
  const auto& s = dataset->sample(instance);
  return encode_png(s.image.cast<double>(), dataset->descriptor.geometry);
}

json Workbench::models() const {
  json list = json::array();
  for (const auto& m : registry_->models()) {
    json entry = m.to_json();
    if (m.kind == "denoiser") {
      try {
        entry["schedule_steps"] =
            const_cast<AssetRegistry&>(*registry_).denoiser(m.id)->schedule().num_steps();
      } catch (const std::exception&) {
      }
    }
    list.push_back(std::move(entry));
  }
  return {{"schema_version", kSchemaVersion}, {"models", list}};
}

json Workbench::register_model(const json& request) {
  require(request.is_object() && request.contains("path") && request.at("path").is_string(),
          "request needs a string field 'path'");
  std::optional<std::string> id;
  if (request.contains("id")) {
    require(request.at("id").is_string(), "id must be a string");
    id = request.at("id").get<std::string>();
  }
  json out = registry_->register_model(request.at("path").get<std::string>(), id).to_json();
  out["schema_version"] = kSchemaVersion;
  return out;
}

json Workbench::health() const {
  const QueueState q = queue_->state();
  return {{"schema_version", kSchemaVersion},
          {"status", "ok"},
          {"queue", {{"pending", q.pending}, {"active", q.active}, {"slots", q.slots}, {"capacity", q.capacity}}},
          {"models", registry_->models().size()},
          {"datasets", registry_->datasets().size()}};
}

json Workbench::capabilities() const {
  int max_respacing = 0;
  for (const auto& m : registry_->models())
    if (m.kind == "denoiser") {
      try {
        max_respacing = std::max(max_respacing,
                                 const_cast<AssetRegistry&>(*registry_).denoiser(m.id)->schedule().num_steps());
      } catch (const std::exception&) {
      }
    }
  if (max_respacing == 0) max_respacing = 1000;
  json by_method = json::object();
  for (auto m : {engine::AttackMethod::pgd, engine::AttackMethod::gd, engine::AttackMethod::cw})
    by_method[engine::to_string(m)] = {{"step_size", engine::AttackConfig::default_step_size(m)},
                                       {"iterations_factor", m == engine::AttackMethod::cw ? 2 : 1}};
  json by_norm = json::object();
  for (auto n : {engine::DistanceNorm::l1, engine::DistanceNorm::l2})
    by_norm[engine::to_string(n)] = {{"lambda_d", engine::AttackConfig::default_lambda_d(n)}};
  return {{"schema_version", kSchemaVersion},
          {"knobs", knob_table(options_.base, max_respacing)},
          {"defaults", options_.base.explain.to_json()},
          {"method_defaults", by_method},
          {"norm_defaults", by_norm},
          {"run_statuses", {"queued", "running", "succeeded", "failed", "rejected"}},
          {"artifacts", kImageArtifacts},
          {"metrics", metrics::metric_names()},
          {"model_kinds", kModelKinds}};
}

}  // namespace ace::service
