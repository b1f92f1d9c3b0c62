// ace: train assets, explain images, score runs and serve the workbench.

#include "ace/config/config.hpp"
#include "ace/core/errors.hpp"
#include "ace/core/image_io.hpp"
#include "ace/diffusion/trainer.hpp"
#include "ace/engine/run_io.hpp"
#include "ace/metrics/report.hpp"
#include "ace/models/ssl.hpp"
#include "ace/models/training.hpp"
#include "ace/service/http.hpp"
#include "ace/service/workbench.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitNotFound = 4;

/// Config sources shared by every subcommand.
struct ConfigFlags {
  std::string preset = "desk";
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App& cmd) {
    cmd.add_option("--preset", preset, "Named preset applied over the defaults")
        ->check(CLI::IsMember(ace::config::preset_names()))
        ->capture_default_str();
    cmd.add_option("--config", config_file, "JSON config file applied over the preset");
    cmd.add_option("--set", overrides, "Override a config key, e.g. --set explain.attack.tau=8 (repeatable)");
    cmd.add_option("--seed", seed, "Seed of the command's stochastic stage");
  }

  /// defaults < preset < config file < --set < dedicated flags.
  ace::config::AppConfig resolve(json flag_layer = json::object()) const {
    std::vector<json> layers = {ace::config::preset(preset)};
    if (!config_file.empty()) layers.push_back(ace::config::read_config_file(config_file));
    for (const auto& o : overrides) layers.push_back(ace::config::parse_override(o));
    layers.push_back(std::move(flag_layer));
    return ace::config::resolve(layers);
  }

  json provenance() const {
    json p = {{"preset", preset}, {"overrides", overrides}};
    p["config_file"] = config_file.empty() ? json(nullptr) : json(config_file);
    p["seed"] = seed ? json(*seed) : json(nullptr);
    return p;
  }
};

void set_path(json& j, const std::vector<std::string>& path, json value) {
  json* node = &j;
  for (const auto& key : path) node = &(*node)[key];
  *node = std::move(value);
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw ace::NotFoundError(what + " " + path + " not found");
}

ace::models::Dataset open_dataset(const std::string& spec, const ace::config::AppConfig& cfg) {
  if (spec == "builtin") return ace::models::make_builtin_dataset(cfg.builtin);
  if (!fs::exists(fs::path(spec) / "dataset.json")) throw ace::NotFoundError("dataset " + spec + " not found");
  return ace::models::load_dataset(spec);
}

std::shared_ptr<const ace::models::ConvClassifier<float>> open_net(const std::string& path, const std::string& what) {
  if (path.empty()) return nullptr;
  require_file(path, what);
  return std::make_shared<const ace::models::ConvClassifier<float>>(ace::models::load_classifier<float>(path));
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  ace::engine::write_file_atomic(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------- training

struct TrainDdpmArgs {
  ConfigFlags config;
  std::string dataset = "builtin";
  std::string out;
};

int train_ddpm(const TrainDdpmArgs& a) {
  json flags = json::object();
  if (a.config.seed) set_path(flags, {"train_ddpm", "seed"}, *a.config.seed);
  const auto cfg = a.config.resolve(flags);
  const auto dataset = open_dataset(a.dataset, cfg);
  const auto images = dataset.images("train");
  const auto& t = cfg.train_ddpm;
  spdlog::info("training denoiser on {} images, {} iterations", images.size(), t.iterations);
  ace::diffusion::DenoiserTrainingLog log;
  const int every = std::max(1, t.iterations / 20);
  auto model = ace::diffusion::train_denoiser<float>(images, dataset.descriptor.geometry, t, &log,
                                                     [&](int it, double loss) {
                                                       if ((it + 1) % every == 0)
                                                         spdlog::info("iteration {}/{} loss {:.5f}", it + 1,
                                                                      t.iterations, loss);
                                                     });
  model.metadata = {{"dataset", a.dataset},
                    {"training", t.to_json()},
                    {"final_loss", log.loss.empty() ? 0.0 : log.loss.back()},
                    {"provenance", a.config.provenance()}};
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  ace::diffusion::save_denoiser(a.out, model);
  std::cout << json{{"model", a.out}, {"kind", "denoiser"}, {"final_loss", model.metadata["final_loss"]}}.dump()
            << "\n";
  return 0;
}

struct TrainClassifierArgs {
  ConfigFlags config;
  std::string dataset = "builtin";
  std::string out;
  std::string kind = "classifier";
};

int train_classifier(const TrainClassifierArgs& a) {
  json flags = json::object();
  const bool ssl = a.kind == "ssl-encoder";
  if (a.config.seed) set_path(flags, {ssl ? "train_ssl" : "train_classifier", "seed"}, *a.config.seed);
  const auto cfg = a.config.resolve(flags);
  const auto dataset = open_dataset(a.dataset, cfg);
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  json summary = {{"model", a.out}, {"kind", a.kind}};
  auto progress = [](int step, double loss) {
    if ((step + 1) % 100 == 0) spdlog::info("step {} loss {:.5f}", step + 1, loss);
  };
  if (ssl) {
    ace::models::SslTrainingLog log;
    auto net = ace::models::train_ssl_encoder(dataset, cfg.train_ssl, &log, progress);
    net.metadata = {{"dataset", a.dataset},
                    {"training", cfg.train_ssl.to_json()},
                    {"feature_spread", log.feature_spread},
                    {"provenance", a.config.provenance()}};
    ace::models::save_classifier(a.out, net, "ssl-encoder");
    summary["feature_spread"] = log.feature_spread;
  } else {
    ace::models::ClassifierTrainingLog log;
    auto net = ace::models::train_classifier<float>(dataset, cfg.train_classifier, &log, progress);
    net.metadata = {{"dataset", a.dataset},
                    {"training", cfg.train_classifier.to_json()},
                    {"heldout_accuracy", log.heldout_accuracy},
                    {"provenance", a.config.provenance()}};
    ace::models::save_classifier(a.out, net, "classifier");
    summary["heldout_accuracy"] = log.heldout_accuracy;
  }
  std::cout << summary.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------- explain

struct InputArgs {
  std::string classifier;
  std::string denoiser;
  std::string image;
  std::string dataset = "builtin";
  std::string instance;
  std::string target;

  void attach(CLI::App& cmd) {
    cmd.add_option("--classifier", classifier, "Classifier checkpoint")->required();
    cmd.add_option("--denoiser", denoiser, "Denoiser checkpoint")->required();
    cmd.add_option("--image", image, "Input PNG");
    cmd.add_option("--dataset", dataset, "Dataset directory or 'builtin'")->capture_default_str();
    cmd.add_option("--instance", instance, "Instance id within --dataset");
    cmd.add_option("--target", target,
                   "Target label index, or 'next' for (prediction + 1) mod classes")
        ->required();
  }
};

struct LoadedModels {
  std::shared_ptr<const ace::models::ConvClassifier<float>> classifier;
  std::shared_ptr<const ace::diffusion::DiffusionModel<float>> denoiser;
};

LoadedModels load_models(const InputArgs& in) {
  require_file(in.classifier, "classifier checkpoint");
  require_file(in.denoiser, "denoiser checkpoint");
  return {std::make_shared<const ace::models::ConvClassifier<float>>(ace::models::load_classifier<float>(in.classifier)),
          std::make_shared<const ace::diffusion::DiffusionModel<float>>(
              ace::diffusion::load_denoiser<float>(in.denoiser))};
}

ace::Label resolve_target(const std::string& spec, ace::Label prediction, int classes) {
  if (spec == "next") return (prediction + 1) % classes;
  try {
    std::size_t used = 0;
    const int t = std::stoi(spec, &used);
    if (used == spec.size()) {
      ace::require(t >= 0 && t < classes,
                   "target " + spec + " is outside [0, " + std::to_string(classes) + ")");
      return t;
    }
  } catch (const std::logic_error&) {
  }
  throw ace::ConfigError("--target must be a label index or 'next'");
}

struct Instance {
  std::string id;
  ace::ImageArray<float> image;
  json source;
};

void check_geometry(const ace::Geometry& a, const ace::Geometry& b, const std::string& what) {
  ace::require(a.channels == b.channels && a.height == b.height && a.width == b.width,
               what + " geometry does not match the input image");
}

struct ExplainArgs {
  ConfigFlags config;
  InputArgs input;
  std::string out;
  std::string split;
  std::size_t limit = 0;
  bool canonical = false;
};

json explain_provenance(const ExplainArgs& a, const Instance& inst) {
  json p = a.config.provenance();
  p["classifier"] = a.input.classifier;
  p["denoiser"] = a.input.denoiser;
  p["input"] = inst.source;
  p["target_spec"] = a.input.target;
  return p;
}

int explain(const ExplainArgs& a) {
  json flags = json::object();
  if (a.config.seed) set_path(flags, {"explain", "attack", "seed"}, *a.config.seed);
  const auto cfg = a.config.resolve(flags);
  const int modes = !a.input.image.empty() + !a.input.instance.empty() + !a.split.empty();
  if (modes != 1) throw ace::ConfigError("give exactly one of --image, --instance or --split");
  const auto models = load_models(a.input);

  std::vector<Instance> instances;
  if (!a.input.image.empty()) {
    require_file(a.input.image, "image");
    const auto decoded = ace::read_png(a.input.image);
    check_geometry(models.classifier->geometry(), decoded.geometry, "classifier");
    instances.push_back({fs::path(a.input.image).stem().string(), decoded.pixels.cast<float>(),
                         {{"image", a.input.image}}});
  } else {
    const auto dataset = open_dataset(a.input.dataset, cfg);
    if (!a.input.instance.empty()) {
      const auto& s = dataset.sample(a.input.instance);
      instances.push_back({s.id, s.image, {{"dataset", a.input.dataset}, {"instance", s.id}}});
    } else {
      if (!dataset.splits.count(a.split)) throw ace::NotFoundError("dataset has no split '" + a.split + "'");
      for (std::size_t idx : dataset.split(a.split)) {
        if (a.limit && instances.size() >= a.limit) break;
        const auto& s = dataset.samples[idx];
        instances.push_back({s.id, s.image, {{"dataset", a.input.dataset}, {"instance", s.id}, {"split", a.split}}});
      }
    }
    check_geometry(models.classifier->geometry(), dataset.descriptor.geometry, "classifier");
  }
  check_geometry(models.denoiser->geometry(), models.classifier->geometry(), "denoiser");
  const auto problems = ace::service::check_knobs(cfg.explain, models.denoiser->schedule().num_steps());
  if (!problems.empty()) throw ace::ConfigError(problems);

  const bool batch = !a.split.empty();
  std::size_t flipped = 0, done = 0, rejected = 0;
  json runs = json::array();
  for (const auto& inst : instances) {
    const ace::Label prediction = ace::models::predict_label(*models.classifier, inst.image);
    const ace::Label target = resolve_target(a.input.target, prediction, models.classifier->num_classes());
    if (target == prediction) {
      if (!batch) throw ace::ValidationError("target equals prediction");
      ++rejected;
      runs.push_back({{"instance", inst.id}, {"status", "rejected"}, {"reason", "target equals prediction"}});
      continue;
    }
    const auto result = ace::engine::explain<float>(inst.image, target, *models.classifier, *models.denoiser,
                                                    models.denoiser->schedule(), cfg.explain);
    ace::engine::ManifestOptions opts;
    opts.canonical = a.canonical;
    opts.label_names = models.classifier->label_names();
    opts.provenance = explain_provenance(a, inst);
    opts.provenance["effective_config"] = cfg.to_json();
    const fs::path dir = batch ? fs::path(a.out) / inst.id : fs::path(a.out);
    ace::engine::write_run(dir, result, opts);
    ++done;
    flipped += result.flipped;
    runs.push_back({{"instance", inst.id}, {"status", "succeeded"}, {"flipped", result.flipped}, {"dir", dir}});
    spdlog::info("{}: {} -> {} flipped={} ({}/{})", inst.id, prediction, target, result.flipped, done + rejected,
                 instances.size());
  }
  json summary = {{"runs", done}, {"flipped", flipped}, {"rejected", rejected}, {"out", a.out}};
  if (batch) {
    summary["flip_rate"] = done ? static_cast<double>(flipped) / static_cast<double>(done) : 0.0;
    write_json(fs::path(a.out) / "batch.json", {{"schema_version", ace::engine::kManifestSchemaVersion},
                                                {"summary", summary},
                                                {"runs", runs}});
  }
  std::cout << summary.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------- diversity

struct DiversityArgs {
  ConfigFlags config;
  InputArgs input;
  std::string out;
  std::optional<int> k;
  std::vector<std::uint64_t> seeds;
  std::string ssl_encoder;
  bool canonical = false;
};

int diversity(const DiversityArgs& a) {
  json flags = json::object();
  if (a.config.seed) set_path(flags, {"explain", "attack", "seed"}, *a.config.seed);
  if (a.k) set_path(flags, {"diversity", "k"}, *a.k);
  const auto cfg = a.config.resolve(flags);
  if (a.input.image.empty() == a.input.instance.empty()) throw ace::ConfigError("give exactly one of --image or --instance");
  const auto models = load_models(a.input);
  Instance inst;
  if (!a.input.image.empty()) {
    require_file(a.input.image, "image");
    const auto decoded = ace::read_png(a.input.image);
    inst = {fs::path(a.input.image).stem().string(), decoded.pixels.cast<float>(), {{"image", a.input.image}}};
  } else {
    const auto dataset = open_dataset(a.input.dataset, cfg);
    const auto& s = dataset.sample(a.input.instance);
    inst = {s.id, s.image, {{"dataset", a.input.dataset}, {"instance", s.id}}};
  }
  const auto problems = cfg.diversity.validate(models.denoiser->schedule().num_steps());
  if (!problems.empty()) throw ace::ConfigError(problems);
  const ace::Label prediction = ace::models::predict_label(*models.classifier, inst.image);
  const ace::Label target = resolve_target(a.input.target, prediction, models.classifier->num_classes());
  if (target == prediction) throw ace::ValidationError("target equals prediction");
  const auto seeds = a.seeds.empty() ? ace::engine::diversity_seeds(cfg.explain.attack.seed, cfg.diversity_k) : a.seeds;
  const auto results = ace::engine::diverse_explanations<float>(inst.image, target, seeds, *models.classifier,
                                                                *models.denoiser, models.denoiser->schedule(),
                                                                cfg.explain, cfg.diversity);
  const auto net = a.ssl_encoder.empty() ? models.classifier : open_net(a.ssl_encoder, "ssl encoder");
  const ace::metrics::PerceptualDistance lpips(net);
  std::vector<ace::ImageArray<double>> images;
  json runs = json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    ace::engine::ManifestOptions opts;
    opts.canonical = a.canonical;
    opts.label_names = models.classifier->label_names();
    opts.provenance = a.config.provenance();
    opts.provenance["input"] = inst.source;
    opts.provenance["classifier"] = a.input.classifier;
    opts.provenance["denoiser"] = a.input.denoiser;
    opts.provenance["diversity_seed"] = seeds[i];
    opts.provenance["effective_config"] = cfg.to_json();
    const fs::path dir = fs::path(a.out) / ("seed-" + std::to_string(i));
    ace::engine::write_run(dir, results[i], opts);
    images.push_back(results[i].counterfactual.template cast<double>());
    runs.push_back({{"dir", dir}, {"seed", seeds[i]}, {"respacing", results[i].refine_respacing},
                    {"tau", results[i].refine_tau}, {"flipped", results[i].flipped}});
  }
  const double sigma = ace::metrics::diversity(images, [&](const auto& x, const auto& y) { return lpips(x, y); });
  const json report = {{"schema_version", ace::metrics::kReportSchemaVersion},
                       {"sigma", sigma},
                       {"distance", a.ssl_encoder.empty() ? "perceptual:classifier" : "perceptual:ssl"},
                       {"runs", runs}};
  write_json(fs::path(a.out) / "diversity.json", report);
  std::cout << json{{"sigma", sigma}, {"runs", runs.size()}, {"out", a.out}}.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  ConfigFlags config;
  std::string runs;
  std::string metrics;
  std::string classifier;
  std::string ssl_encoder;
  std::string face_encoder;
  std::string fid_encoder;
  std::string out;
};

int evaluate(const EvaluateArgs& a) {
  json flags = json::object();
  if (a.config.seed) set_path(flags, {"metrics", "seed"}, *a.config.seed);
  if (!a.metrics.empty()) {
    const auto names = ace::metrics::EvaluationConfig::parse_metric_list(a.metrics);
    set_path(flags, {"metrics", "metrics"}, std::vector<std::string>(names.begin(), names.end()));
  }
  const auto cfg = a.config.resolve(flags);
  if (!fs::is_directory(a.runs)) throw ace::NotFoundError("runs directory " + a.runs + " not found");
  std::vector<ace::engine::StoredRun> runs;
  for (const auto& dir : ace::engine::list_runs(a.runs)) runs.push_back(ace::engine::read_run(dir));
  if (runs.empty()) throw ace::NotFoundError("no runs under " + a.runs);
  const auto assets = ace::metrics::make_evaluation_assets(open_net(a.classifier, "classifier checkpoint"),
                                                           open_net(a.ssl_encoder, "ssl encoder"),
                                                           open_net(a.face_encoder, "face encoder"),
                                                           open_net(a.fid_encoder, "fid encoder"));
  const auto report = ace::metrics::evaluate_runs(runs, assets, cfg.metrics);
  json j = report.to_json();
  j["config"] = cfg.metrics.to_json();
  const std::string text = j.dump(2) + "\n";
  if (!a.out.empty()) {
    if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
    ace::engine::write_file_atomic(a.out, text);
  }
  std::cout << text;
  return 0;
}

// ---------------------------------------------------------------- ingest

struct IngestArgs {
  ConfigFlags config;
  std::string images;
  std::string labels;
  std::string out;
  std::string name;
  bool builtin = false;
  std::optional<bool> strict;
};

int ingest(const IngestArgs& a) {
  json flags = json::object();
  if (a.config.seed) set_path(flags, {"dataset", "builtin", "seed"}, *a.config.seed);
  if (a.strict) set_path(flags, {"service", "strict_ingestion"}, *a.strict);
  const auto cfg = a.config.resolve(flags);
  json summary = {{"out", a.out}};
  if (a.builtin) {
    if (!a.images.empty() || !a.labels.empty()) throw ace::ConfigError("--builtin takes no --images or --labels");
    const auto dataset = ace::models::make_builtin_dataset(cfg.builtin);
    ace::models::save_dataset(a.out, dataset);
    summary["accepted"] = dataset.samples.size();
  } else {
    if (a.images.empty()) throw ace::ConfigError("--images is required unless --builtin is given");
    if (!fs::is_directory(a.images)) throw ace::NotFoundError("image directory " + a.images + " not found");
    const fs::path labels = a.labels.empty() ? fs::path(a.images) / "labels.csv" : fs::path(a.labels);
    require_file(labels.string(), "label manifest");
    ace::models::IngestOptions options;
    options.strict = cfg.service.strict_ingestion;
    options.split_seed = a.config.seed.value_or(0);
    options.name = a.name.empty() ? fs::path(a.out).filename().string() : a.name;
    ace::models::IngestReport report;
    const auto dataset = ace::models::ingest_dataset(a.images, labels, options, &report);
    ace::models::save_dataset(a.out, dataset);
    for (const auto& w : report.warnings) spdlog::warn("{}", w);
    summary["report"] = report.to_json();
    summary["accepted"] = report.accepted;
  }
  std::cout << summary.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------- serve

struct ServeArgs {
  ConfigFlags config;
  std::string listen;
  std::string data_root;
  std::optional<int> slots;
  std::optional<bool> strict;
  std::string static_dir;
  std::vector<std::string> register_models;
};

ace::service::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int serve(const ServeArgs& a) {
  json flags = json::object();
  if (!a.listen.empty()) {
    const auto [host, port] = ace::service::parse_listen_address(a.listen);
    set_path(flags, {"service", "host"}, host);
    set_path(flags, {"service", "port"}, port);
  }
  if (!a.data_root.empty()) set_path(flags, {"service", "data_root"}, a.data_root);
  if (a.slots) set_path(flags, {"service", "compute_slots"}, *a.slots);
  if (a.strict) set_path(flags, {"service", "strict_ingestion"}, *a.strict);
  if (a.config.seed) set_path(flags, {"explain", "attack", "seed"}, *a.config.seed);
  const auto cfg = a.config.resolve(flags);
  if (!a.static_dir.empty() && !fs::is_directory(a.static_dir))
    throw ace::NotFoundError("static directory " + a.static_dir + " not found");

  ace::service::Workbench workbench({cfg, true});
  for (const auto& path : a.register_models) {
    const std::string id = fs::path(path).stem().string();
    bool present = false;
    for (const auto& m : workbench.registry().models()) present |= m.id == id;
    if (!present) workbench.registry().register_model(path);
  }
  ace::service::HttpServer server(workbench, {a.static_dir});
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  spdlog::info("serving {} on {}:{} ({} compute slots)", cfg.service.data_root, cfg.service.host, cfg.service.port,
               cfg.service.compute_slots);
  if (!server.listen(cfg.service.host, cfg.service.port))
    throw ace::RuntimeFailure("cannot listen on " + cfg.service.host + ":" + std::to_string(cfg.service.port));
  g_server = nullptr;
  return 0;
}

// ---------------------------------------------------------------- errors

int fail(const std::string& code, int status, const std::string& message, const std::vector<std::string>& problems) {
  json err = {{"code", code}, {"exit", status}, {"message", message}};
  if (!problems.empty()) err["problems"] = problems;
  std::cerr << json{{"error", err}}.dump() << std::endl;
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("ace"));
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");

  CLI::App app{"Diffusion-filtered adversarial counterfactual explanations"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

  TrainDdpmArgs ddpm;
  auto* c_ddpm = app.add_subcommand("train-ddpm", "Train a noise-prediction denoiser");
  ddpm.config.attach(*c_ddpm);
  c_ddpm->add_option("--dataset", ddpm.dataset, "Dataset directory or 'builtin'")->capture_default_str();
  c_ddpm->add_option("--out", ddpm.out, "Checkpoint to write")->required();

  TrainClassifierArgs clf;
  auto* c_clf = app.add_subcommand("train-classifier", "Train the classifier or the self-supervised encoder");
  clf.config.attach(*c_clf);
  c_clf->add_option("--dataset", clf.dataset, "Dataset directory or 'builtin'")->capture_default_str();
  c_clf->add_option("--out", clf.out, "Checkpoint to write")->required();
  c_clf->add_option("--kind", clf.kind, "classifier or ssl-encoder")
      ->check(CLI::IsMember({"classifier", "ssl-encoder"}))
      ->capture_default_str();

  ExplainArgs ex;
  auto* c_ex = app.add_subcommand("explain", "Generate counterfactual explanations");
  ex.config.attach(*c_ex);
  ex.input.attach(*c_ex);
  c_ex->add_option("--split", ex.split, "Explain every instance of this dataset split (one run directory each)");
  c_ex->add_option("--limit", ex.limit, "At most this many instances with --split (0 = all)");
  c_ex->add_option("--out", ex.out, "Run directory (or parent directory with --split)")->required();
  c_ex->add_flag("--canonical", ex.canonical, "Omit timings and wall-clock stamps from manifests");

  DiversityArgs div;
  auto* c_div = app.add_subcommand("diversity", "Several counterfactuals of one input and their spread");
  div.config.attach(*c_div);
  div.input.attach(*c_div);
  c_div->add_option("--k", div.k, "Number of runs (seeds derived from --seed)");
  c_div->add_option("--seeds", div.seeds, "Explicit per-run seeds instead of --k");
  c_div->add_option("--ssl-encoder", div.ssl_encoder, "Network of the perceptual distance (default: classifier)");
  c_div->add_option("--out", div.out, "Output directory")->required();
  c_div->add_flag("--canonical", div.canonical, "Omit timings and wall-clock stamps from manifests");

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Score a directory of runs");
  ev.config.attach(*c_ev);
  c_ev->add_option("--runs", ev.runs, "Directory holding run directories")->required();
  c_ev->add_option("--metrics", ev.metrics, "'all' or a comma list of flip_rate,fid,sfid,fs,s3,cout,diversity");
  c_ev->add_option("--classifier", ev.classifier, "Classifier checkpoint (flip rate, COUT)");
  c_ev->add_option("--ssl-encoder", ev.ssl_encoder, "Self-supervised encoder checkpoint (S3)");
  c_ev->add_option("--face-encoder", ev.face_encoder, "Identity encoder checkpoint (FS)");
  c_ev->add_option("--fid-encoder", ev.fid_encoder, "Feature network for FID and sFID");
  c_ev->add_option("--out", ev.out, "Report file (also printed to stdout)");

  ServeArgs sv;
  auto* c_sv = app.add_subcommand("serve", "Run the workbench HTTP service");
  sv.config.attach(*c_sv);
  c_sv->add_option("--listen", sv.listen, "host:port")->envname("ACE_LISTEN");
  c_sv->add_option("--data-root", sv.data_root, "Directory of models, datasets, runs and batches")
      ->envname("ACE_DATA_ROOT");
  c_sv->add_option("--slots", sv.slots, "Concurrent explanation jobs")->envname("ACE_SLOTS");
  c_sv->add_option("--strict-ingestion", sv.strict, "Reject a dataset folder with any bad file (true/false)")
      ->envname("ACE_STRICT_INGESTION");
  c_sv->add_option("--static-dir", sv.static_dir, "UI bundle served at /");
  c_sv->add_option("--model", sv.register_models, "Checkpoint to register at startup (repeatable)");

  IngestArgs in;
  auto* c_in = app.add_subcommand("ingest", "Import a labeled image folder or write the builtin set");
  in.config.attach(*c_in);
  c_in->add_option("--images", in.images, "Directory of PNG images");
  c_in->add_option("--labels", in.labels, "CSV of filename,label rows (default <images>/labels.csv)");
  c_in->add_option("--name", in.name, "Dataset name");
  c_in->add_flag("--builtin", in.builtin, "Write the generated builtin dataset");
  c_in->add_option("--strict", in.strict, "Reject on any bad file (true/false)");
  c_in->add_option("--out", in.out, "Dataset directory to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("config", kExitConfig, e.what(), {});
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (c_ddpm->parsed()) return train_ddpm(ddpm);
    if (c_clf->parsed()) return train_classifier(clf);
    if (c_ex->parsed()) return explain(ex);
    if (c_div->parsed()) return diversity(div);
    if (c_ev->parsed()) return evaluate(ev);
    if (c_sv->parsed()) return serve(sv);
    if (c_in->parsed()) return ingest(in);
  } catch (const ace::ConfigError& e) {
    return fail("config", kExitConfig, e.what(), e.problems());
  } catch (const ace::ValidationError& e) {
    return fail("invalid_request", kExitConfig, e.what(), {});
  } catch (const ace::NotFoundError& e) {
    return fail("not_found", kExitNotFound, e.what(), {});
  } catch (const std::exception& e) {
    return fail("runtime", kExitRuntime, e.what(), {});
  }
  return 0;
}
