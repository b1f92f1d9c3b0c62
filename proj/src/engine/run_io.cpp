#include "ace/engine/run_io.hpp"

#include "ace/core/errors.hpp"
#include "ace/core/image_io.hpp"

#include <chrono>
#include <algorithm>
#include <fstream>
#include <ctime>

namespace ace::engine {

namespace {

std::vector<double> to_std(const Vector<double>& v) { return {v.data(), v.data() + v.size()}; }

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write " + tmp);
    out << text;
    out.flush();
    if (!out) throw RuntimeFailure("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

template <typename Scalar>
nlohmann::json manifest_json(const CounterfactualResult<Scalar>& r, const ManifestOptions& options) {
  nlohmann::json j;
  j["schema_version"] = kManifestSchemaVersion;
  j["kind"] = "counterfactual-run";
  j["seed"] = r.config.attack.seed;
  j["source_label"] = r.source;
  j["target_label"] = r.target;
  if (!options.label_names.empty()) j["label_names"] = options.label_names;
  j["flipped"] = r.flipped;
  j["input_probs"] = to_std(r.input_probs);
  j["counterfactual_probs"] = to_std(r.counterfactual_probs);
  j["pre_explanation"] = {{"final_target_prob", r.pre_explanation.final_target_prob},
                          {"flipped", r.pre_explanation.flipped},
                          {"iterations", r.pre_explanation.objective_trace.size()},
                          {"objective_trace", r.pre_explanation.objective_trace}};
  j["mask"] = {{"pixels_on", r.mask.count()},
               {"pixels", r.mask.binary.size()},
               {"dilation", r.mask.dilation},
               {"threshold", r.mask.threshold}};
  j["refinement"] = {{"respacing", r.refine_respacing}, {"tau", r.refine_tau}};
  j["config"] = r.config.to_json();
  j["artifacts"] = {{"input", RunFiles::input},
                    {"pre_explanation", RunFiles::pre_explanation},
                    {"mask", RunFiles::mask},
                    {"counterfactual", RunFiles::counterfactual}};
  j["provenance"] = options.provenance;
  if (!options.canonical) {
    j["timing"] = {{"attack_seconds", r.timing.attack_seconds}, {"refine_seconds", r.timing.refine_seconds}};
    j["created_at"] = utc_now();
  }
  return j;
}

template <typename Scalar>
void write_run(const std::filesystem::path& dir, const CounterfactualResult<Scalar>& r, const ManifestOptions& options) {
  std::filesystem::create_directories(dir);
  const Geometry g{static_cast<int>(r.input.rows()), r.mask.geometry.height, r.mask.geometry.width};
  write_png(dir / RunFiles::input, r.input, g);
  write_png(dir / RunFiles::pre_explanation, r.pre_explanation.image, g);
  write_mask_png(dir / RunFiles::mask, r.mask.binary, {g.height, g.width});
  write_png(dir / RunFiles::counterfactual, r.counterfactual, g);
  write_file_atomic(dir / RunFiles::manifest, manifest_json(r, options).dump(2) + "\n");
}

StoredRun read_run(const std::filesystem::path& dir) {
  const auto manifest_path = dir / RunFiles::manifest;
  if (!std::filesystem::exists(manifest_path)) throw NotFoundError("no run manifest at " + manifest_path.string());
  StoredRun run;
  run.dir = dir;
  std::ifstream in(manifest_path);
  try {
    run.manifest = nlohmann::json::parse(in);
    run.source = run.manifest.at("source_label").get<Label>();
    run.target = run.manifest.at("target_label").get<Label>();
    run.flipped = run.manifest.at("flipped").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeFailure("malformed run manifest " + manifest_path.string() + ": " + e.what());
  }
  for (const char* name : {RunFiles::input, RunFiles::counterfactual})
    if (!std::filesystem::exists(dir / name)) throw NotFoundError("run " + dir.string() + " has no " + name);
  auto input = read_png(dir / RunFiles::input);
  auto cf = read_png(dir / RunFiles::counterfactual);
  if (!(input.geometry == cf.geometry)) throw RuntimeFailure("run " + dir.string() + ": image geometries differ");
  run.geometry = input.geometry;
  run.input = std::move(input.pixels);
  run.counterfactual = std::move(cf.pixels);
  return run;
}

std::vector<std::filesystem::path> list_runs(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw NotFoundError("run directory " + root.string() + " does not exist");
  std::vector<std::filesystem::path> runs;
  for (const auto& entry : std::filesystem::directory_iterator(root))
    if (entry.is_directory() && std::filesystem::exists(entry.path() / RunFiles::manifest)) runs.push_back(entry.path());
  std::sort(runs.begin(), runs.end());
  return runs;
}

#define ACE_INSTANTIATE_RUN_IO(S)                                                                          \
  template nlohmann::json manifest_json<S>(const CounterfactualResult<S>&, const ManifestOptions&);        \
  template void write_run<S>(const std::filesystem::path&, const CounterfactualResult<S>&, const ManifestOptions&);

ACE_INSTANTIATE_RUN_IO(float)
ACE_INSTANTIATE_RUN_IO(double)

}  // namespace ace::engine
