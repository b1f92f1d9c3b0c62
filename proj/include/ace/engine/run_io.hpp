#pragma once

#include "ace/engine/explain.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace ace::engine {

inline constexpr int kManifestSchemaVersion = 1;

/// Names of the files in a run directory.
struct RunFiles {
  static constexpr const char* input = "input.png";
  static constexpr const char* pre_explanation = "pre_explanation.png";
  static constexpr const char* mask = "mask.png";
  static constexpr const char* counterfactual = "counterfactual.png";
  static constexpr const char* manifest = "manifest.json";
};

struct ManifestOptions {
  /// Leaves out timings and wall-clock stamps so identical runs give identical bytes.
  bool canonical = false;
  std::vector<std::string> label_names;
  /// Merged into the manifest under "provenance" (assets, input source, command line).
  nlohmann::json provenance = nlohmann::json::object();
};

template <typename Scalar>
nlohmann::json manifest_json(const CounterfactualResult<Scalar>& result, const ManifestOptions& options);

/// Writes the four PNGs and manifest.json into `dir` (created if needed).
/// Images are stored as 8-bit PNG: byte = round((v + 1) * 127.5), clamped.
template <typename Scalar>
void write_run(const std::filesystem::path& dir, const CounterfactualResult<Scalar>& result,
               const ManifestOptions& options);

/// What evaluation needs back from a run directory.
struct StoredRun {
  std::filesystem::path dir;
  nlohmann::json manifest;
  Geometry geometry;
  ImageArray<double> input;
  ImageArray<double> counterfactual;
  Label source = 0;
  Label target = 0;
  bool flipped = false;
};

/// Throws NotFoundError when the directory or one of its files is missing.
StoredRun read_run(const std::filesystem::path& dir);

/// Run directories directly under `root` (those holding a manifest), sorted by name.
std::vector<std::filesystem::path> list_runs(const std::filesystem::path& root);

/// Writes text to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace ace::engine
