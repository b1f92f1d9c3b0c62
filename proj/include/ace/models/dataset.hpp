#pragma once

#include "ace/core/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ace::models {

struct DatasetDescriptor {
  std::string name;
  Geometry geometry;
  std::vector<std::string> class_names;
  std::map<std::string, std::size_t> split_sizes;
  std::string provenance;  // "builtin-synthetic" | "ingested-directory"

  int num_classes() const { return static_cast<int>(class_names.size()); }
  nlohmann::json to_json() const;
  static DatasetDescriptor from_json(const nlohmann::json& j);
};

struct Sample {
  std::string id;
  ImageArray<float> image;  // internal range, on the 8-bit grid
  Label label = 0;
};

/// Labeled images with disjoint train/val/test index splits.
struct Dataset {
  DatasetDescriptor descriptor;
  std::vector<Sample> samples;
  std::map<std::string, std::vector<std::size_t>> splits;

  const std::vector<std::size_t>& split(const std::string& name) const;
  std::vector<ImageArray<float>> images(const std::string& split_name) const;
  std::vector<Label> labels(const std::string& split_name) const;

  /// Finds a sample by id; throws NotFoundError.
  const Sample& sample(const std::string& id) const;
};

struct BuiltinSpec {
  int train = 2000;
  int val = 200;
  int test = 200;
  int height = 32;
  int width = 32;
  std::uint64_t seed = 0;
};

/// Two-class 32x32 RGB family. Each image has a smooth two-color background,
/// an optional distractor disc and one thick parabolic stroke; the class is
/// the sign of the stroke's curvature (0 = "smile", opening upward; 1 =
/// "frown"). Classes alternate, so every split is balanced.
Dataset make_builtin_dataset(const BuiltinSpec& spec = {});

/// Renders one builtin image deterministically from `seed`.
ImageArray<float> render_builtin_image(Label label, std::uint64_t seed, int height = 32, int width = 32);

struct IngestIssue {
  std::string file;
  std::string reason;
};

struct IngestReport {
  std::vector<IngestIssue> errors;
  std::vector<std::string> warnings;
  std::size_t accepted = 0;

  nlohmann::json to_json() const;
};

struct IngestOptions {
  bool strict = true;
  std::uint64_t split_seed = 0;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  std::string name;
};

/// Reads a directory of PNG images and a CSV manifest of (filename, label)
/// rows. Labels are integers or class names. In strict mode any problem
/// throws ValidationError listing every issue; otherwise bad files are
/// excluded and reported as warnings.
Dataset ingest_dataset(const std::filesystem::path& directory, const std::filesystem::path& manifest,
                       const IngestOptions& options = {}, IngestReport* report = nullptr);

/// On-disk layout: images/<id>.png, labels.csv, dataset.json (descriptor + splits).
void save_dataset(const std::filesystem::path& directory, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& directory);

}  // namespace ace::models
