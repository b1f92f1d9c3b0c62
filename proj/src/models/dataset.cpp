#include "ace/models/dataset.hpp"

#include "ace/core/errors.hpp"
#include "ace/core/image_io.hpp"
#include "ace/core/random.hpp"

#include <algorithm>
#include <cmath>
#include <array>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace ace::models {

nlohmann::json DatasetDescriptor::to_json() const {
  return {{"name", name},
          {"geometry", {{"channels", geometry.channels}, {"height", geometry.height}, {"width", geometry.width}}},
          {"class_names", class_names},
          {"split_sizes", split_sizes},
          {"provenance", provenance}};
}

DatasetDescriptor DatasetDescriptor::from_json(const nlohmann::json& j) {
  DatasetDescriptor d;
  d.name = j.at("name").get<std::string>();
  const auto& g = j.at("geometry");
  d.geometry = {g.at("channels").get<int>(), g.at("height").get<int>(), g.at("width").get<int>()};
  d.class_names = j.at("class_names").get<std::vector<std::string>>();
  d.split_sizes = j.at("split_sizes").get<std::map<std::string, std::size_t>>();
  d.provenance = j.value("provenance", std::string("ingested-directory"));
  return d;
}

const std::vector<std::size_t>& Dataset::split(const std::string& name) const {
  const auto it = splits.find(name);
  if (it == splits.end()) throw NotFoundError("dataset '" + descriptor.name + "' has no split '" + name + "'");
  return it->second;
}

std::vector<ImageArray<float>> Dataset::images(const std::string& split_name) const {
  std::vector<ImageArray<float>> out;
  for (const auto i : split(split_name)) out.push_back(samples[i].image);
  return out;
}

std::vector<Label> Dataset::labels(const std::string& split_name) const {
  std::vector<Label> out;
  for (const auto i : split(split_name)) out.push_back(samples[i].label);
  return out;
}

const Sample& Dataset::sample(const std::string& id) const {
  for (const auto& s : samples)
    if (s.id == id) return s;
  throw NotFoundError("dataset '" + descriptor.name + "' has no instance '" + id + "'");
}

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  const double u = len2 > 0.0 ? std::clamp(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0) : 0.0;
  const double qx = ax + u * dx - px, qy = ay + u * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

}  // namespace

ImageArray<float> render_builtin_image(Label label, std::uint64_t seed, int height, int width) {
  require(label == 0 || label == 1, "builtin images have labels 0 and 1");
  Rng rng(seed);
  const double scale = std::min(height, width) / 32.0;

  std::array<double, 3> ca{}, cb{};
  for (int c = 0; c < 3; ++c) {
    ca[c] = rng.uniform(0.1, 0.9);
    cb[c] = rng.uniform(0.1, 0.9);
  }
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double bg_lum = (ca[0] + ca[1] + ca[2] + cb[0] + cb[1] + cb[2]) / 6.0;
  std::array<double, 3> stroke{};
  for (int c = 0; c < 3; ++c) stroke[c] = bg_lum > 0.5 ? rng.uniform(0.0, 0.25) : rng.uniform(0.75, 1.0);

  const double cx = rng.uniform(12.0, 20.0) * scale, cy = rng.uniform(12.0, 20.0) * scale;
  const double half_width = rng.uniform(7.0, 10.0) * scale;
  const double amplitude = rng.uniform(3.5, 5.5) * scale;
  const double tilt = rng.uniform(-0.3, 0.3);
  const double radius = rng.uniform(1.1, 1.6) * scale;
  const double sign = label == 0 ? 1.0 : -1.0;

  constexpr int kPoints = 33;
  std::vector<double> xs(kPoints), ys(kPoints);
  for (int i = 0; i < kPoints; ++i) {
    const double u = -1.0 + 2.0 * i / (kPoints - 1);
    const double px = half_width * u;
    const double py = sign * amplitude * (0.5 - u * u);
    xs[i] = cx + px * std::cos(tilt) - py * std::sin(tilt);
    ys[i] = cy + px * std::sin(tilt) + py * std::cos(tilt);
  }

  bool has_disc = rng.uniform() < 0.6;
  double dx = 0.0, dy = 0.0;
  const double disc_radius = rng.uniform(2.0, 3.5) * scale;
  std::array<double, 3> disc_color{};
  for (int c = 0; c < 3; ++c) disc_color[c] = rng.uniform(0.0, 1.0);
  if (has_disc) {
    has_disc = false;
    for (int attempt = 0; attempt < 32 && !has_disc; ++attempt) {
      dx = rng.uniform(3.0, width - 3.0);
      dy = rng.uniform(3.0, height - 3.0);
      has_disc = std::hypot(dx - cx, dy - cy) > half_width + disc_radius + 2.0 * scale;
    }
  }

  ImageArray<float> out(3, height * width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double fx = x + 0.5, fy = y + 0.5;
      const double s = clamp01(((fx - width / 2.0) * std::cos(theta) + (fy - height / 2.0) * std::sin(theta)) /
                                   (0.75 * width) +
                               0.5);
      std::array<double, 3> v{};
      for (int c = 0; c < 3; ++c) v[c] = ca[c] * (1.0 - s) + cb[c] * s;
      if (has_disc) {
        const double a = clamp01(disc_radius + 0.5 - std::hypot(fx - dx, fy - dy));
        for (int c = 0; c < 3; ++c) v[c] = v[c] * (1.0 - a) + disc_color[c] * a;
      }
      double d = 1e9;
      for (int i = 0; i + 1 < kPoints; ++i) d = std::min(d, segment_distance(fx, fy, xs[i], ys[i], xs[i + 1], ys[i + 1]));
      const double a = clamp01(radius + 0.5 - d);
      for (int c = 0; c < 3; ++c) {
        const double value = v[c] * (1.0 - a) + stroke[c] * a;
        const auto byte = static_cast<std::uint8_t>(std::nearbyint(clamp01(value) * 255.0));
        out(c, y * width + x) = static_cast<float>(byte_to_internal(byte));
      }
    }
  }
  return out;
}

Dataset make_builtin_dataset(const BuiltinSpec& spec) {
  require(spec.train >= 0 && spec.val >= 0 && spec.test >= 0 && spec.train + spec.val + spec.test > 0,
          "builtin dataset needs a positive size");
  Dataset ds;
  ds.descriptor.name = "builtin-curvature";
  ds.descriptor.geometry = {3, spec.height, spec.width};
  ds.descriptor.class_names = {"smile", "frown"};
  ds.descriptor.provenance = "builtin-synthetic";
  const int total = spec.train + spec.val + spec.test;
  char id[32];
  for (int i = 0; i < total; ++i) {
    std::snprintf(id, sizeof(id), "builtin-%05d", i);
    const Label label = i % 2;
    ds.samples.push_back(
        {id, render_builtin_image(label, derive_seed(spec.seed, static_cast<std::uint64_t>(i)), spec.height, spec.width),
         label});
  }
  std::size_t next = 0;
  for (const auto& [name, count] : {std::pair{"train", spec.train}, {"val", spec.val}, {"test", spec.test}}) {
    auto& indices = ds.splits[name];
    for (int k = 0; k < count; ++k) indices.push_back(next++);
    ds.descriptor.split_sizes[name] = indices.size();
  }
  return ds;
}

nlohmann::json IngestReport::to_json() const {
  nlohmann::json errs = nlohmann::json::array();
  for (const auto& e : errors) errs.push_back({{"file", e.file}, {"reason", e.reason}});
  return {{"accepted", accepted}, {"errors", errs}, {"warnings", warnings}};
}

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n\"");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\"");
  return s.substr(first, last - first + 1);
}

std::vector<std::pair<std::string, std::string>> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw ValidationError("cannot open label manifest " + manifest.string());
  std::vector<std::pair<std::string, std::string>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ValidationError("malformed manifest row: '" + line + "'");
    std::string file = trim(line.substr(0, comma)), label = trim(line.substr(comma + 1));
    if (first && (file == "filename" || file == "file") && label == "label") {
      first = false;
      continue;
    }
    first = false;
    rows.emplace_back(std::move(file), std::move(label));
  }
  return rows;
}

bool is_integer(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char ch) { return std::isdigit(ch) != 0; });
}

}  // namespace

Dataset ingest_dataset(const std::filesystem::path& directory, const std::filesystem::path& manifest,
                       const IngestOptions& options, IngestReport* report) {
  if (!std::filesystem::is_directory(directory)) throw ValidationError("not a directory: " + directory.string());
  const auto rows = read_manifest(manifest);
  IngestReport local;
  IngestReport& rep = report ? *report : local;

  std::vector<std::string> names;
  const bool numeric = std::all_of(rows.begin(), rows.end(), [](const auto& r) { return is_integer(r.second); });
  if (!numeric) {
    std::set<std::string> unique;
    for (const auto& r : rows)
      if (!r.second.empty()) unique.insert(r.second);
    names.assign(unique.begin(), unique.end());
  }

  Dataset ds;
  ds.descriptor.name = options.name.empty() ? directory.filename().string() : options.name;
  ds.descriptor.provenance = "ingested-directory";
  std::set<std::string> listed;
  bool have_geometry = false;
  int max_label = -1;
  for (const auto& [file, label_text] : rows) {
    listed.insert(file);
    if (label_text.empty()) {
      rep.errors.push_back({file, "missing label"});
      continue;
    }
    DecodedImage decoded;
    try {
      decoded = read_png(directory / file);
    } catch (const std::exception& e) {
      rep.errors.push_back({file, std::string("unreadable image: ") + e.what()});
      continue;
    }
    if (!have_geometry) {
      ds.descriptor.geometry = decoded.geometry;
      have_geometry = true;
    } else if (!(decoded.geometry == ds.descriptor.geometry)) {
      rep.errors.push_back({file, "geometry " + to_string(decoded.geometry) + " differs from " +
                                      to_string(ds.descriptor.geometry)});
      continue;
    }
    Label label = 0;
    if (numeric) {
      label = std::stoi(label_text);
    } else {
      label = static_cast<Label>(std::find(names.begin(), names.end(), label_text) - names.begin());
    }
    max_label = std::max(max_label, label);
    ds.samples.push_back({std::filesystem::path(file).stem().string(), decoded.pixels.cast<float>(), label});
  }
  for (const auto& entry : std::filesystem::directory_iterator(directory)) {
    if (entry.path().extension() == ".png" && !listed.count(entry.path().filename().string()))
      rep.errors.push_back({entry.path().filename().string(), "missing label (not listed in manifest)"});
  }

  if (options.strict && !rep.errors.empty()) {
    std::string message = "ingestion failed with " + std::to_string(rep.errors.size()) + " error(s):";
    for (const auto& e : rep.errors) message += " [" + e.file + ": " + e.reason + "]";
    throw ValidationError(message);
  }
  for (const auto& e : rep.errors) rep.warnings.push_back("excluded " + e.file + ": " + e.reason);
  require(!ds.samples.empty(), "ingestion produced no usable images");

  if (numeric) {
    for (int c = 0; c <= max_label; ++c) names.push_back(std::to_string(c));
  }
  ds.descriptor.class_names = names;

  std::vector<std::size_t> order(ds.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(options.split_seed);
  std::shuffle(order.begin(), order.end(), rng.engine());
  const auto n = order.size();
  const auto n_test = static_cast<std::size_t>(std::floor(options.test_fraction * n));
  const auto n_val = static_cast<std::size_t>(std::floor(options.val_fraction * n));
  auto& test = ds.splits["test"];
  auto& val = ds.splits["val"];
  auto& train = ds.splits["train"];
  for (std::size_t k = 0; k < n; ++k) {
    if (k < n_test)
      test.push_back(order[k]);
    else if (k < n_test + n_val)
      val.push_back(order[k]);
    else
      train.push_back(order[k]);
  }
  for (auto* s : {&test, &val, &train}) std::sort(s->begin(), s->end());
  for (const auto& [name, idx] : ds.splits) ds.descriptor.split_sizes[name] = idx.size();
  rep.accepted = ds.samples.size();
  return ds;
}

void save_dataset(const std::filesystem::path& directory, const Dataset& dataset) {
  std::filesystem::create_directories(directory / "images");
  std::ofstream labels(directory / "labels.csv");
  labels << "filename,label\n";
  for (const auto& s : dataset.samples) {
    write_png(directory / "images" / (s.id + ".png"), s.image, dataset.descriptor.geometry);
    labels << s.id << ".png," << s.label << "\n";
  }
  nlohmann::json splits = nlohmann::json::object();
  for (const auto& [name, idx] : dataset.splits) {
    nlohmann::json ids = nlohmann::json::array();
    for (const auto i : idx) ids.push_back(dataset.samples[i].id);
    splits[name] = ids;
  }
  std::ofstream meta(directory / "dataset.json");
  meta << nlohmann::json{{"schema_version", 1}, {"descriptor", dataset.descriptor.to_json()}, {"splits", splits}}.dump(2);
}

Dataset load_dataset(const std::filesystem::path& directory) {
  std::ifstream meta_in(directory / "dataset.json");
  if (!meta_in) throw NotFoundError("no dataset at " + directory.string());
  const auto meta = nlohmann::json::parse(meta_in);
  Dataset ds;
  ds.descriptor = DatasetDescriptor::from_json(meta.at("descriptor"));
  std::map<std::string, std::size_t> index;
  const auto rows = read_manifest(directory / "labels.csv");
  for (const auto& [file, label] : rows) {
    const auto decoded = read_png(directory / "images" / file);
    if (!(decoded.geometry == ds.descriptor.geometry))
      throw ValidationError("dataset image " + file + " does not match descriptor geometry");
    const std::string id = std::filesystem::path(file).stem().string();
    index[id] = ds.samples.size();
    ds.samples.push_back({id, decoded.pixels.cast<float>(), std::stoi(label)});
  }
  for (const auto& [name, ids] : meta.at("splits").items()) {
    auto& out = ds.splits[name];
    for (const auto& id : ids) {
      const auto it = index.find(id.get<std::string>());
      if (it == index.end()) throw ValidationError("split '" + name + "' references unknown id " + id.get<std::string>());
      out.push_back(it->second);
    }
  }
  return ds;
}

}  // namespace ace::models
