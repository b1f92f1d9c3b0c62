#include "ace/core/image_io.hpp"
#include "toy.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

using namespace ace;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int exit = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Dataset dir, tiny checkpoints and a scratch area shared by the CLI cases.
struct Fixture {
  fs::path dir = toy::temp_dir("cli");
  models::Dataset dataset;
  Label prediction = 0;
  std::string instance;

  Fixture() {
    dataset = models::make_builtin_dataset(toy::small_builtin(8));
    models::save_dataset(dir / "data", dataset);
    const Geometry g = dataset.descriptor.geometry;
    auto clf = toy::random_convnet<float>(g, 2, 41);
    clf.set_label_names(dataset.descriptor.class_names);
    models::save_classifier(dir / "clf.ckpt", clf);
    auto ddpm = toy::random_ddpm<float>(g, 42, 100);
    diffusion::save_denoiser(dir / "ddpm.ckpt", ddpm);
    const auto& s = dataset.samples[dataset.split("test")[0]];
    instance = s.id;
    prediction = models::predict_label(clf, s.image);
    write_png(dir / "input.png", s.image.cast<double>(), g);
  }

  Outcome run(const std::string& args) const {
    static int counter = 0;
    const auto out = dir / ("stdout" + std::to_string(counter) + ".txt");
    const auto err = dir / ("stderr" + std::to_string(counter++) + ".txt");
    const std::string cmd = std::string(ACE_CLI_PATH) + " --log-level warn " + args + " > " + out.string() + " 2> " +
                            err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  std::string models() const {
    return "--classifier " + (dir / "clf.ckpt").string() + " --denoiser " + (dir / "ddpm.ckpt").string();
  }
  std::string quick() const {
    return " --set explain.attack.num_iterations=3 --set explain.respacing=10 --set explain.attack.tau=2 ";
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

json error_line(const Outcome& o) {
  const auto nl = o.err.find('\n');
  CHECK((nl == std::string::npos || nl == o.err.size() - 1));
  return json::parse(o.err);
}

}  // namespace

TEST_CASE("help exits 0 for every subcommand") {
  const auto& f = fixture();
  auto top = f.run("--help");
  CHECK(top.exit == 0);
  for (const char* cmd : {"train-ddpm", "train-classifier", "explain", "diversity", "evaluate", "serve", "ingest"}) {
    INFO(cmd);
    const auto o = f.run(std::string(cmd) + " --help");
    CHECK(o.exit == 0);
    CHECK(top.out.find(cmd) != std::string::npos);
    for (const char* flag : {"--config", "--set", "--seed"}) CHECK(o.out.find(flag) != std::string::npos);
  }
  CHECK(f.run("explain --help").out.find("--canonical") != std::string::npos);
  CHECK(f.run("serve --help").out.find("ACE_DATA_ROOT") != std::string::npos);
  CHECK(f.run("no-such-command").exit == 2);
}

TEST_CASE("explain writes a reproducible run directory") {
  const auto& f = fixture();
  const std::string target = std::to_string(1 - f.prediction);
  const std::string base = "explain " + f.models() + f.quick() + "--image " + (f.dir / "input.png").string() +
                           " --target " + target + " --seed 7 --canonical --out ";
  const auto a = f.run(base + (f.dir / "run-a").string());
  REQUIRE(a.exit == 0);
  const auto b = f.run(base + (f.dir / "run-b").string());
  REQUIRE(b.exit == 0);
  for (const char* file : {"input.png", "pre_explanation.png", "mask.png", "counterfactual.png", "manifest.json"}) {
    INFO(file);
    REQUIRE(fs::exists(f.dir / "run-a" / file));
    CHECK(slurp(f.dir / "run-a" / file) == slurp(f.dir / "run-b" / file));
  }
  const auto manifest = json::parse(slurp(f.dir / "run-a" / "manifest.json"));
  CHECK(manifest["provenance"]["seed"] == 7);
  CHECK(manifest["provenance"]["overrides"].size() == 3);
  CHECK(manifest["provenance"]["effective_config"]["explain"]["attack"]["num_iterations"] == 3);
  CHECK_FALSE(manifest.contains("timing"));

  const auto other = f.run("explain " + f.models() + f.quick() + "--image " + (f.dir / "input.png").string() +
                           " --target " + target + " --seed 8 --canonical --out " + (f.dir / "run-c").string());
  REQUIRE(other.exit == 0);
  CHECK(slurp(f.dir / "run-a" / "manifest.json") != slurp(f.dir / "run-c" / "manifest.json"));
}

TEST_CASE("explain over a dataset split") {
  const auto& f = fixture();
  const auto o = f.run("explain " + f.models() + f.quick() + "--dataset " + (f.dir / "data").string() +
                       " --split test --limit 3 --target next --seed 1 --out " + (f.dir / "split").string());
  REQUIRE(o.exit == 0);
  const auto batch = json::parse(slurp(f.dir / "split" / "batch.json"));
  CHECK(batch["summary"].contains("flip_rate"));
  CHECK(batch["runs"].size() == 3);
  int dirs = 0;
  for (const auto& e : fs::directory_iterator(f.dir / "split")) dirs += e.is_directory();
  CHECK(dirs == 3);
  const auto inst = f.run("explain " + f.models() + f.quick() + "--dataset " + (f.dir / "data").string() +
                          " --instance " + f.instance + " --target next --out " + (f.dir / "single").string());
  CHECK(inst.exit == 0);
}

TEST_CASE("exit codes and the error line") {
  const auto& f = fixture();
  const auto same = f.run("explain " + f.models() + f.quick() + "--image " + (f.dir / "input.png").string() +
                          " --target " + std::to_string(f.prediction) + " --out " + (f.dir / "same").string());
  CHECK(same.exit == 2);
  CHECK(error_line(same)["error"]["message"].get<std::string>().find("target equals prediction") != std::string::npos);
  CHECK_FALSE(fs::exists(f.dir / "same" / "counterfactual.png"));

  const auto missing = f.run("explain --classifier " + (f.dir / "nope.ckpt").string() + " --denoiser " +
                             (f.dir / "ddpm.ckpt").string() + " --image " + (f.dir / "input.png").string() +
                             " --target 1 --out " + (f.dir / "x").string());
  CHECK(missing.exit == 4);
  CHECK(error_line(missing)["error"]["exit"] == 4);

  const auto bad = f.run("explain " + f.models() + " --set explain.attack.tau=-1 --set explain.refine.threshold=4" +
                         " --set explain.nonsense=1 --image " + (f.dir / "input.png").string() + " --target 1 --out " +
                         (f.dir / "y").string());
  CHECK(bad.exit == 2);
  CHECK(error_line(bad)["error"]["problems"].size() >= 3);

  std::ofstream(f.dir / "broken.ckpt") << "not a checkpoint";
  const auto broken = f.run("explain --classifier " + (f.dir / "broken.ckpt").string() + " --denoiser " +
                            (f.dir / "ddpm.ckpt").string() + " --image " + (f.dir / "input.png").string() +
                            " --target 1 --out " + (f.dir / "z").string());
  CHECK(broken.exit == 3);
}

TEST_CASE("evaluate is byte-identical across invocations") {
  const auto& f = fixture();
  if (!fs::exists(f.dir / "split" / "batch.json")) {
    REQUIRE(f.run("explain " + f.models() + f.quick() + "--dataset " + (f.dir / "data").string() +
                  " --split test --limit 3 --target next --seed 1 --out " + (f.dir / "split").string())
                .exit == 0);
  }
  const std::string cmd = "evaluate --runs " + (f.dir / "split").string() + " --metrics all --seed 7 --classifier " +
                          (f.dir / "clf.ckpt").string();
  const auto a = f.run(cmd + " --out " + (f.dir / "report-a.json").string());
  const auto b = f.run(cmd + " --out " + (f.dir / "report-b.json").string());
  REQUIRE(a.exit == 0);
  REQUIRE(b.exit == 0);
  CHECK(a.out == b.out);
  CHECK(slurp(f.dir / "report-a.json") == slurp(f.dir / "report-b.json"));
  const auto report = json::parse(a.out);
  CHECK(report.contains("flip_rate"));
  CHECK(f.run("evaluate --runs " + (f.dir / "nowhere").string()).exit == 4);
}

TEST_CASE("diversity, training and ingestion commands") {
  const auto& f = fixture();
  const auto div = f.run("diversity " + f.models() + f.quick() + "--image " + (f.dir / "input.png").string() +
                         " --target next --k 2 --set diversity.respacings=[10,20] --out " + (f.dir / "div").string());
  REQUIRE(div.exit == 0);
  const auto d = json::parse(slurp(f.dir / "div" / "diversity.json"));
  CHECK(d.contains("sigma"));
  CHECK(fs::exists(f.dir / "div" / "seed-1" / "counterfactual.png"));
  CHECK(f.run("diversity " + f.models() + " --image " + (f.dir / "input.png").string() +
              " --target next --k 1 --out " + (f.dir / "div1").string())
            .exit == 2);

  const auto clf = f.run("train-classifier --dataset " + (f.dir / "data").string() +
                         " --set train_classifier.epochs=1 --seed 3 --out " + (f.dir / "trained.ckpt").string());
  REQUIRE(clf.exit == 0);
  CHECK(json::parse(clf.out).contains("heldout_accuracy"));
  const auto ddpm = f.run("train-ddpm --dataset " + (f.dir / "data").string() +
                          " --set train_ddpm.iterations=3 --set train_ddpm.network.base_channels=4" +
                          " --set train_ddpm.network.mid_channels=8 --out " + (f.dir / "trained-ddpm.ckpt").string());
  CHECK(ddpm.exit == 0);
  CHECK(fs::exists(f.dir / "trained-ddpm.ckpt"));

  const auto images = f.dir / "folder";
  fs::create_directories(images);
  std::ofstream csv(images / "labels.csv");
  csv << "filename,label\n";
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const std::string name = "im" + std::to_string(i) + ".png";
    write_png(images / name, quantize(toy::random_image<double>({3, 8, 8}, rng)), {3, 8, 8});
    csv << name << "," << (i % 2 ? "b" : "a") << "\n";
  }
  csv.close();
  std::ofstream(images / "im9.png") << "corrupt";
  const auto strict = f.run("ingest --images " + images.string() + " --out " + (f.dir / "ing-strict").string());
  CHECK(strict.exit == 2);
  CHECK(strict.err.find("im9.png") != std::string::npos);
  const auto lenient = f.run("ingest --images " + images.string() + " --strict false --out " +
                             (f.dir / "ing").string());
  CHECK(lenient.exit == 0);
  CHECK(json::parse(slurp(f.dir / "ing" / "dataset.json")).dump().find("\"name\"") != std::string::npos);
}
