#include "ace/config/config.hpp"
#include "ace/core/errors.hpp"
#include "toy.hpp"

#include <doctest.h>

#include <algorithm>
#include <fstream>

using namespace ace;
using namespace ace::config;

namespace {

bool mentions(const std::vector<std::string>& problems, const std::string& needle) {
  return std::any_of(problems.begin(), problems.end(),
                     [&](const std::string& p) { return p.find(needle) != std::string::npos; });
}

std::vector<std::string> problems_of(const std::vector<nlohmann::json>& layers) {
  try {
    resolve(layers);
  } catch (const ConfigError& e) {
    return e.problems();
  }
  return {};
}

}  // namespace

TEST_CASE("shipped preset files match the built-in presets") {
  for (const auto& name : preset_names()) {
    const auto file = std::filesystem::path(ACE_SOURCE_DIR) / "configs" / (name + ".json");
    INFO(file.string());
    REQUIRE(std::filesystem::exists(file));
    CHECK(read_config_file(file) == preset(name));
    CHECK_NOTHROW(resolve({preset(name)}));
  }
  CHECK_THROWS_AS(preset("imagenet"), ConfigError);
}

TEST_CASE("paper hyperparameters in the presets") {
  const auto celeba = resolve({preset("celeba-like")});
  CHECK(celeba.explain.attack.tau == 5);
  CHECK(celeba.explain.respacing == 50);
  CHECK(celeba.explain.refine.dilation == 15);
  CHECK(celeba.explain.refine.threshold == 0.15);
  CHECK(celeba.explain.attack.num_iterations == 50);
  CHECK(celeba.explain.attack.lambda_d == 0.001);
  const auto bdd = resolve({preset("bdd-like")});
  CHECK(bdd.explain.attack.tau == 5);
  CHECK(bdd.explain.respacing == 100);
  CHECK(bdd.explain.refine.threshold == 0.05);
}

TEST_CASE("override parsing") {
  CHECK(parse_override("explain.attack.tau=7") == nlohmann::json{{"explain", {{"attack", {{"tau", 7}}}}}});
  CHECK(parse_override("explain.attack.method=gd")["explain"]["attack"]["method"] == "gd");
  CHECK(parse_override("explain.refine.enabled=false")["explain"]["refine"]["enabled"] == false);
  CHECK(parse_override("diversity.respacings=[25,50]")["diversity"]["respacings"] == nlohmann::json{25, 50});
  CHECK_THROWS_AS(parse_override("explain.attack.tau"), ConfigError);
  CHECK_THROWS_AS(parse_override("=3"), ConfigError);
}

TEST_CASE("later layers take precedence") {
  const auto c = resolve({preset("desk"), {{"explain", {{"attack", {{"tau", 3}}}}}},
                          parse_override("explain.attack.tau=4"), {{"explain", {{"attack", {{"seed", 9}}}}}}});
  CHECK(c.explain.attack.tau == 4);
  CHECK(c.explain.attack.seed == 9);
  CHECK(c.explain.refine.dilation == 5);
  const auto base = resolve({preset("desk")});
  const auto over = overlay(base, {{"explain", {{"respacing", 100}}}});
  CHECK(over.explain.respacing == 100);
  CHECK(over.explain.refine.dilation == 5);
}

TEST_CASE("config file loading") {
  const auto dir = toy::temp_dir("cfg");
  std::ofstream(dir / "ok.json") << R"({"explain": {"attack": {"num_iterations": 12}}})";
  std::ofstream(dir / "bad.json") << "{not json";
  CHECK(resolve({read_config_file(dir / "ok.json")}).explain.attack.num_iterations == 12);
  CHECK_THROWS_AS(read_config_file(dir / "bad.json"), ConfigError);
  CHECK_THROWS_AS(read_config_file(dir / "missing.json"), NotFoundError);
}

TEST_CASE("every config problem is reported at once") {
  const auto problems = problems_of({{{"explain", {{"attack", {{"tau", -1}, {"method", "fgsm"}, {"bogus", 1}}},
                                                  {"refine", {{"threshold", 2.0}, {"dilation", 4}}}}},
                                      {"train_ddpm", {{"iterations", "many"}}},
                                      {"unknown_section", 1}}});
  CHECK(problems.size() >= 7);
  CHECK(mentions(problems, "tau"));
  CHECK(mentions(problems, "fgsm"));
  CHECK(mentions(problems, "bogus"));
  CHECK(mentions(problems, "threshold"));
  CHECK(mentions(problems, "dilation"));
  CHECK(mentions(problems, "train_ddpm.iterations"));
  CHECK(mentions(problems, "unknown_section"));
  CHECK(problems_of({{{"explain", 3}}}).size() >= 1);
  CHECK(problems_of({parse_override("builtin.train=4"), parse_override("builtin.val=2")}).size() == 1);
  CHECK(problems_of({preset("desk")}).empty());
}

TEST_CASE("switching the method or norm picks that method's defaults") {
  const auto gd = resolve({parse_override("explain.attack.method=gd")});
  CHECK(gd.explain.attack.step_size == engine::AttackConfig::default_step_size(engine::AttackMethod::gd));
  const auto gd_explicit = resolve({parse_override("explain.attack.method=gd"), parse_override("explain.attack.step_size=0.5")});
  CHECK(gd_explicit.explain.attack.step_size == 0.5);
  const auto l2 = resolve({parse_override("explain.attack.distance=l2")});
  CHECK(l2.explain.attack.lambda_d == 0.1);
}

TEST_CASE("effective config round trips through json") {
  const auto c = resolve({preset("bdd-like"), parse_override("explain.attack.seed=42")});
  const auto again = resolve({c.to_json()});
  CHECK(again.to_json() == c.to_json());
}
