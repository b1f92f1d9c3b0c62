#include "ace/service/http.hpp"
#include "toy.hpp"

#include <doctest.h>
#include <httplib.h>

#include <chrono>
#include <fstream>
#include <set>
#include <thread>

using namespace ace;
using namespace ace::service;
using nlohmann::json;

namespace {

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Data root with a tiny classifier and denoiser for 8x8 builtin images.
struct Workspace {
  std::filesystem::path root;
  config::AppConfig base;
  models::Dataset dataset;
  std::shared_ptr<models::ConvClassifier<float>> clf;

  explicit Workspace(const std::string& name) : root(toy::temp_dir(name)) {
    base.builtin = toy::small_builtin(8);
    base.service.data_root = root.string();
    base.service.queue_capacity = 2;
    base.explain.attack.num_iterations = 3;
    base.explain.attack.tau = 2;
    base.explain.respacing = 10;
    base.explain.refine.dilation = 3;
    dataset = models::make_builtin_dataset(base.builtin);
    const Geometry g = dataset.descriptor.geometry;
    clf = std::make_shared<models::ConvClassifier<float>>(toy::random_convnet<float>(g, 2, 31));
    clf->set_label_names(dataset.descriptor.class_names);
    std::filesystem::create_directories(root / "models");
    models::save_classifier(root / "models" / "clf.ckpt", *clf);
    auto ddpm = toy::random_ddpm<float>(g, 32, 100);
    diffusion::save_denoiser(root / "models" / "ddpm.ckpt", ddpm);
  }

  std::unique_ptr<Workbench> open(bool workers = true) const {
    return std::make_unique<Workbench>(WorkbenchOptions{base, workers});
  }

  // A test-split instance and a target that differs from the prediction.
  json request(std::size_t k = 0) const {
    const auto& s = dataset.samples[dataset.split("test")[k]];
    const Label pred = models::predict_label(*clf, s.image);
    return {{"instance", s.id}, {"target", 1 - pred}, {"seed", 3}};
  }
  json degenerate_request() const {
    auto r = request();
    r["target"] = 1 - r["target"].get<int>();
    return r;
  }
};

}  // namespace

TEST_CASE("run store transitions and persistence") {
  const auto root = toy::temp_dir("store");
  std::string a, b;
  {
    RunStore store(root);
    a = store.create({{"x", 1}}, RunStatus::queued)["id"];
    b = store.create({{"x", 2}}, RunStatus::queued)["id"];
    CHECK(a != b);
    CHECK(a < b);
    const auto rej = store.create({{"x", 3}}, RunStatus::rejected, "target equals prediction");
    CHECK(rej["status"] == "rejected");
    CHECK(rej["reason"] == "target equals prediction");
    CHECK_THROWS_AS(store.transition(rej["id"], RunStatus::running), ValidationError);
    store.transition(a, RunStatus::running);
    CHECK_THROWS_AS(store.transition(a, RunStatus::queued), ValidationError);
    store.progress(a, 0, 3, 1.5);
    store.transition(a, RunStatus::succeeded, {{"flipped", true}});
    CHECK_THROWS_AS(store.transition(a, RunStatus::failed), ValidationError);
    CHECK(store.get(a)["flipped"] == true);
    CHECK(store.list(RunStatus::succeeded).size() == 1);
    CHECK(store.list().size() == 3);
    CHECK_THROWS_AS(store.get("run-999999"), NotFoundError);
    bool done = false;
    const auto events = store.events(a, 0, 0, &done);
    CHECK(done);
    std::set<std::string> types;
    for (const auto& e : events) types.insert(e.type);
    CHECK(types == std::set<std::string>{"status", "progress"});
    CHECK(std::filesystem::exists(root / "runs" / "index.jsonl"));
  }
  RunStore reopened(root);
  CHECK(reopened.get(a)["status"] == "succeeded");
  CHECK(reopened.get(b)["status"] == "failed");
  CHECK(reopened.get(b)["reason"] == "interrupted");
  const std::string c = reopened.create(json::object(), RunStatus::queued)["id"];
  CHECK(c > b);
  CHECK(is_allowed_transition(RunStatus::queued, RunStatus::running));
  CHECK_FALSE(is_allowed_transition(RunStatus::succeeded, RunStatus::running));
  CHECK(is_terminal(RunStatus::rejected));
}

TEST_CASE("job queue is FIFO, bounded and respects the slot count") {
  std::mutex m;
  std::vector<std::string> order;
  int active = 0, peak = 0;
  JobQueue q(
      1, 3,
      [&](const std::string& id) {
        {
          std::lock_guard lock(m);
          peak = std::max(peak, ++active);
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        std::lock_guard lock(m);
        --active;
        order.push_back(id);
      },
      true);
  q.push("a");
  q.push("b");
  q.push("c");
  CHECK_THROWS_AS(q.push("d"), QueueFullError);
  CHECK_THROWS_AS(q.check_capacity(), QueueFullError);
  CHECK(q.state().pending == std::vector<std::string>{"a", "b", "c"});
  q.resume();
  q.wait_idle();
  CHECK(order == std::vector<std::string>{"a", "b", "c"});
  CHECK(peak == 1);

  std::atomic<int> running{0}, most{0};
  JobQueue two(2, 10, [&](const std::string&) {
    const int now = ++running;
    int prev = most.load();
    while (now > prev && !most.compare_exchange_weak(prev, now)) {}
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    --running;
  });
  for (int i = 0; i < 6; ++i) two.push("j" + std::to_string(i));
  two.wait_idle();
  CHECK(most.load() <= 2);
  CHECK(two.state().active.empty());
}

TEST_CASE("workbench submission contract") {
  Workspace ws("wb-submit");
  auto wb = ws.open(false);
  const auto r1 = wb->submit(ws.request());
  const auto r2 = wb->submit(ws.request());
  CHECK(r1["status"] == "queued");
  CHECK(r1["id"] != r2["id"]);
  CHECK(r1["schema_version"] == kSchemaVersion);
  CHECK(r1["request"]["config"]["attack"]["num_iterations"] == 3);
  CHECK(wb->run(r1["id"])["artifacts"].empty());
  CHECK_THROWS_AS(wb->submit(ws.request()), QueueFullError);

  const auto rejected = wb->submit(ws.degenerate_request());
  CHECK(rejected["status"] == "rejected");
  CHECK(rejected["reason"] == "target equals prediction");

  auto unknown = ws.request();
  unknown["instance"] = "builtin-99999";
  CHECK_THROWS_AS(wb->submit(unknown), NotFoundError);
  unknown = ws.request();
  unknown["classifier"] = "nope";
  CHECK_THROWS_AS(wb->submit(unknown), NotFoundError);
  auto bad = ws.request();
  bad["config"] = {{"attack", {{"tau", 500}, {"method", "fgsm"}}}, {"refine", {{"threshold", 3}}}};
  bad["colour"] = "blue";
  try {
    wb->submit(bad);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.problems().size() >= 3);
  }
  CHECK_THROWS_AS(wb->run("run-424242"), NotFoundError);
}

TEST_CASE("workbench runs, evaluation and durability") {
  Workspace ws("wb-run");
  std::string ok1, ok2, rejected;
  json report;
  {
    auto wb = ws.open();
    ok1 = wb->submit(ws.request(0))["id"];
    ok2 = wb->submit(ws.request(0))["id"];
    rejected = wb->submit(ws.degenerate_request())["id"];
    wb->wait_idle();
    const auto rec = wb->run(ok1);
    REQUIRE(rec["status"] == "succeeded");
    for (const char* name : {"input", "pre_explanation", "mask", "counterfactual", "manifest"}) {
      INFO(name);
      CHECK(rec["artifacts"].contains(name));
      CHECK(std::filesystem::exists(wb->artifact(ok1, name)));
    }
    CHECK(rec["probabilities"]["counterfactual"].size() == 2);
    CHECK(rec["pre_explanation"]["objective_trace"].size() == 3);
    CHECK(read_bytes(wb->artifact(ok1, "counterfactual")) == read_bytes(wb->artifact(ok2, "counterfactual.png")));
    CHECK_THROWS_AS(wb->artifact(rejected, "counterfactual"), NotFoundError);
    CHECK(wb->runs("succeeded")["runs"].size() == 2);

    const json batch_req = {{"runs", {ok1, ok2}}, {"seed", 4}, {"metrics", "flip_rate,cout,diversity"}};
    const auto b1 = wb->evaluate(batch_req);
    const auto b2 = wb->evaluate(batch_req);
    CHECK(b1["id"] != b2["id"]);
    CHECK(b1["report"] == b2["report"]);
    const bool flipped = rec["flipped"];
    CHECK(b1["report"]["flip_rate"] == (flipped ? 1.0 : 0.0));
    CHECK(wb->batch(b1["id"])["report"] == b1["report"]);
    report = b1["report"];
    try {
      wb->evaluate({{"runs", {ok1, rejected}}});
      FAIL("expected an itemized error");
    } catch (const ItemizedError& e) {
      REQUIRE(e.items().size() == 1);
      CHECK(e.items()[0].find(rejected) != std::string::npos);
    }
    CHECK_THROWS_AS(wb->evaluate({{"runs", {"run-777777"}}}), NotFoundError);
  }
  std::string interrupted;
  {
    auto paused = ws.open(false);
    interrupted = paused->submit(ws.request(1))["id"];
  }
  auto wb = ws.open();
  CHECK(wb->run(ok1)["status"] == "succeeded");
  CHECK(std::filesystem::exists(wb->artifact(ok1, "mask")));
  CHECK(wb->run(interrupted)["status"] == "failed");
  CHECK(wb->run(interrupted)["reason"] == "interrupted");
  CHECK(wb->run(rejected)["status"] == "rejected");
  const auto next = wb->submit(ws.request(2));
  CHECK(next["id"].get<std::string>() > interrupted);
  wb->wait_idle();
}

TEST_CASE("registry, datasets and capabilities") {
  Workspace ws("wb-assets");
  auto wb = ws.open(false);
  const auto models = wb->models()["models"];
  CHECK(models.size() == 2);
  const auto datasets = wb->datasets()["datasets"];
  REQUIRE(datasets.size() >= 1);
  const auto inst = wb->instances("builtin", "test", 2, 3);
  CHECK(inst["instances"].size() == 3);
  CHECK(inst["total"] == 8);
  CHECK_THROWS_AS(wb->instances("builtin", "nope", 0, 3), NotFoundError);
  const auto png = wb->instance_png("builtin", inst["instances"][0]["id"]);
  CHECK(png.size() > 8);
  CHECK(png[1] == 'P');

  CHECK_THROWS_AS(wb->register_model({{"path", (ws.root / "missing.ckpt").string()}}), NotFoundError);
  std::ofstream(ws.root / "junk.ckpt") << "junk";
  CHECK_THROWS_AS(wb->register_model({{"path", (ws.root / "junk.ckpt").string()}}), ValidationError);
  auto clf2 = toy::random_convnet<float>(ws.dataset.descriptor.geometry, 2, 77);
  models::save_classifier(ws.root / "clf2.ckpt", clf2);
  const auto entry = wb->register_model({{"path", (ws.root / "clf2.ckpt").string()}, {"id", "second"}});
  CHECK(entry["id"] == "second");
  CHECK_THROWS_AS(wb->register_model({{"path", (ws.root / "clf2.ckpt").string()}, {"id", "second"}}),
                  ValidationError);
  CHECK_THROWS_AS(wb->register_model({{"path", (ws.root / "clf2.ckpt").string()}, {"id", "../x"}}), ValidationError);
  CHECK(wb->models()["models"].size() == 3);

  const auto caps = wb->capabilities();
  const auto knobs = caps["knobs"];
  REQUIRE(knobs.is_array());
  std::set<std::string> names;
  for (const auto& k : knobs) names.insert(k["path"].get<std::string>());
  for (const char* n : {"attack.tau", "attack.lambda_d", "attack.distance", "attack.num_iterations", "attack.method",
                        "refine.threshold", "refine.dilation", "respacing"})
    CHECK(names.count(n) == 1);
  CHECK(caps["run_statuses"].size() == 5);
  CHECK(wb->health()["status"] == "ok");
}

TEST_CASE("http api") {
  Workspace ws("wb-http");
  auto wb = ws.open();
  HttpServer server(*wb, HttpOptions{{}, 50});
  const int port = server.bind_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread serving([&] { server.run(); });
  server.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(60, 0);

  auto res = cli.Get("/health");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["schema_version"] == kSchemaVersion);
  res = cli.Get("/");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(cli.Get("/capabilities")->status == 200);
  CHECK(cli.Get("/models")->status == 200);
  CHECK(cli.Get("/datasets")->status == 200);
  CHECK(cli.Get("/datasets/builtin/instances?split=test&limit=2")->status == 200);
  CHECK(cli.Get("/runs/run-424242")->status == 404);

  res = cli.Post("/runs", ws.degenerate_request().dump(), "application/json");
  CHECK(res->status == 422);
  CHECK(json::parse(res->body)["reason"] == "target equals prediction");
  auto bad = ws.request();
  bad["config"] = {{"attack", {{"tau", -3}}}};
  res = cli.Post("/runs", bad.dump(), "application/json");
  CHECK(res->status == 400);
  CHECK(json::parse(res->body)["error"]["problems"].size() >= 1);
  CHECK(cli.Post("/runs", "{oops", "application/json")->status == 400);

  res = cli.Post("/runs", ws.request().dump(), "application/json");
  REQUIRE(res->status == 202);
  const std::string id = json::parse(res->body)["id"];
  std::string stream;
  res = cli.Get("/runs/" + id + "/events");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type").find("text/event-stream") != std::string::npos);
  stream = res->body;
  CHECK(stream.find("event: progress") != std::string::npos);
  CHECK(stream.find("\"succeeded\"") != std::string::npos);

  res = cli.Get("/runs/" + id);
  CHECK(json::parse(res->body)["status"] == "succeeded");
  res = cli.Get("/runs/" + id + "/artifacts/counterfactual");
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type") == "image/png");
  CHECK(cli.Get("/runs?status=succeeded")->status == 200);

  res = cli.Post("/batches/evaluate", json{{"runs", {id}}, {"metrics", "flip_rate"}}.dump(), "application/json");
  CHECK(res->status == 200);
  const std::string batch_id = json::parse(res->body)["id"];
  CHECK(cli.Get("/batches/" + batch_id)->status == 200);

  server.stop();
  serving.join();
}
