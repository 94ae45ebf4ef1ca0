#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <unistd.h>

#include "ccf/pipeline.hpp"
#include "ccf/service/config.hpp"
#include "ccf/service/server.hpp"
#include "ccf/synthplant.hpp"

using namespace ccf;
using namespace ccf::service;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("ccf_service_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

struct Workspace {
  fs::path root;
  std::shared_ptr<Registry> registry;
  TimeSeriesFrame frame;
  TrainedModel trained;
  std::string dataset_id;
  std::string model_id;

  explicit Workspace(const std::string& name) : root(scratch(name)) {
    registry = std::make_shared<Registry>(root);
    frame = synth::generate(synth::cesar1_defaults(6, 3.0));
    auto fc = FeatureConfig::hourly(300, cesar1_schema().input_columns, columns::kAmpFtir, 6);
    fc.include_target_lags = true;
    auto p = prepare(frame, fc);
    trained.model = Model(make_descriptor(p, {Architecture::Basic, 4}), 2);
    dataset_id = registry->add_dataset(frame, synth::provenance_json(synth::cesar1_defaults(6, 3.0)));
    model_id = registry->add_model(trained, dataset_id);
  }
  ~Workspace() { fs::remove_all(root); }
};

Workspace& shared() {
  static Workspace ws("shared");
  return ws;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Io;
}

json post(Api& api, const std::string& route, const json& body, int expect = 200) {
  auto r = api.handle("POST", std::string(kApiPrefix) + route, body.dump());
  EXPECT_EQ(r.status, expect) << r.body.dump();
  // what a client sees: the serialized text parsed back
  return json::parse(r.body.dump());
}

}  // namespace

// ---------------------------------------------------------------------------
// Registry

TEST(Registry, StoresAndReloadsDatasetsAndModels) {
  auto& ws = shared();
  EXPECT_EQ(ws.dataset_id, "ds-1");
  EXPECT_EQ(ws.model_id, "m-1");
  Registry again(ws.root);
  ASSERT_TRUE(again.has_dataset("ds-1"));
  ASSERT_TRUE(again.has_model("m-1"));
  EXPECT_TRUE(again.open_dataset("ds-1") == ws.frame);
  auto e = again.model("m-1");
  EXPECT_EQ(e.architecture, "lstm");
  EXPECT_EQ(e.target, columns::kAmpFtir);
  EXPECT_EQ(e.param_count, param_count(ws.trained.model.descriptor()));
  EXPECT_EQ(e.fingerprint, ws.trained.model.descriptor().features.fingerprint());
  auto m = again.open_model("m-1");
  EXPECT_EQ(m.meta.dataset_id, "ds-1");
  EXPECT_EQ(serialize({m.model, {}}), serialize({ws.trained.model, {}}));
  EXPECT_TRUE(fs::exists(ws.root / "datasets" / "ds-1.provenance.json"));
  auto d = again.dataset("ds-1");
  EXPECT_EQ(d.rows, 864u);
  EXPECT_EQ(d.interval_s, 300);
}

TEST(Registry, MetricsAreRecorded) {
  Workspace ws("metrics");
  MetricsReport r;
  r.mse = 0.5;
  r.n = 3;
  ws.registry->set_metrics(ws.model_id, r);
  EXPECT_EQ(Registry(ws.root).model(ws.model_id).metrics["MSE"], 0.5);
  EXPECT_EQ(kind_of([&] { ws.registry->set_metrics("m-99", r); }), ErrorKind::NotFound);
}

TEST(Registry, IdsAreSequential) {
  Workspace ws("ids");
  EXPECT_EQ(ws.registry->add_dataset(ws.frame), "ds-2");
  EXPECT_EQ(ws.registry->add_model(ws.trained, "ds-2"), "m-2");
  EXPECT_EQ(Registry(ws.root).add_dataset(ws.frame), "ds-3");
  EXPECT_EQ(ws.registry->datasets().size(), 2u);  // this instance has not reloaded
  ws.registry->reload();
  EXPECT_EQ(ws.registry->datasets().size(), 3u);
}

TEST(Registry, Errors) {
  Workspace ws("errors");
  EXPECT_EQ(kind_of([&] { ws.registry->open_dataset("ds-9"); }), ErrorKind::NotFound);
  EXPECT_EQ(kind_of([&] { ws.registry->open_model("m-9"); }), ErrorKind::NotFound);
  EXPECT_EQ(kind_of([&] { ws.registry->add_model(ws.trained, "ds-9"); }), ErrorKind::NotFound);
  {
    std::ofstream out(ws.root / "datasets" / "ds-1.csv", std::ios::app);
    out << "tampered\n";
  }
  EXPECT_EQ(kind_of([&] { ws.registry->open_dataset("ds-1"); }), ErrorKind::Checksum);
  {
    std::ofstream out(ws.root / "models" / "m-1.ccfm", std::ios::binary | std::ios::trunc);
    out << "CCFMODEL";
  }
  EXPECT_EQ(kind_of([&] { ws.registry->open_model("m-1"); }), ErrorKind::Truncated);
}

// ---------------------------------------------------------------------------
// Settings

TEST(Settings, DefaultsFileAndEnvironment) {
  Settings s;
  EXPECT_EQ(s.count("batch_size"), 64u);
  EXPECT_EQ(s.number("learning_rate"), 1e-3);
  EXPECT_FALSE(s.flag("include_target_lags"));
  EXPECT_EQ(s.counts("rolling_windows"), (std::vector<std::size_t>{6, 12, 24, 36}));
  std::istringstream in("# tuning\nbatch_size = 32\n  patience=7  # fewer\n\ninclude_target_lags = true\n");
  auto t = Settings::parse(in);
  EXPECT_EQ(t.train_config().batch_size, 32u);
  EXPECT_EQ(t.train_config().patience, 7u);
  EXPECT_TRUE(t.feature_config(columns::kAmpFtir, 300).include_target_lags);
  ::setenv("CCF_MAX_EPOCHS", "9", 1);
  t.apply_env();
  ::unsetenv("CCF_MAX_EPOCHS");
  EXPECT_EQ(t.train_config().max_epochs, 9u);
  auto fc = t.feature_config(columns::kAmpFtir, 300);
  EXPECT_EQ(fc.inputs, cesar1_schema().input_columns);
  EXPECT_EQ(fc.window, 12u);
  EXPECT_DOUBLE_EQ(t.split().train, 0.7);
}

TEST(Settings, Errors) {
  std::istringstream unknown("warp_speed = 9\n");
  EXPECT_EQ(kind_of([&] { Settings::parse(unknown); }), ErrorKind::Config);
  std::istringstream no_eq("batch_size 9\n");
  EXPECT_EQ(kind_of([&] { Settings::parse(no_eq); }), ErrorKind::Config);
  Settings s;
  s.set("batch_size", "lots");
  EXPECT_EQ(kind_of([&] { s.train_config(); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { Settings::load("/nonexistent/ccf.conf"); }), ErrorKind::Io);
}

// ---------------------------------------------------------------------------
// API, in process

TEST(Api, ListsModelsAndDatasets) {
  Api api(shared().registry);
  auto m = api.handle("GET", "/api/v1/models", "");
  ASSERT_EQ(m.status, 200);
  ASSERT_EQ(m.body["models"].size(), 1u);
  EXPECT_EQ(m.body["models"][0]["id"], "m-1");
  EXPECT_EQ(m.body["models"][0]["architecture"], "lstm");
  auto d = api.handle("GET", "/api/v1/datasets", "");
  ASSERT_EQ(d.body["datasets"].size(), 1u);
  EXPECT_EQ(d.body["datasets"][0]["rows"], 864);
  EXPECT_EQ(d.body["datasets"][0]["start"], "2020-11-01T00:00:00Z");
}

TEST(Api, RoutingErrors) {
  Api api(shared().registry);
  EXPECT_EQ(api.handle("GET", "/api/v2/models", "").status, 404);
  EXPECT_EQ(api.handle("GET", "/api/v1/nothing", "").status, 404);
  EXPECT_EQ(api.handle("POST", "/api/v1/models", "{}").status, 405);
  EXPECT_EQ(api.handle("GET", "/api/v1/whatif", "").status, 405);
  auto bad = api.handle("POST", "/api/v1/forecast", "{not json");
  EXPECT_EQ(bad.status, 400);
  EXPECT_EQ(bad.body["error"]["code"], "bad_request");
  EXPECT_EQ(api.handle("POST", "/api/v1/forecast", "[1,2]").status, 400);
}

TEST(Api, UnknownIdsAre404WithField) {
  Api api(shared().registry);
  auto r = post(api, "forecast", {{"model_id", "m-404"}, {"dataset_id", "ds-1"}}, 404);
  EXPECT_EQ(r["error"]["field"], "model_id");
  r = post(api, "whatif", {{"model_id", "m-1"}, {"dataset_id", "ds-404"}, {"interventions", json::array()}}, 404);
  EXPECT_EQ(r["error"]["field"], "dataset_id");
  r = post(api, "sweep", {{"dataset_id", "ds-1"}}, 422);
  EXPECT_EQ(r["error"]["field"], "model_id");
}

TEST(Api, ForecastEqualsInProcess) {
  auto& ws = shared();
  Api api(ws.registry);
  auto r = post(api, "forecast", {{"model_id", "m-1"}, {"dataset_id", "ds-1"}, {"start", 300}, {"horizon", 50}});
  auto want = forecast(ws.trained.model, ws.frame, {300, 50});
  EXPECT_EQ(r["predicted"].get<std::vector<double>>(), want.predicted);
  EXPECT_EQ(r["timestamps"][0], format_iso8601(want.timestamps[0]));
  EXPECT_EQ(r["actual"][0].get<double>(), *want.actual[0]);
  EXPECT_EQ(r["mode"], "exogenous");

  auto ar = post(api, "forecast", {{"model_id", "m-1"}, {"dataset_id", "ds-1"}, {"mode", "autoregressive"}});
  auto want_ar = forecast(ws.trained.model, ws.frame, {864 - 288, 288, ForecastMode::Autoregressive});
  EXPECT_EQ(ar["start"], 576);
  EXPECT_EQ(ar["horizon"], 288);
  EXPECT_EQ(ar["predicted"].get<std::vector<double>>(), want_ar.predicted);
}

TEST(Api, ForecastValidation) {
  Api api(shared().registry);
  auto field = [&](json extra) {
    json body{{"model_id", "m-1"}, {"dataset_id", "ds-1"}};
    body.update(extra);
    return post(api, "forecast", body, 422)["error"]["field"].get<std::string>();
  };
  EXPECT_EQ(field({{"horizon", 0}}), "horizon");
  EXPECT_EQ(field({{"horizon", -3}}), "horizon");
  EXPECT_EQ(field({{"start", 2}}), "start");
  EXPECT_EQ(field({{"start", 860}, {"horizon", 10}}), "horizon");
  EXPECT_EQ(field({{"mode", "sideways"}}), "mode");
}

TEST(Api, WhatIfEqualsInProcess) {
  auto& ws = shared();
  Api api(ws.registry);
  json body{{"model_id", "m-1"},
            {"dataset_id", "ds-1"},
            {"window", {{"start", 500}, {"length", 48}}},
            {"interventions",
             {{{"feature", columns::kLeanSolventTemp}, {"delta_pct", -15}}, {{"feature", columns::kFgInletFlow}, {"delta_pct", 5}}}}};
  auto r = post(api, "whatif", body);
  auto want = what_if(ws.trained.model, ws.frame,
                      {{columns::kLeanSolventTemp, -0.15}, {columns::kFgInletFlow, 0.05}}, {500, 48});
  EXPECT_EQ(r["impact_pct"].get<double>(), want.impact_pct);
  EXPECT_EQ(r["baseline"].get<std::vector<double>>(), want.baseline);
  EXPECT_EQ(r["counterfactual"].get<std::vector<double>>(), want.counterfactual);
  EXPECT_EQ(r["interventions"][0]["delta_pct"], -15);

  auto def = post(api, "whatif", {{"model_id", "m-1"}, {"dataset_id", "ds-1"}, {"interventions", json::array()}});
  EXPECT_EQ(def["window"]["start"], 864 - 576);
  EXPECT_EQ(def["window"]["length"], 576);
  EXPECT_EQ(def["impact_pct"].get<double>(), 0.0);
}

TEST(Api, WhatIfValidation) {
  Api api(shared().registry);
  auto err = [&](json ivs, json window = nullptr) {
    json body{{"model_id", "m-1"}, {"dataset_id", "ds-1"}, {"interventions", ivs}};
    if (!window.is_null()) body["window"] = window;
    return post(api, "whatif", body, 422)["error"];
  };
  auto e = err({{{"feature", columns::kFgInletFlow}, {"delta_pct", 25}}});
  EXPECT_EQ(e["field"], "interventions[0].delta_pct");
  EXPECT_EQ(e["code"], "delta_out_of_range");
  EXPECT_EQ(err({{{"feature", columns::kFgInletFlow}, {"delta_pct", 5}}, {{"feature", columns::kFgInletTemp}, {"delta_pct", -20.5}}})["field"],
            "interventions[1].delta_pct");
  EXPECT_EQ(err({{{"feature", "warp_core"}, {"delta_pct", 5}}})["field"], "interventions[0].feature");
  EXPECT_EQ(err({{{"feature", columns::kFgInletFlow}}})["field"], "interventions[0].delta_pct");
  EXPECT_EQ(err({{{"feature", columns::kFgInletFlow}, {"delta_pct", "ten"}}})["field"], "interventions[0].delta_pct");
  EXPECT_EQ(err({{{"feature", columns::kFgInletFlow}, {"delta_pct", 1}}, {{"feature", columns::kFgInletFlow}, {"delta_pct", 2}}})["field"],
            "interventions[1].feature");
  EXPECT_EQ(err(json::array({json{{"feature", columns::kFgInletFlow}, {"delta_pct", 1}},
                             json{{"feature", columns::kFgInletTemp}, {"delta_pct", 1}},
                             json{{"feature", columns::kLeanSolventFlow}, {"delta_pct", 1}}}))["field"],
            "interventions");
  EXPECT_EQ(err(json::array(), {{"start", 1}, {"length", 5}})["field"], "window.start");
  EXPECT_EQ(err(json::array(), {{"start", 800}, {"length", 100}})["field"], "window.length");
  EXPECT_EQ(err(json::array(), {{"start", 800}, {"length", 0}})["field"], "window.length");
}

TEST(Api, SweepEqualsInProcess) {
  auto& ws = shared();
  Api api(ws.registry);
  const EvalWindow w{600, 24};
  json win{{"start", w.start}, {"length", w.length}};
  auto single = post(api, "sweep", {{"model_id", "m-1"}, {"dataset_id", "ds-1"}, {"window", win}});
  auto want = sweep_single(ws.trained.model, ws.frame, w);
  want.model_id = "m-1";
  auto got = grid_from_json(single);
  EXPECT_EQ(got.cells, want.cells);
  EXPECT_EQ(got.features, want.features);
  EXPECT_EQ(single["cells"].size(), 8u);
  EXPECT_EQ(single["cells"][0].size(), 9u);

  auto pair = post(api, "sweep",
                   {{"model_id", "m-1"}, {"dataset_id", "ds-1"}, {"window", win},
                    {"pair", {columns::kLeanSolventTemp, columns::kUpperWwTemp}}});
  auto want_pair = sweep_pair(ws.trained.model, ws.frame, columns::kLeanSolventTemp, columns::kUpperWwTemp, w);
  EXPECT_EQ(grid_from_json(pair).cells, want_pair.cells);
  EXPECT_EQ(pair["row_deltas"].size(), 9u);

  auto sub = post(api, "sweep",
                  {{"model_id", "m-1"}, {"dataset_id", "ds-1"}, {"window", win},
                   {"features", {columns::kFgInletFlow}}, {"deltas_pct", {-10, 10}}});
  auto want_sub = sweep_single(ws.trained.model, ws.frame, w, {columns::kFgInletFlow}, {-0.1, 0.1});
  EXPECT_EQ(grid_from_json(sub).cells, want_sub.cells);
}

TEST(Api, SweepValidation) {
  Api api(shared().registry);
  auto err = [&](json extra) {
    json body{{"model_id", "m-1"}, {"dataset_id", "ds-1"}, {"window", {{"start", 600}, {"length", 12}}}};
    body.update(extra);
    return post(api, "sweep", body, 422)["error"];
  };
  auto eleven = json::array({-20, -15, -10, -5, 0, 5, 10, 15, 20, 1, 2});  // 8 x 11 = 88 cells
  auto big = err({{"deltas_pct", eleven}});
  EXPECT_EQ(big["code"], "sweep_too_large");
  EXPECT_EQ(big["field"], "deltas_pct");
  EXPECT_EQ(err({{"deltas_pct", {0, 30}}})["field"], "deltas_pct[1]");
  EXPECT_EQ(err({{"pair", {columns::kFgInletFlow}}})["field"], "pair");
  EXPECT_EQ(err({{"pair", {columns::kFgInletFlow, columns::kFgInletFlow}}})["field"], "pair[1]");
  EXPECT_EQ(err({{"pair", {columns::kFgInletFlow, "nope"}}})["field"], "pair[1]");
  EXPECT_EQ(err({{"features", json::array()}})["field"], "features");
  EXPECT_EQ(err({{"features", {"nope"}}})["field"], "features[0]");
}

TEST(Api, IncompatibleDatasetIsAConflict) {
  Workspace ws("conflict");
  auto coarse = downsample_alternate(ws.frame);
  auto id = ws.registry->add_dataset(coarse);
  Api api(ws.registry);
  auto r = post(api, "forecast", {{"model_id", ws.model_id}, {"dataset_id", id}}, 409);
  EXPECT_EQ(r["error"]["code"], "fingerprint_mismatch");
}

// ---------------------------------------------------------------------------
// API over HTTP

TEST(Http, ResponsesMatchInProcessHandling) {
  auto& ws = shared();
  Api api(ws.registry);
  httplib::Server server;
  mount(server, api);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto models = client.Get("/api/v1/models");
  ASSERT_TRUE(models);
  EXPECT_EQ(models->status, 200);
  EXPECT_EQ(json::parse(models->body), api.handle("GET", "/api/v1/models", "").body);
  EXPECT_EQ(models->get_header_value("Access-Control-Allow-Origin"), "*");

  json body{{"model_id", "m-1"},
            {"dataset_id", "ds-1"},
            {"window", {{"start", 500}, {"length", 30}}},
            {"interventions", {{{"feature", columns::kUpperWwTemp}, {"delta_pct", 10}}}}};
  auto wi = client.Post("/api/v1/whatif", body.dump(), "application/json");
  ASSERT_TRUE(wi);
  EXPECT_EQ(wi->status, 200);
  auto want = what_if(ws.trained.model, ws.frame, {{columns::kUpperWwTemp, 0.1}}, {500, 30});
  EXPECT_EQ(json::parse(wi->body)["impact_pct"].get<double>(), want.impact_pct);

  body["interventions"][0]["delta_pct"] = 25;
  auto bad = client.Post("/api/v1/whatif", body.dump(), "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 422);
  EXPECT_EQ(json::parse(bad->body)["error"]["field"], "interventions[0].delta_pct");

  auto pre = client.Options("/api/v1/sweep");
  ASSERT_TRUE(pre);
  EXPECT_EQ(pre->status, 204);

  server.stop();
  th.join();
}
