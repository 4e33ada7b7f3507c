// Copyright 2026 The VERA-AB Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <chrono>
#include <filesystem>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "vera/bundle.h"
#include "vera/model_json.h"
#include "vera/service.h"

namespace vera::service {
namespace {

using nlohmann::json;
using namespace std::chrono_literals;

const std::string kResearcher = "researcher-token";

json flags(bool on) {
  return {{"advanced_parameters", on}, {"cloning", on}, {"exemplar_models", on},
          {"lookup_eol", on}, {"simulation", on}};
}

json experiment_doc(bool second_on = false) {
  return {{"name", "study"},
          {"mode", "manual"},
          {"seed", 5},
          {"groups", json::array({{{"flags", flags(true)}}, {{"flags", flags(second_on)}}})},
          {"phases", json::array({{{"name", "Phase I"}, {"start", "2022-01-01T00:00:00Z"},
                                   {"end", "2022-02-01T00:00:00Z"}},
                                  {{"name", "Phase II"}, {"start", "2022-02-01T00:00:00Z"},
                                   {"end", "2022-03-01T00:00:00Z"}}})}};
}

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override { start({}); }

  void start(std::optional<std::filesystem::path> dir) {
    ServiceConfig cfg;
    cfg.data_dir = std::move(dir);
    cfg.token_secret = "test-secret";
    svc_ = std::make_unique<Service>(cfg, clock_);
  }

  Response call(const Request& r) { return svc_->handle(r); }

  std::string create() {
    const auto res = call(Request::post("/researcher/experiments", experiment_doc(), kResearcher));
    EXPECT_EQ(res.status, 201) << res.body;
    return res.json()["id"];
  }

  // Returns the participant token.
  std::string join(const std::string& group, const std::string& who) {
    const auto res = call(Request::get("/researcher/join-experiment?group=" + group + "&participant=" + who));
    EXPECT_EQ(res.status, 200) << res.body;
    return res.json()["token"];
  }

  std::string new_exemplar_model(const std::string& token) {
    const auto res = call(Request::post("/models", {{"exemplar", "wolf-sheep-grass"}}, token));
    EXPECT_EQ(res.status, 201) << res.body;
    return res.json()["model"]["id"];
  }

  std::size_t event_count(const std::string& experiment) { return svc_->experiment_events(experiment).size(); }

  std::shared_ptr<ManualClock> clock_ =
      std::make_shared<ManualClock>(parse_rfc3339("2022-01-10T09:00:00Z"));
  std::unique_ptr<Service> svc_;
};

TEST_F(ServiceTest, ResearcherRoutesNeedTheToken) {
  EXPECT_EQ(call(Request::post("/researcher/experiments", experiment_doc())).status, 401);
  EXPECT_EQ(call(Request::get("/researcher/experiments", "wrong")).status, 401);
  const auto res = call(Request::get("/researcher/experiments", "wrong"));
  EXPECT_EQ(res.json()["code"], "unauthorized");
  EXPECT_EQ(call(Request::get("/researcher/experiments", kResearcher)).status, 200);
  EXPECT_EQ(call(Request::get("/nowhere", kResearcher)).status, 404);
}

TEST_F(ServiceTest, LinksFollowGroupNumbering) {
  create();
  const auto res = call(Request::post("/researcher/experiments", experiment_doc(), kResearcher));
  const json doc = res.json();
  ASSERT_EQ(doc["links"].size(), 2u);
  EXPECT_EQ(doc["links"][0]["url"], "http://localhost:8080/researcher/join-experiment?group=3");
  EXPECT_EQ(doc["links"][1]["url"], "http://localhost:8080/researcher/join-experiment?group=4");
  const auto links = call(Request::get("/researcher/experiments/2/links", kResearcher)).json();
  EXPECT_EQ(links["links"], doc["links"]);

  const auto joined = call(Request::get("/researcher/join-experiment?group=3")).json();
  EXPECT_EQ(joined["experiment"], "2");
  EXPECT_EQ(joined["group"], "3");
  EXPECT_TRUE(joined["welcome_doc"].is_null());
  EXPECT_EQ(call(Request::get("/researcher/join-experiment?group=99")).status, 404);
}

TEST_F(ServiceTest, CreationErrorsAreValidation) {
  json three = experiment_doc();
  three["groups"].push_back({{"flags", flags(true)}});
  auto res = call(Request::post("/researcher/experiments", three, kResearcher));
  EXPECT_EQ(res.status, 400);
  EXPECT_EQ(res.json()["code"], "validation_error");
  res = call({"POST", "/researcher/experiments", {}, kResearcher, "application/json", "{nope"});
  EXPECT_EQ(res.status, 400);
}

TEST_F(ServiceTest, TokensAreSignedAndScoped) {
  const std::string id = create();
  const std::string token = join("1", "alice");
  const auto who = svc_->verify_token(token);
  ASSERT_TRUE(who);
  EXPECT_EQ(who->participant, "alice");
  EXPECT_EQ(who->group, "1");
  std::string forged = token;
  forged[forged.size() - 1] = forged.back() == '0' ? '1' : '0';
  EXPECT_FALSE(svc_->verify_token(forged));
  EXPECT_EQ(call(Request::get("/participant", forged)).status, 401);
  const auto me = call(Request::get("/participant", token)).json();
  EXPECT_EQ(me["participant"], "alice");
  EXPECT_EQ(call(Request::get("/researcher/experiments/" + id, token)).status, 401);
  // join again: sticky, same group
  const auto again = call(Request::get("/researcher/join-experiment?group=2&participant=alice")).json();
  EXPECT_EQ(again["group"], "1");
}

TEST_F(ServiceTest, ModelRoundTripAndEvents) {
  const std::string id = create();
  const std::string token = join("1", "alice");
  const json body = {{"name", "mine"},
                     {"components", json::array({{{"name", "fox"}, {"kind", "biotic"}},
                                                 {{"name", "hare"}, {"params", {{"lifespan", 12}}}}})},
                     {"relationships", json::array({{{"source", "fox"}, {"target", "hare"}, {"rate", 0.3}}})}};
  auto res = call(Request::post("/models", body, token));
  ASSERT_EQ(res.status, 201) << res.body;
  const json model = res.json()["model"];
  const std::string mid = model["id"];
  const auto got = call(Request::get("/models/" + mid, token));
  EXPECT_EQ(got.json(), model);
  EXPECT_EQ(got.body, cmp::model_to_json(cmp::model_from_json(got.json())).dump() + "\n");
  EXPECT_EQ(call(Request::get("/models/" + mid, kResearcher)).status, 200);

  res = call(Request::post("/models/" + mid + "/parameters",
                           {{"component", "hare"}, {"parameter", "lifespan"}, {"value", 18}}, token));
  ASSERT_EQ(res.status, 200) << res.body;
  EXPECT_EQ(res.json()["action"], "P");
  const auto evs = svc_->experiment_events(id);
  ASSERT_EQ(evs.size(), 2u);
  EXPECT_EQ(evs[0].action, events::ActionKind::kN);
  EXPECT_EQ(evs[1].payload["component"], "hare");
  EXPECT_EQ(evs[1].payload["parameter"], "lifespan");
  EXPECT_EQ(evs[1].payload["old"], 12);
  EXPECT_EQ(evs[1].payload["new"], 18);

  // another participant cannot touch it
  const std::string bob = join("1", "bob");
  EXPECT_EQ(call(Request::get("/models/" + mid, bob)).status, 401);
  EXPECT_EQ(call(Request::post("/models/" + mid + "/parameters",
                               {{"component", "hare"}, {"parameter", "lifespan"}, {"value", 3}}, bob))
                .status,
            401);
  EXPECT_EQ(event_count(id), 2u);
}

TEST_F(ServiceTest, FailedEditsRecordNothing) {
  const std::string id = create();
  const std::string token = join("1", "alice");
  const std::string mid = new_exemplar_model(token);
  const auto before = event_count(id);
  const auto model_before = call(Request::get("/models/" + mid, token)).body;
  auto res = call(Request::post("/models/" + mid + "/parameters",
                                {{"component", "Canis lupus"}, {"parameter", "lifespan"}, {"value", -4}}, token));
  EXPECT_EQ(res.status, 400);
  res = call(Request::post("/models/" + mid + "/parameters",
                           {{"component", "Unicorn"}, {"parameter", "lifespan"}, {"value", 4}}, token));
  EXPECT_EQ(res.status, 404);
  res = call(Request::post("/models/" + mid + "/components", {{"name", "Grass"}, {"kind", "biotic"}}, token));
  EXPECT_EQ(res.status, 409);
  EXPECT_EQ(event_count(id), before);
  EXPECT_EQ(call(Request::get("/models/" + mid, token)).body, model_before);
}

TEST_F(ServiceTest, StructuralEditsBecomeRevisionsAfterSimulation) {
  const std::string id = create();
  const std::string token = join("1", "alice");
  const std::string mid = new_exemplar_model(token);
  auto res = call(Request::post("/models/" + mid + "/components", {{"name", "fox"}, {"kind", "biotic"}}, token));
  ASSERT_EQ(res.status, 200) << res.body;
  EXPECT_EQ(res.json()["action"], "C");
  res = call(Request::post("/models/" + mid + "/simulate", {{"runs", 2}, {"steps", 6}, {"seed", 1}}, token));
  ASSERT_EQ(res.status, 201) << res.body;
  EXPECT_EQ(res.json()["status"], "done");
  EXPECT_FALSE(res.json()["aggregates"].empty());
  res = call(Request::post("/models/" + mid + "/components", {{"name", "owl"}, {"kind", "biotic"}}, token));
  EXPECT_EQ(res.json()["action"], "R");
  std::string actions;
  for (const auto& e : svc_->experiment_events(id)) actions += events::to_char(e.action);
  EXPECT_EQ(actions, "NCSR");
}

TEST_F(ServiceTest, EveryGateRejectsWithoutRecording) {
  const std::string id = create();
  const std::string on = join("1", "on");
  const std::string off = join("2", "off");
  const std::string on_model = new_exemplar_model(on);
  // group 2 cannot use exemplars, so build its model by hand
  auto res = call(Request::post(
      "/models", {{"name", "m"}, {"components", json::array({{{"name", "Canis lupus"}}, {{"name", "Ovis aries"}}})},
                  {"relationships", json::array({{{"source", "Canis lupus"}, {"target", "Ovis aries"}}})}},
      off));
  ASSERT_EQ(res.status, 201) << res.body;
  const std::string off_model = res.json()["model"]["id"];
  const auto before = event_count(id);

  struct Probe {
    const char* flag;
    std::function<Request(const std::string&, const std::string&)> make;
  };
  const std::vector<Probe> probes = {
      {"advanced_parameters",
       [](const std::string& t, const std::string& m) {
         return Request::post("/models/" + m + "/parameters",
                              {{"component", "Canis lupus"}, {"parameter", "respiratory_rate"}, {"value", 0.5}}, t);
       }},
      {"cloning", [](const std::string& t, const std::string& m) { return Request::post("/models/" + m + "/clone", json::object(), t); }},
      {"exemplar_models", [](const std::string& t, const std::string&) { return Request::post("/models", {{"exemplar", "kudzu"}}, t); }},
      {"lookup_eol",
       [](const std::string& t, const std::string& m) {
         return Request::post("/models/" + m + "/apply-traits", {{"component", "Canis lupus"}}, t);
       }},
      {"simulation", [](const std::string& t, const std::string& m) { return Request::post("/models/" + m + "/simulate", {{"runs", 1}, {"steps", 2}}, t); }},
  };
  for (const auto& p : probes) {
    const auto r = call(p.make(off, off_model));
    EXPECT_EQ(r.status, 403) << p.flag << " " << r.body;
    EXPECT_EQ(r.json()["code"], "feature_disabled") << p.flag;
    EXPECT_EQ(r.json()["detail"]["flag"], p.flag);
  }
  EXPECT_EQ(call(Request::get("/exemplars", off)).status, 403);
  EXPECT_EQ(call(Request::get("/traits?name=Canis%20lupus", off)).status, 403);
  EXPECT_EQ(event_count(id), before);
  for (const auto& p : probes) {
    const auto r = call(p.make(on, on_model));
    EXPECT_TRUE(r.ok()) << p.flag << " " << r.body;
  }
  EXPECT_EQ(event_count(id), before + probes.size());
  for (const auto& e : svc_->experiment_events(id)) {
    if (e.group == "2") EXPECT_FALSE(events::required_flag(e)) << events::to_string(e.action);
  }
}

TEST_F(ServiceTest, TraitLookupAndApply) {
  create();
  const std::string token = join("1", "alice");
  const auto rec = call(Request::get("/traits?name=ovis%20aries", token));
  ASSERT_EQ(rec.status, 200);
  EXPECT_EQ(rec.json()["canonical_name"], "Ovis aries");
  EXPECT_EQ(call(Request::get("/traits?name=Unicornis", token)).status, 404);
  EXPECT_EQ(call(Request::get("/traits", token)).status, 400);
  const std::string mid = new_exemplar_model(token);
  const auto res = call(Request::post("/models/" + mid + "/apply-traits", {{"component", "Canis lupus"}}, token));
  ASSERT_EQ(res.status, 200) << res.body;
  EXPECT_EQ(res.json()["action"], "E");
}

TEST_F(ServiceTest, AnalyticsMatchOfflineComputation) {
  const std::string id = create();
  const std::string token = join("1", "alice");
  const std::string mid = new_exemplar_model(token);
  for (int v = 1; v <= 3; ++v) {
    clock_->advance(2min);
    call(Request::post("/models/" + mid + "/parameters",
                       {{"component", "Ovis aries"}, {"parameter", "offspring count"}, {"value", v}}, token));
  }
  const auto res = call(Request::get("/researcher/experiments/" + id + "/analytics", kResearcher));
  ASSERT_EQ(res.status, 200);
  auto b = svc_->export_bundle(id);
  EXPECT_EQ(res.body, bundle::dump_analytics(bundle::compute_analytics(b)));
  EXPECT_EQ(res.body, svc_->analytics_json(id));
  const json doc = res.json();
  EXPECT_EQ(doc["groups"]["1"]["frequency"]["P"], 3);
  EXPECT_EQ(doc["coverage"][0]["pct"], 100.0);

  const auto zip = call(Request::get("/researcher/experiments/" + id + "/export", kResearcher));
  EXPECT_EQ(zip.content_type, "application/zip");
  const auto files = bundle::unzip_archive(zip.body);
  EXPECT_EQ(files.at("analytics.json"), res.body);
  EXPECT_EQ(files.at("events.jsonl"), events::export_jsonl(b.events));
}

TEST_F(ServiceTest, ClosedExperimentsRejectParticipants) {
  const std::string id = create();
  const std::string token = join("1", "alice");
  const std::string mid = new_exemplar_model(token);
  EXPECT_EQ(call(Request::post("/researcher/experiments/" + id + "/close", json::object(), kResearcher)).status, 200);
  EXPECT_EQ(call(Request::post("/researcher/experiments/" + id + "/close", json::object(), kResearcher)).status, 409);
  EXPECT_EQ(call(Request::get("/researcher/join-experiment?group=1&participant=zed")).status, 409);
  const auto before = event_count(id);
  EXPECT_EQ(call(Request::post("/models/" + mid + "/parameters",
                               {{"component", "Ovis aries"}, {"parameter", "lifespan"}, {"value", 5}}, token))
                .status,
            409);
  EXPECT_EQ(event_count(id), before);
  EXPECT_EQ(call(Request::get("/researcher/experiments/" + id + "/analytics", kResearcher)).status, 200);
}

TEST_F(ServiceTest, DocumentsUploadAndDownload) {
  json doc = experiment_doc();
  doc["welcome_doc"] = {{"media_type", "text/plain"}, {"data", "aGVsbG8="}};
  const auto res = call(Request::post("/researcher/experiments", doc, kResearcher));
  ASSERT_EQ(res.status, 201) << res.body;
  const std::string id = res.json()["id"];
  const std::string token = join("1", "alice");
  const auto joined = call(Request::get("/researcher/join-experiment?group=1&participant=alice")).json();
  EXPECT_EQ(joined["welcome_doc"], "/experiments/" + id + "/docs/welcome");
  const auto got = call(Request::get("/experiments/" + id + "/docs/welcome", token));
  EXPECT_EQ(got.body, "hello");
  EXPECT_EQ(got.content_type, "text/plain");
  EXPECT_EQ(call(Request::get("/experiments/" + id + "/docs/exit", token)).status, 404);
  Request put{"PUT", "/researcher/experiments/" + id + "/docs/exit", {}, kResearcher, "application/pdf", "%PDF"};
  EXPECT_EQ(call(put).status, 200);
  EXPECT_EQ(call(Request::get("/experiments/" + id + "/docs/exit", token)).body, "%PDF");
}

TEST_F(ServiceTest, LargeSimulationsRunAsynchronously) {
  ServiceConfig cfg;
  cfg.sync_simulation_limit = 10;
  svc_ = std::make_unique<Service>(cfg, clock_);
  create();
  const std::string token = join("1", "alice");
  const std::string mid = new_exemplar_model(token);
  const auto res = call(Request::post("/models/" + mid + "/simulate", {{"runs", 4}, {"steps", 12}}, token));
  ASSERT_EQ(res.status, 202) << res.body;
  const std::string batch = res.json()["batch"];
  json status;
  for (int i = 0; i < 200; ++i) {
    status = call(Request::get("/simulations/" + batch, token)).json();
    if (status["status"] != "pending") break;
    std::this_thread::sleep_for(10ms);
  }
  EXPECT_EQ(status["status"], "done");
  const auto series = call(Request::get("/simulations/" + batch + "?series", token)).json();
  ASSERT_EQ(series["series"].size(), 4u);
  EXPECT_EQ(series["series"][0]["values"]["Ovis aries"].size(), 13u);
}

TEST_F(ServiceTest, SimulationSeedIsReproducible) {
  create();
  const std::string token = join("1", "alice");
  const std::string mid = new_exemplar_model(token);
  const json req = {{"runs", 3}, {"steps", 12}, {"seed", 77}};
  const auto a = call(Request::post("/models/" + mid + "/simulate", req, token)).json();
  const auto b = call(Request::post("/models/" + mid + "/simulate", req, token)).json();
  EXPECT_EQ(a["aggregates"], b["aggregates"]);
  EXPECT_NE(a["batch"], b["batch"]);
}

TEST_F(ServiceTest, StateSurvivesRestart) {
  const auto dir = std::filesystem::temp_directory_path() / "vera_service_state";
  std::filesystem::remove_all(dir);
  start(dir);
  const std::string id = create();
  const std::string token = join("1", "alice");
  const std::string mid = new_exemplar_model(token);
  call(Request::post("/models/" + mid + "/simulate", {{"runs", 2}, {"steps", 4}}, token));
  const std::string analytics = svc_->analytics_json(id);
  const std::string model = call(Request::get("/models/" + mid, token)).body;

  start(dir);
  EXPECT_EQ(svc_->analytics_json(id), analytics);
  EXPECT_EQ(call(Request::get("/models/" + mid, token)).body, model);
  // simulated before the restart, so a structural edit is a revision
  const auto res = call(Request::post("/models/" + mid + "/components", {{"name", "fox"}}, token));
  EXPECT_EQ(res.json()["action"], "R");
  // group numbering continues
  EXPECT_EQ(call(Request::post("/researcher/experiments", experiment_doc(), kResearcher)).json()["groups"][0]["group_id"], "3");
  svc_.reset();
  std::filesystem::remove_all(dir);
}

TEST_F(ServiceTest, ConcurrentEditsKeepOneEventPerSuccess) {
  const std::string id = create();
  std::vector<std::string> tokens, models;
  for (int i = 0; i < 4; ++i) {
    tokens.push_back(join("1", "p" + std::to_string(i)));
    models.push_back(new_exemplar_model(tokens.back()));
  }
  std::atomic<int> ok{0};
  {
    std::vector<std::jthread> threads;
    for (int t = 0; t < 8; ++t) {
      threads.emplace_back([&, t] {
        const std::size_t who = static_cast<std::size_t>(t % 4);
        for (int i = 0; i < 25; ++i) {
          const auto r = call(Request::post("/models/" + models[who] + "/parameters",
                                            {{"component", "Ovis aries"}, {"parameter", "lifespan"}, {"value", 1 + (i % 30)}},
                                            tokens[who]));
          if (r.ok()) ++ok;
        }
      });
    }
  }
  EXPECT_EQ(ok, 200);
  EXPECT_EQ(event_count(id), 4u + 200u);
}

TEST(Http, ServesTheSameApi) {
  Service svc(ServiceConfig{});
  HttpServer server(svc);
  const int port = server.bind_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::jthread loop([&] { server.listen_after_bind(); });
  httplib::Client client("127.0.0.1", port);
  for (int i = 0; i < 100; ++i) {
    if (client.Get("/researcher/experiments")) break;
    std::this_thread::sleep_for(10ms);
  }
  httplib::Headers auth{{"Authorization", "Bearer " + kResearcher}};
  auto res = client.Post("/researcher/experiments", auth, experiment_doc().dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 201);
  res = client.Get("/researcher/join-experiment?group=2&participant=web");
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body)["group"], "2");
  res = client.Get("/researcher/experiments");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 401);
  EXPECT_EQ(json::parse(res->body)["code"], "unauthorized");
  server.stop();
}

}  // namespace
}  // namespace vera::service
