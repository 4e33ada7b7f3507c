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

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "vera/bundle.h"
#include "vera/error.h"
#include "vera/events.h"
#include "vera/experiment.h"
#include "vera/model.h"
#include "vera/sim.h"
#include "vera/time.h"
#include "vera/traits.h"

// Researcher and participant API. The Service is transport-independent:
// it takes Request values and returns Response values, and HttpServer
// adapts it to HTTP. Participant operations record exactly one action event
// each, and only when they succeed.
namespace vera::service {

struct ServiceConfig {
  std::optional<std::filesystem::path> data_dir;  // in-memory when unset
  std::string researcher_token = "researcher-token";
  std::string token_secret = "change-me";
  std::uint64_t default_seed = 0;
  std::string base_url = "http://localhost:8080";
  // Batches with runs * steps above this run as background jobs.
  std::size_t sync_simulation_limit = 100000;
  traits::ProviderConfig traits;
};

struct Request {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string bearer;  // token from "Authorization: Bearer ..."
  std::string content_type;
  std::string body;

  static Request get(std::string path, std::string bearer = {});
  static Request post(std::string path, const nlohmann::json& body, std::string bearer = {});
  static Request put(std::string path, const nlohmann::json& body, std::string bearer = {});
  static Request del(std::string path, std::string bearer = {});
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;

  nlohmann::json json() const;
  bool ok() const { return status >= 200 && status < 300; }
};

int http_status(ErrorCode code);

struct Principal {
  enum class Role { kResearcher, kParticipant };
  Role role = Role::kParticipant;
  std::string participant;
  std::string experiment;
  std::string group;
};

class Service {
 public:
  explicit Service(ServiceConfig config,
                   std::shared_ptr<const Clock> clock = std::make_shared<SystemClock>());
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Never throws; failures become {code, message, detail} bodies.
  Response handle(const Request& request);

  const ServiceConfig& config() const { return config_; }
  exp::ExperimentRegistry& registry() { return registry_; }
  std::vector<events::ActionEvent> experiment_events(std::string_view experiment_id) const;
  bundle::ExportBundle export_bundle(std::string_view experiment_id);
  std::string analytics_json(std::string_view experiment_id);

  // Offline helpers for the CLI.
  exp::Experiment create_experiment(exp::ExperimentSpec spec);

  std::string issue_token(const Principal& principal) const;
  std::optional<Principal> verify_token(std::string_view token) const;

 private:
  struct ModelEntry {
    cmp::Model model;
    std::string experiment;
    std::string group;
    std::string participant;
  };
  struct BatchEntry {
    std::string id;
    std::string model_id;
    std::string experiment;
    std::string participant;
    cmp::Model model;  // snapshot the batch ran on
    sim::SimConfig config;
    std::optional<std::string> target;
    std::string status;  // pending | done | failed
    std::string error;
    sim::SimSpec spec;
    std::vector<sim::RunSeries> series;
  };
  Response dispatch(const Request& request);
  Principal authenticate(const Request& request) const;
  Principal require_researcher(const Request& request) const;
  Principal require_participant(const Request& request) const;
  void require_flag(const Principal& who, exp::FeatureFlag flag) const;

  // Researcher routes.
  Response create_experiment_route(const Request& request);
  Response get_experiment_route(const std::string& id);
  Response links_route(const std::string& id);
  Response analytics_route(const std::string& id);
  Response export_route(const std::string& id);
  Response close_route(const std::string& id);
  Response upload_doc_route(const std::string& id, const std::string& which, const Request& request);
  // Participant routes.
  Response join_route(const Request& request);
  Response doc_route(const Request& request, const std::string& id, const std::string& which);
  Response me_route(const Request& request);
  Response exemplars_route(const Request& request);
  Response create_model_route(const Request& request);
  Response get_model_route(const Request& request, const std::string& id);
  Response put_model_route(const Request& request, const std::string& id);
  Response clone_route(const Request& request, const std::string& id);
  Response add_component_route(const Request& request, const std::string& id);
  Response remove_component_route(const Request& request, const std::string& id,
                                  const std::string& component);
  Response add_relationship_route(const Request& request, const std::string& id);
  Response remove_relationship_route(const Request& request, const std::string& id,
                                     const std::string& relationship);
  Response parameters_route(const Request& request, const std::string& id);
  Response simulate_route(const Request& request, const std::string& id);
  Response simulation_route(const Request& request, const std::string& batch);
  Response traits_route(const Request& request);
  Response apply_traits_route(const Request& request, const std::string& id);

  // Copy-edit-record-commit: `edit` mutates a copy of the participant's
  // model and fills the event; the copy is stored only if recording succeeds.
  Response edit_model(const Request& request, const std::string& id, events::Operation op,
                      const std::function<nlohmann::json(cmp::Model&, events::ActionEvent&)>& edit);
  Response store_new_model(const Principal& who, cmp::Model model, events::Operation op,
                           nlohmann::json payload, int status);
  std::uint64_t record_event(const Principal& who, const std::string& model_id,
                             events::ActionKind action, nlohmann::json payload);

  void run_batch_job(const std::string& batch_id);
  nlohmann::json batch_json(const BatchEntry& batch) const;
  std::map<std::string, std::string> batch_files(const BatchEntry& batch) const;

  void persist_experiment(const std::string& id);
  void persist_model(const ModelEntry& entry);
  void persist_batch(const BatchEntry& batch);
  void load_state();

  ServiceConfig config_;
  std::shared_ptr<const Clock> clock_;
  IdSource ids_;
  exp::ExperimentRegistry registry_;
  std::unique_ptr<events::EventLog> log_;
  events::SimulationHistory history_;
  std::shared_ptr<traits::TraitCache> traits_;
  std::vector<cmp::Model> exemplars_;

  mutable std::mutex models_mu_;
  std::map<std::string, ModelEntry, std::less<>> models_;
  std::map<std::string, std::shared_ptr<std::mutex>, std::less<>> model_locks_;

  mutable std::mutex batches_mu_;
  std::map<std::string, BatchEntry, std::less<>> batches_;
  std::vector<std::jthread> jobs_;

  // Serializes captures so that the event order matches commit order.
  std::mutex capture_mu_;
};

// Thin HTTP binding over Service using cpp-httplib.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();

  // Blocks until stop().
  bool listen(const std::string& host, int port);
  // Binds to an ephemeral port and returns it; call listen_after_bind() next.
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace vera::service
