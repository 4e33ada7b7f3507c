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

// vera: command-line front end for the experiment service, the learner
// harness and offline analysis.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vera/bundle.h"
#include "vera/error.h"
#include "vera/harness.h"
#include "vera/service.h"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Common {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data_dir = "vera-data";
};

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? std::string(v) : fallback;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) vera::fail(vera::ErrorCode::kIo, "cannot read " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) vera::fail(vera::ErrorCode::kValidation, path.string() + " is not valid JSON");
  return doc;
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) vera::fail(vera::ErrorCode::kIo, "cannot write " + path.string());
}

vera::service::ServiceConfig service_config(const Common& common) {
  vera::service::ServiceConfig c;
  c.data_dir = common.data_dir;
  c.researcher_token = env_or("VERA_RESEARCHER_TOKEN", c.researcher_token);
  c.token_secret = env_or("VERA_TOKEN_SECRET", c.token_secret);
  c.base_url = env_or("VERA_BASE_URL", c.base_url);
  if (common.seed) c.default_seed = *common.seed;
  return c;
}

vera::service::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

int exit_code(const vera::Error& e) { return e.code() == vera::ErrorCode::kIo ? 2 : 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vera - A/B experiments for ecological modeling"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--seed", common.seed, "Seed for experiments and scenario runs");
  app.add_option("--out", common.out, "Output file or directory (simulate-learners writes a zip for *.zip)");
  app.add_option("--data-dir", common.data_dir, "Service state directory")->capture_default_str();

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  std::string host = env_or("VERA_BIND", "127.0.0.1");
  int port = 8080;
  std::optional<std::string> traits_fixture, traits_url;
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Port")->capture_default_str();
  serve->add_option("--traits-fixture", traits_fixture, "JSON array of trait records");
  serve->add_option("--traits-url", traits_url, "Base URL of a remote trait service");

  auto* create = app.add_subcommand("create", "Create an experiment from a spec file");
  std::string spec_path;
  create->add_option("spec", spec_path, "Experiment spec (JSON)")->required();

  auto* links = app.add_subcommand("links", "Print the join links of an experiment");
  std::string experiment_id;
  links->add_option("experiment", experiment_id, "Experiment id")->required();

  auto* simulate = app.add_subcommand("simulate-learners", "Run a scripted learner scenario");
  std::string script_path;
  simulate->add_option("script", script_path, "Scenario script (JSON); defaults when omitted");

  auto* analyze = app.add_subcommand("analyze", "Replay an event log or export bundle");
  std::string log_path;
  analyze->add_option("log", log_path, "events.jsonl, bundle directory or bundle .zip")->required();

  auto* report = app.add_subcommand("report", "Render tables and charts from analytics.json");
  std::string analytics_path;
  report->add_option("analytics", analytics_path, "analytics.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*serve) {
      auto config = service_config(common);
      if (traits_fixture) config.traits.fixture = *traits_fixture;
      if (traits_url) config.traits.remote_base_url = *traits_url;
      vera::service::Service svc(config);
      vera::service::HttpServer server(svc);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on " << host << ":" << port << "\n";
      if (!server.listen(host, port)) {
        std::cerr << "cannot bind " << host << ":" << port << "\n";
        return 2;
      }
      return 0;
    }
    if (*create) {
      vera::exp::ExperimentSpec spec = vera::exp::spec_from_json(read_json(spec_path));
      if (common.seed && !spec.seed) spec.seed = *common.seed;
      vera::service::Service svc(service_config(common));
      const auto e = svc.create_experiment(std::move(spec));
      json out = svc.registry().to_json(e.id);
      json l = json::array();
      for (const auto& link : svc.registry().join_links(e.id, svc.config().base_url)) l.push_back(link.url);
      out["links"] = l;
      std::cout << out.dump(2) << "\n";
      return 0;
    }
    if (*links) {
      vera::service::Service svc(service_config(common));
      for (const auto& link : svc.registry().join_links(experiment_id, svc.config().base_url)) {
        std::cout << (link.group_id ? *link.group_id : std::string("random")) << "\t" << link.url << "\n";
      }
      return 0;
    }
    if (*simulate) {
      auto script = script_path.empty() ? vera::harness::ScenarioScript::default_script()
                                        : vera::harness::load_script(script_path);
      if (common.seed) script.seed = *common.seed;
      const auto result = vera::harness::run_scenario(script);
      if (fs::path(common.out).extension() == ".zip") {
        write_text(common.out, vera::bundle::zip_archive(result.bundle.files()));
      } else if (!common.out.empty()) {
        vera::bundle::write_bundle(result.bundle, common.out);
      }
      std::cout << vera::harness::render_tables(result.bundle.analytics);
      return 0;
    }
    if (*analyze) {
      const auto result = vera::harness::replay(log_path);
      if (!common.out.empty()) write_text(fs::path(common.out) / "analytics.json", result.analytics_text);
      std::cout << result.table;
      return 0;
    }
    if (*report) {
      const json analytics = read_json(analytics_path);
      std::cout << vera::harness::render_tables(analytics);
      if (!common.out.empty()) {
        write_text(fs::path(common.out) / "coverage.svg", vera::harness::render_coverage_svg(analytics));
        write_text(fs::path(common.out) / "patterns.svg", vera::harness::render_patterns_svg(analytics));
      }
      return 0;
    }
  } catch (const vera::Error& e) {
    std::cerr << "error: " << vera::to_string(e.code()) << ": " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
