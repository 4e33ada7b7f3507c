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
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vera/bundle.h"
#include "vera/experiment.h"

// Scripted learners that drive the full service stack in-process, plus the
// offline replay and report rendering used by the CLI.
namespace vera::harness {

struct LearnerPolicy {
  enum class Kind { kGuided, kUnguided };
  Kind kind = Kind::kUnguided;
  std::set<std::string> focus;       // parameter labels, guided only
  double focus_probability = 0.9;    // guided only
  double changes_mean = 8;           // parameter changes per session
  double structural_probability = 0.1;
  double eol_probability = 0.1;
  double simulate_probability = 0.5;  // after each change

  static LearnerPolicy guided();
  static LearnerPolicy unguided();
  void check() const;
};

nlohmann::json policy_to_json(const LearnerPolicy& policy);
// Fields missing from doc take the defaults of the policy kind.
LearnerPolicy policy_from_json(const nlohmann::json& doc);

struct ScenarioPhase {
  std::string name;
  int sessions = 1;  // per learner
};

struct ScenarioScript {
  std::vector<ScenarioPhase> phases;
  int learners = 20;  // per group
  std::string base_model = "wolf-sheep-grass";
  std::uint64_t seed = 7;
  LearnerPolicy policy_a = LearnerPolicy::unguided();
  LearnerPolicy policy_b = LearnerPolicy::guided();
  // Feature flags per group; all enabled when unset.
  std::optional<exp::GroupConfig> flags_a;
  std::optional<exp::GroupConfig> flags_b;
  int phase_days = 40;  // spacing between phase starts
  int sim_runs = 3;
  int sim_steps = 24;
  // Attempt gated actions even when the group's flag is off and expect
  // feature_disabled back, the way a tampered client would.
  bool probe_disabled = true;

  void check() const;
  static ScenarioScript default_script();
};

nlohmann::json script_to_json(const ScenarioScript& script);
ScenarioScript script_from_json(const nlohmann::json& doc);
ScenarioScript load_script(const std::filesystem::path& path);

struct ScenarioResult {
  std::string experiment_id;
  std::vector<std::string> group_ids;  // A then B
  bundle::ExportBundle bundle;
  // Body of the analytics route at the end of the run.
  std::string analytics;
  // flag -> number of gated attempts answered with feature_disabled, per group.
  std::map<std::string, std::map<std::string, std::size_t>> rejected;
};

ScenarioResult run_scenario(const ScenarioScript& script);
ScenarioResult run_scenario(ScenarioScript script, const LearnerPolicy& policy_a,
                            const LearnerPolicy& policy_b);

struct ReplayResult {
  nlohmann::json analytics;
  std::string analytics_text;  // serialized analytics.json
  std::string table;
};

// Accepts an events.jsonl file or an exported bundle directory.
ReplayResult replay(const std::filesystem::path& path);

std::string render_tables(const nlohmann::json& analytics);
std::string render_coverage_svg(const nlohmann::json& analytics);
std::string render_patterns_svg(const nlohmann::json& analytics);

}  // namespace vera::harness
