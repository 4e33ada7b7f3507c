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

#include <array>
#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vera/events.h"
#include "vera/experiment.h"
#include "vera/model.h"

// Automated analysis over captured events and participant models.
namespace vera::analytics {

using events::ActionEvent;
using events::ActionKind;

struct GroupStats {
  std::size_t learners = 0;
  std::size_t models = 0;
  Seconds total_session_time{0};
  std::map<ActionKind, std::size_t> action_frequency;

  // total_session_time / learners, zero when there are no learners.
  double mean_session_time_per_learner_s() const;
};

GroupStats group_stats(const std::vector<ActionEvent>& events, std::string_view group);

// |components| + |relationships|
std::size_t model_complexity(const cmp::Model& model);
// |distinct component names| + |distinct relationship kinds|
std::size_t model_variety(const cmp::Model& model);

// A (component, parameter) combination, e.g. ("Canis lupus", "lifespan").
// Relationship rate edits use the relation name as component:
// ("Consumes", "consumption rate").
struct ParamPair {
  std::string component;
  std::string parameter;
  auto operator<=>(const ParamPair&) const = default;
};

using ParameterSpace = std::set<ParamPair>;

std::optional<ParamPair> pair_of(const ActionEvent& event);

// Every pair touched by a P event in `events`; callers pick the scope.
ParameterSpace build_parameter_space(const std::vector<ActionEvent>& events);

// A labelled time window; an unset bound is open.
struct PhaseWindow {
  std::string name;
  std::optional<Timestamp> start;
  std::optional<Timestamp> end;

  bool contains(Timestamp ts) const;
  static PhaseWindow all() { return {"all", std::nullopt, std::nullopt}; }
  static PhaseWindow from(const exp::Phase& phase) { return {phase.name, phase.start, phase.end}; }
};

// Splits the event timeline wherever consecutive events are at least
// `min_gap` apart; windows are named "Phase I", "Phase II", ...
std::vector<PhaseWindow> infer_phases(const std::vector<ActionEvent>& events,
                                      Seconds min_gap = std::chrono::hours(24 * 7));

// Round-half-up of 100 * num / den to two decimals, computed exactly.
double round_pct(std::size_t num, std::size_t den);

struct CoverageReport {
  std::string group;
  std::string phase;
  ParameterSpace explored;
  double percentage = 0;
};

// Throws vera::Error(kNoData) when `space` is empty.
CoverageReport coverage(const std::vector<ActionEvent>& events, std::string_view group,
                        const PhaseWindow& phase, const ParameterSpace& space);

// Default guided-instruction parameter set (labels).
std::set<std::string> default_focus_set();

// Share of P events whose parameter is in `focus`; nullopt when the
// group/phase has no P events. Throws kValidation for an empty focus set.
std::optional<double> focus_share(const std::vector<ActionEvent>& events, std::string_view group,
                                  const PhaseWindow& phase, const std::set<std::string>& focus);

struct TransitionMatrix {
  std::vector<ActionKind> states;  // observed actions, alphabet order
  std::map<ActionKind, std::map<ActionKind, std::size_t>> counts;
  // Row-normalized counts; rows without outgoing transitions are absent.
  std::map<ActionKind, std::map<ActionKind, double>> probs;

  nlohmann::json to_json() const;
};

// Throws kValidation for an empty sequence.
TransitionMatrix transition_matrix(const std::vector<ActionKind>& actions);
TransitionMatrix transition_matrix(const events::Session& session);
// Normalizes summed counts.
TransitionMatrix pooled(const std::vector<TransitionMatrix>& matrices);

enum class PatternClass { kObservation, kConstruction, kExploration };
std::string_view to_string(PatternClass cls);

// Observation when neither C nor R occurs; Exploration when C or R occurs,
// P occurs, and some pair of S events encloses a C or R; Construction
// otherwise. Throws kValidation for an empty sequence.
PatternClass classify_pattern(const std::vector<ActionKind>& actions);
PatternClass classify_pattern(const events::Session& session);

struct ReportInput {
  std::vector<std::string> groups;
  std::vector<PhaseWindow> phases;
  std::vector<cmp::Model> models;
  // model id -> group id, used to split complexity/variety per group
  std::map<std::string, std::string> model_groups;
  std::vector<ActionEvent> events;
  std::set<std::string> focus = default_focus_set();
};

// analytics.json:
// {groups:{id:{learners, models, total_session_time_s,
//              mean_session_time_per_learner_s, frequency:{N,S,P,C,R,E}}},
//  models:[{id, group, complexity, variety}], parameter_space:[...],
//  coverage:[{group, phase, explored, pct}], focus:[{group, phase, pct}],
//  patterns:{group:{Observation, Construction, Exploration}},
//  transitions:{group:{from:{to:p}}}}
nlohmann::json analytics_report(const ReportInput& input);

}  // namespace vera::analytics
