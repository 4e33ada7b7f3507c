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

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vera/experiment.h"
#include "vera/time.h"

// Capture of participant actions in the N/S/P/C/R/E alphabet.
namespace vera::events {

enum class ActionKind { kN, kS, kP, kC, kR, kE };

inline constexpr std::array<ActionKind, 6> kAllActions = {ActionKind::kN, ActionKind::kS,
                                                          ActionKind::kP, ActionKind::kC,
                                                          ActionKind::kR, ActionKind::kE};

char to_char(ActionKind kind);
std::string_view to_string(ActionKind kind);  // "N", "S", ...
std::optional<ActionKind> parse_action(std::string_view text);

struct ActionEvent {
  std::uint64_t seq = 0;
  Timestamp ts{};
  std::string experiment;
  std::string group;
  std::string participant;
  std::optional<std::string> session;  // set by sessionize, never exported
  std::string model;
  ActionKind action = ActionKind::kN;
  // P: {component, parameter, old, new}; C/R: {edit, target};
  // S: {batch, runs}; E: {species, changes}; N: {provenance}.
  nlohmann::json payload = nlohmann::json::object();

  bool operator==(const ActionEvent&) const = default;
};

// Throws vera::Error(kValidation) when the payload lacks an action's
// required fields.
void check_payload(const ActionEvent& event);

// Feature flag that must be enabled for the event's group, if any.
std::optional<exp::FeatureFlag> required_flag(const ActionEvent& event);

nlohmann::json event_to_json(const ActionEvent& event);
ActionEvent event_from_json(const nlohmann::json& doc);

std::string export_jsonl(const std::vector<ActionEvent>& events);
// Throws vera::Error(kValidation) naming the 1-based line that failed.
std::vector<ActionEvent> import_jsonl(std::istream& in);
std::vector<ActionEvent> import_jsonl(std::string_view text);
std::vector<ActionEvent> import_jsonl_file(const std::filesystem::path& path);

// Append-only event store. Appends are serialized; readers take snapshots.
// With a backing file every append is written through as one JSONL line.
class EventLog {
 public:
  EventLog() = default;
  explicit EventLog(std::filesystem::path backing);
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  // Assigns the next sequence number and returns it.
  std::uint64_t append(ActionEvent event);
  // Loads previously exported events, keeping their sequence numbers.
  void load(std::vector<ActionEvent> events);

  std::vector<ActionEvent> snapshot() const;
  std::vector<ActionEvent> snapshot(std::string_view experiment) const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::vector<ActionEvent> events_;
  std::uint64_t next_seq_ = 1;
  std::optional<std::filesystem::path> backing_;
  std::ofstream out_;
};

// Validates against the experiment registry (assignment and feature gates)
// and appends. Gate violations raise vera::Error(kFeatureDisabled).
std::uint64_t record(EventLog& log, const exp::ExperimentRegistry& registry, ActionEvent event);

// Participant-facing operations that produce events.
enum class Operation {
  kNewModel,
  kCloneModel,
  kInstantiateExemplar,
  kRunBatch,
  kSetParameter,
  kAddComponent,
  kRemoveComponent,
  kAddRelationship,
  kRemoveRelationship,
  kReplaceModel,
  kApplyTraits,
};

// Structural edits map to C until the model's first simulation and to R
// afterwards.
ActionKind derive_action(Operation op, bool model_simulated);

// Tracks which models have been simulated so derive_action can be fed.
class SimulationHistory {
 public:
  ActionKind derive(Operation op, std::string_view model_id) const;
  void mark_simulated(std::string_view model_id);
  bool simulated(std::string_view model_id) const;

 private:
  mutable std::mutex mu_;
  std::set<std::string, std::less<>> simulated_;
};

inline constexpr std::chrono::minutes kDefaultSessionGap{30};

struct Session {
  std::string id;  // participant + "@" + RFC 3339 start
  std::string participant;
  std::vector<ActionEvent> events;
  Timestamp start{};
  Timestamp end{};

  Seconds duration() const { return end - start; }
  std::vector<ActionKind> actions() const;
};

// Splits each participant's stream where consecutive events are more than
// `gap` apart. Input order does not matter; events are sorted by
// (participant, ts, seq) first.
std::vector<Session> sessionize(std::vector<ActionEvent> events,
                                Seconds gap = kDefaultSessionGap);

}  // namespace vera::events
