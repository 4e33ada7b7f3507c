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

#include "vera/events.h"

#include <algorithm>
#include <sstream>

#include "vera/error.h"
#include "vera/model.h"

namespace vera::events {
namespace {

using nlohmann::json;

bool has_string(const json& payload, const char* name) {
  return payload.is_object() && payload.contains(name) && payload[name].is_string();
}

std::string provenance_kind(const json& payload) {
  if (!payload.is_object() || !payload.contains("provenance")) return "fresh";
  const json& p = payload["provenance"];
  if (p.is_string()) return p.get<std::string>();
  if (p.is_object() && p.contains("kind") && p["kind"].is_string()) {
    return p["kind"].get<std::string>();
  }
  return "fresh";
}

}  // namespace

char to_char(ActionKind kind) { return "NSPCRE"[static_cast<int>(kind)]; }

std::string_view to_string(ActionKind kind) {
  static constexpr std::string_view kNames[] = {"N", "S", "P", "C", "R", "E"};
  return kNames[static_cast<int>(kind)];
}

std::optional<ActionKind> parse_action(std::string_view text) {
  for (auto a : kAllActions) {
    if (to_string(a) == text) return a;
  }
  return std::nullopt;
}

void check_payload(const ActionEvent& e) {
  if (!e.payload.is_object()) fail(ErrorCode::kValidation, "payload must be an object");
  switch (e.action) {
    case ActionKind::kP:
      if (!has_string(e.payload, "component") || !has_string(e.payload, "parameter")) {
        fail(ErrorCode::kValidation, "P events need string fields component and parameter");
      }
      break;
    case ActionKind::kC:
    case ActionKind::kR:
      if (!has_string(e.payload, "edit")) {
        fail(ErrorCode::kValidation, "C/R events need a string field edit");
      }
      break;
    case ActionKind::kE:
      if (!has_string(e.payload, "species")) {
        fail(ErrorCode::kValidation, "E events need a string field species");
      }
      break;
    case ActionKind::kS:
    case ActionKind::kN:
      break;
  }
}

std::optional<exp::FeatureFlag> required_flag(const ActionEvent& e) {
  switch (e.action) {
    case ActionKind::kS: return exp::FeatureFlag::kSimulation;
    case ActionKind::kE: return exp::FeatureFlag::kLookupEol;
    case ActionKind::kN: {
      const std::string kind = provenance_kind(e.payload);
      if (kind == "cloned_from") return exp::FeatureFlag::kCloning;
      if (kind == "exemplar") return exp::FeatureFlag::kExemplarModels;
      return std::nullopt;
    }
    case ActionKind::kP: {
      if (!has_string(e.payload, "parameter")) return std::nullopt;
      auto p = cmp::parse_parameter(e.payload["parameter"].get<std::string>());
      if (p && cmp::is_advanced(*p)) return exp::FeatureFlag::kAdvancedParameters;
      return std::nullopt;
    }
    case ActionKind::kC:
    case ActionKind::kR:
      return std::nullopt;
  }
  return std::nullopt;
}

json event_to_json(const ActionEvent& e) {
  return {{"seq", e.seq},
          {"ts", format_rfc3339(e.ts)},
          {"experiment", e.experiment},
          {"group", e.group},
          {"participant", e.participant},
          {"model", e.model},
          {"action", to_string(e.action)},
          {"payload", e.payload}};
}

ActionEvent event_from_json(const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::kValidation, "event must be a JSON object");
  auto str = [&](const char* name) {
    if (!doc.contains(name) || !doc[name].is_string()) {
      fail(ErrorCode::kValidation, std::string("event field '") + name + "' must be a string");
    }
    return doc[name].get<std::string>();
  };
  ActionEvent e;
  if (!doc.contains("seq") || !doc["seq"].is_number_unsigned()) {
    fail(ErrorCode::kValidation, "event field 'seq' must be a non-negative integer");
  }
  e.seq = doc["seq"].get<std::uint64_t>();
  e.ts = parse_rfc3339(str("ts"));
  e.experiment = str("experiment");
  e.group = str("group");
  e.participant = str("participant");
  e.model = str("model");
  const std::string action = str("action");
  auto kind = parse_action(action);
  if (!kind) fail(ErrorCode::kValidation, "unknown action '" + action + "'");
  e.action = *kind;
  e.payload = doc.contains("payload") ? doc["payload"] : json::object();
  check_payload(e);
  return e;
}

std::string export_jsonl(const std::vector<ActionEvent>& events) {
  std::string out;
  for (const auto& e : events) {
    out += event_to_json(e).dump();
    out += '\n';
  }
  return out;
}

std::vector<ActionEvent> import_jsonl(std::istream& in) {
  std::vector<ActionEvent> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      json doc = json::parse(line);
      ActionEvent e = event_from_json(doc);
      if (!out.empty() && e.seq <= out.back().seq) {
        fail(ErrorCode::kValidation, "sequence numbers must strictly increase");
      }
      out.push_back(std::move(e));
    } catch (const json::exception& ex) {
      fail(ErrorCode::kValidation, "line " + std::to_string(lineno) + ": " + ex.what(),
           {{"line", lineno}});
    } catch (const Error& ex) {
      fail(ErrorCode::kValidation, "line " + std::to_string(lineno) + ": " + ex.what(),
           {{"line", lineno}});
    }
  }
  return out;
}

std::vector<ActionEvent> import_jsonl(std::string_view text) {
  std::istringstream in{std::string(text)};
  return import_jsonl(in);
}

std::vector<ActionEvent> import_jsonl_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot read " + path.string());
  return import_jsonl(in);
}

EventLog::EventLog(std::filesystem::path backing) : backing_(std::move(backing)) {
  if (std::filesystem::exists(*backing_)) load(import_jsonl_file(*backing_));
  out_.open(*backing_, std::ios::app);
  if (!out_) fail(ErrorCode::kIo, "cannot open event log " + backing_->string());
}

std::uint64_t EventLog::append(ActionEvent event) {
  check_payload(event);
  event.session.reset();
  std::lock_guard lock(mu_);
  event.seq = next_seq_;
  if (out_.is_open()) {
    out_ << event_to_json(event).dump() << '\n';
    out_.flush();
    if (!out_) fail(ErrorCode::kIo, "event log write failed");
  }
  ++next_seq_;
  events_.push_back(std::move(event));
  return events_.back().seq;
}

void EventLog::load(std::vector<ActionEvent> events) {
  std::lock_guard lock(mu_);
  for (auto& e : events) {
    if (e.seq < next_seq_) fail(ErrorCode::kValidation, "loaded events must extend the log");
    next_seq_ = e.seq + 1;
    events_.push_back(std::move(e));
  }
}

std::vector<ActionEvent> EventLog::snapshot() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::vector<ActionEvent> EventLog::snapshot(std::string_view experiment) const {
  std::lock_guard lock(mu_);
  std::vector<ActionEvent> out;
  for (const auto& e : events_) {
    if (e.experiment == experiment) out.push_back(e);
  }
  return out;
}

std::size_t EventLog::size() const {
  std::lock_guard lock(mu_);
  return events_.size();
}

std::uint64_t record(EventLog& log, const exp::ExperimentRegistry& registry, ActionEvent event) {
  auto rec = registry.assignment(event.experiment, event.participant);
  if (!rec) {
    fail(ErrorCode::kNotFound, "participant '" + event.participant +
                                   "' has no assignment in experiment '" + event.experiment + "'");
  }
  if (event.group.empty()) event.group = rec->group_id;
  if (event.group != rec->group_id) {
    fail(ErrorCode::kValidation, "event group does not match the participant's assignment");
  }
  check_payload(event);
  if (auto flag = required_flag(event);
      flag && !registry.is_enabled(event.experiment, event.group, *flag)) {
    fail(ErrorCode::kFeatureDisabled,
         std::string(exp::to_string(*flag)) + " is disabled for group " + event.group,
         {{"flag", exp::to_string(*flag)}});
  }
  return log.append(std::move(event));
}

ActionKind derive_action(Operation op, bool model_simulated) {
  switch (op) {
    case Operation::kNewModel:
    case Operation::kCloneModel:
    case Operation::kInstantiateExemplar:
      return ActionKind::kN;
    case Operation::kRunBatch:
      return ActionKind::kS;
    case Operation::kSetParameter:
      return ActionKind::kP;
    case Operation::kAddComponent:
    case Operation::kRemoveComponent:
    case Operation::kAddRelationship:
    case Operation::kRemoveRelationship:
    case Operation::kReplaceModel:
      return model_simulated ? ActionKind::kR : ActionKind::kC;
    case Operation::kApplyTraits:
      return ActionKind::kE;
  }
  return ActionKind::kN;
}

ActionKind SimulationHistory::derive(Operation op, std::string_view model_id) const {
  return derive_action(op, simulated(model_id));
}

void SimulationHistory::mark_simulated(std::string_view model_id) {
  std::lock_guard lock(mu_);
  simulated_.emplace(model_id);
}

bool SimulationHistory::simulated(std::string_view model_id) const {
  std::lock_guard lock(mu_);
  return simulated_.find(model_id) != simulated_.end();
}

std::vector<ActionKind> Session::actions() const {
  std::vector<ActionKind> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(e.action);
  return out;
}

std::vector<Session> sessionize(std::vector<ActionEvent> events, Seconds gap) {
  std::sort(events.begin(), events.end(), [](const ActionEvent& a, const ActionEvent& b) {
    return std::tie(a.participant, a.ts, a.seq) < std::tie(b.participant, b.ts, b.seq);
  });
  std::vector<Session> out;
  for (auto& e : events) {
    const bool split = out.empty() || out.back().participant != e.participant ||
                       e.ts - out.back().end > gap;
    if (split) {
      Session s;
      s.participant = e.participant;
      s.start = e.ts;
      s.end = e.ts;
      s.id = e.participant + "@" + format_rfc3339(e.ts);
      out.push_back(std::move(s));
    }
    Session& s = out.back();
    s.end = e.ts;
    e.session = s.id;
    s.events.push_back(std::move(e));
  }
  return out;
}

}  // namespace vera::events
