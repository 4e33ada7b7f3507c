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

#include "vera/experiment.h"

#include <algorithm>
#include <charconv>
#include <set>

#include "vera/error.h"
#include "vera/rng.h"

namespace vera::exp {
namespace {

using nlohmann::json;

std::uint64_t as_number(std::string_view id) {
  std::uint64_t n = 0;
  auto [ptr, ec] = std::from_chars(id.data(), id.data() + id.size(), n);
  return ec == std::errc() && ptr == id.data() + id.size() ? n : 0;
}

}  // namespace

std::string_view to_string(FeatureFlag flag) {
  switch (flag) {
    case FeatureFlag::kAdvancedParameters: return "advanced_parameters";
    case FeatureFlag::kCloning: return "cloning";
    case FeatureFlag::kExemplarModels: return "exemplar_models";
    case FeatureFlag::kLookupEol: return "lookup_eol";
    case FeatureFlag::kSimulation: return "simulation";
  }
  return "simulation";
}

std::optional<FeatureFlag> parse_flag(std::string_view text) {
  for (auto f : kAllFlags) {
    if (to_string(f) == text) return f;
  }
  return std::nullopt;
}

std::string_view to_string(AssignmentMode mode) {
  return mode == AssignmentMode::kManual ? "manual" : "random";
}

std::string_view to_string(Status status) {
  switch (status) {
    case Status::kDraft: return "draft";
    case Status::kActive: return "active";
    case Status::kClosed: return "closed";
  }
  return "draft";
}

bool GroupConfig::enabled(FeatureFlag flag) const {
  auto it = flags.find(flag);
  return it != flags.end() && it->second;
}

GroupConfig GroupConfig::all_enabled(std::string group_id) {
  GroupConfig g;
  g.group_id = std::move(group_id);
  for (auto f : kAllFlags) g.flags[f] = true;
  return g;
}

const GroupConfig* Experiment::group(std::string_view group_id) const {
  for (const auto& g : groups) {
    if (g.group_id == group_id) return &g;
  }
  return nullptr;
}

std::optional<std::string> Experiment::phase_at(Timestamp ts) const {
  for (const auto& p : phases) {
    if (p.contains(ts)) return p.name;
  }
  return std::nullopt;
}

void check_spec(const ExperimentSpec& spec) {
  if (spec.name.empty()) fail(ErrorCode::kValidation, "experiment name must not be empty");
  if (spec.groups.size() != 2) {
    fail(ErrorCode::kValidation,
         "an experiment has exactly two groups, got " + std::to_string(spec.groups.size()),
         {{"groups", spec.groups.size()}});
  }
  for (const auto& g : spec.groups) {
    for (auto f : kAllFlags) {
      if (!g.flags.contains(f)) {
        fail(ErrorCode::kValidation, "group is missing flag '" + std::string(to_string(f)) + "'",
             {{"flag", to_string(f)}});
      }
    }
  }
  if (!spec.groups[0].group_id.empty() && spec.groups[0].group_id == spec.groups[1].group_id) {
    fail(ErrorCode::kValidation, "group ids must differ");
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < spec.phases.size(); ++i) {
    const Phase& p = spec.phases[i];
    if (p.name.empty()) fail(ErrorCode::kValidation, "phase name must not be empty");
    if (!names.insert(p.name).second) {
      fail(ErrorCode::kValidation, "duplicate phase name '" + p.name + "'");
    }
    if (!(p.start < p.end)) fail(ErrorCode::kValidation, "phase '" + p.name + "' is empty");
    if (i > 0 && p.start < spec.phases[i - 1].end) {
      fail(ErrorCode::kValidation,
           "phase '" + p.name + "' overlaps or precedes '" + spec.phases[i - 1].name + "'");
    }
  }
  for (const auto* doc : {&spec.welcome_doc, &spec.exit_doc}) {
    if (*doc && (*doc)->bytes.size() > kMaxDocumentBytes) {
      fail(ErrorCode::kValidation, "document exceeds 20 MiB");
    }
  }
}

json phases_to_json(const std::vector<Phase>& phases) {
  json out = json::array();
  for (const auto& p : phases) {
    out.push_back(
        {{"name", p.name}, {"start", format_rfc3339(p.start)}, {"end", format_rfc3339(p.end)}});
  }
  return out;
}

std::vector<Phase> phases_from_json(const json& doc) {
  std::vector<Phase> out;
  if (doc.is_null()) return out;
  if (!doc.is_array()) fail(ErrorCode::kValidation, "phases must be an array");
  for (const auto& p : doc) {
    if (!p.is_object() || !p.contains("name") || !p.contains("start") || !p.contains("end") ||
        !p["name"].is_string() || !p["start"].is_string() || !p["end"].is_string()) {
      fail(ErrorCode::kValidation, "phase needs string fields name, start, end");
    }
    out.push_back({p["name"].get<std::string>(), parse_rfc3339(p["start"].get<std::string>()),
                   parse_rfc3339(p["end"].get<std::string>())});
  }
  return out;
}

json group_to_json(const GroupConfig& group) {
  json flags = json::object();
  for (auto f : kAllFlags) flags[std::string(to_string(f))] = group.enabled(f);
  return {{"group_id", group.group_id}, {"flags", std::move(flags)}};
}

GroupConfig group_from_json(const json& doc, bool require_all_flags) {
  if (!doc.is_object()) fail(ErrorCode::kValidation, "group must be an object");
  GroupConfig g;
  if (doc.contains("group_id")) {
    const json& id = doc["group_id"];
    if (id.is_string()) {
      g.group_id = id.get<std::string>();
    } else if (id.is_number_unsigned()) {
      g.group_id = std::to_string(id.get<std::uint64_t>());
    } else if (!id.is_null()) {
      fail(ErrorCode::kValidation, "group_id must be a string");
    }
  }
  const json flags = doc.value("flags", json::object());
  if (!flags.is_object()) fail(ErrorCode::kValidation, "flags must be an object");
  for (const auto& [k, v] : flags.items()) {
    auto f = parse_flag(k);
    if (!f) fail(ErrorCode::kValidation, "unknown feature flag '" + k + "'", {{"flag", k}});
    if (!v.is_boolean()) fail(ErrorCode::kValidation, "flag '" + k + "' must be a boolean");
    g.flags[*f] = v.get<bool>();
  }
  if (require_all_flags) {
    for (auto f : kAllFlags) {
      if (!g.flags.contains(f)) {
        fail(ErrorCode::kValidation, "group is missing flag '" + std::string(to_string(f)) + "'",
             {{"flag", to_string(f)}});
      }
    }
  }
  return g;
}

ExperimentSpec spec_from_json(const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::kValidation, "experiment spec must be an object");
  ExperimentSpec spec;
  try {
    spec.name = doc.value("name", std::string());
    const std::string mode = doc.value("mode", std::string("manual"));
    if (mode == "manual") {
      spec.mode = AssignmentMode::kManual;
    } else if (mode == "random") {
      spec.mode = AssignmentMode::kRandom;
    } else {
      fail(ErrorCode::kValidation, "unknown assignment mode '" + mode + "'");
    }
    const json groups = doc.value("groups", json::array());
    if (!groups.is_array()) fail(ErrorCode::kValidation, "groups must be an array");
    for (const auto& g : groups) spec.groups.push_back(group_from_json(g, true));
    spec.phases = phases_from_json(doc.value("phases", json::array()));
    if (doc.contains("seed")) spec.seed = doc["seed"].get<std::uint64_t>();
    spec.start_as_draft = doc.value("draft", false);
  } catch (const json::exception& e) {
    fail(ErrorCode::kValidation, std::string("experiment spec: ") + e.what());
  }
  return spec;
}

std::size_t random_group_index(std::uint64_t seed, std::string_view participant) {
  return static_cast<std::size_t>(mix_key({seed, fnv1a64(participant)}) >> 63);
}

Experiment& ExperimentRegistry::find(std::string_view experiment_id) {
  auto it = experiments_.find(experiment_id);
  if (it == experiments_.end()) {
    fail(ErrorCode::kNotFound, "unknown experiment '" + std::string(experiment_id) + "'");
  }
  return it->second;
}

const Experiment& ExperimentRegistry::find(std::string_view experiment_id) const {
  return const_cast<ExperimentRegistry*>(this)->find(experiment_id);
}

Experiment ExperimentRegistry::create(ExperimentSpec spec, Timestamp now) {
  check_spec(spec);
  std::lock_guard lock(mu_);
  for (const auto& g : spec.groups) {
    if (g.group_id.empty()) continue;
    for (const auto& [id, e] : experiments_) {
      if (e.group(g.group_id) != nullptr) {
        fail(ErrorCode::kConflict, "group id '" + g.group_id + "' is already in use");
      }
    }
  }
  Experiment e;
  e.id = std::to_string(next_experiment_++);
  e.name = std::move(spec.name);
  e.groups = std::move(spec.groups);
  for (auto& g : e.groups) {
    if (g.group_id.empty()) {
      g.group_id = std::to_string(next_group_++);
    } else {
      next_group_ = std::max(next_group_, as_number(g.group_id) + 1);
    }
  }
  e.mode = spec.mode;
  e.welcome_doc = std::move(spec.welcome_doc);
  e.exit_doc = std::move(spec.exit_doc);
  e.phases = std::move(spec.phases);
  e.status = spec.start_as_draft ? Status::kDraft : Status::kActive;
  e.created_at = now;
  e.seed = spec.seed.value_or(mix_key({default_seed_, next_experiment_}));
  auto [it, inserted] = experiments_.emplace(e.id, std::move(e));
  return it->second;
}

Experiment ExperimentRegistry::get(std::string_view experiment_id) const {
  std::lock_guard lock(mu_);
  return find(experiment_id);
}

std::vector<Experiment> ExperimentRegistry::list() const {
  std::lock_guard lock(mu_);
  std::vector<Experiment> out;
  for (const auto& [id, e] : experiments_) out.push_back(e);
  return out;
}

std::optional<std::string> ExperimentRegistry::experiment_of_group(std::string_view group_id) const {
  std::lock_guard lock(mu_);
  for (const auto& [id, e] : experiments_) {
    if (e.group(group_id) != nullptr) return id;
  }
  return std::nullopt;
}

std::vector<JoinLink> ExperimentRegistry::join_links(std::string_view experiment_id,
                                                     std::string_view base_url) const {
  std::lock_guard lock(mu_);
  const Experiment& e = find(experiment_id);
  if (e.status != Status::kActive) {
    fail(ErrorCode::kConflict,
         "join links require an active experiment (status " + std::string(to_string(e.status)) + ")");
  }
  const std::string prefix = std::string(base_url) + "/researcher/join-experiment?";
  std::vector<JoinLink> out;
  if (e.mode == AssignmentMode::kManual) {
    for (const auto& g : e.groups) out.push_back({g.group_id, prefix + "group=" + g.group_id});
  } else {
    out.push_back({std::nullopt, prefix + "experiment=" + e.id});
  }
  return out;
}

AssignmentRecord ExperimentRegistry::join(const JoinParams& params, const std::string& participant,
                                          Timestamp now) {
  std::string experiment_id;
  if (params.experiment) {
    experiment_id = *params.experiment;
  } else if (params.group) {
    auto owner = experiment_of_group(*params.group);
    if (!owner) fail(ErrorCode::kNotFound, "unknown group '" + *params.group + "'");
    experiment_id = *owner;
  } else {
    fail(ErrorCode::kValidation, "join needs a group or experiment parameter");
  }
  return join(experiment_id, participant, params, now);
}

AssignmentRecord ExperimentRegistry::join(std::string_view experiment_id,
                                          const std::string& participant,
                                          const JoinParams& params, Timestamp now) {
  if (participant.empty()) fail(ErrorCode::kValidation, "participant id must not be empty");
  std::lock_guard lock(mu_);
  const Experiment& e = find(experiment_id);
  if (e.status != Status::kActive) {
    fail(ErrorCode::kConflict,
         "experiment is not accepting joins (status " + std::string(to_string(e.status)) + ")");
  }
  if (params.experiment && *params.experiment != e.id) {
    fail(ErrorCode::kValidation, "experiment parameter does not match");
  }

  std::string group_id;
  if (e.mode == AssignmentMode::kManual) {
    if (!params.group) fail(ErrorCode::kValidation, "manual assignment requires a group parameter");
    if (e.group(*params.group) == nullptr) {
      fail(ErrorCode::kNotFound, "unknown group '" + *params.group + "'");
    }
    group_id = *params.group;
  } else {
    if (params.group) {
      fail(ErrorCode::kValidation, "random-assignment experiments are joined by experiment link");
    }
    group_id = e.groups[random_group_index(e.seed, participant)].group_id;
  }

  auto& per_experiment = assignments_[e.id];
  auto it = per_experiment.find(participant);
  if (it != per_experiment.end()) return it->second;
  AssignmentRecord rec{e.id, participant, group_id, now, true};
  per_experiment.emplace(participant, rec);
  return rec;
}

bool ExperimentRegistry::is_enabled(std::string_view experiment_id, std::string_view group_id,
                                    FeatureFlag flag) const {
  std::lock_guard lock(mu_);
  const Experiment& e = find(experiment_id);
  const GroupConfig* g = e.group(group_id);
  if (g == nullptr) fail(ErrorCode::kNotFound, "unknown group '" + std::string(group_id) + "'");
  return g->enabled(flag);
}

std::optional<AssignmentRecord> ExperimentRegistry::assignment(std::string_view experiment_id,
                                                               std::string_view participant) const {
  std::lock_guard lock(mu_);
  auto it = assignments_.find(experiment_id);
  if (it == assignments_.end()) return std::nullopt;
  auto jt = it->second.find(participant);
  if (jt == it->second.end()) return std::nullopt;
  return jt->second;
}

std::vector<AssignmentRecord> ExperimentRegistry::assignments(std::string_view experiment_id) const {
  std::lock_guard lock(mu_);
  find(experiment_id);
  std::vector<AssignmentRecord> out;
  auto it = assignments_.find(experiment_id);
  if (it == assignments_.end()) return out;
  for (const auto& [p, rec] : it->second) out.push_back(rec);
  return out;
}

Experiment ExperimentRegistry::activate(std::string_view experiment_id) {
  std::lock_guard lock(mu_);
  Experiment& e = find(experiment_id);
  if (e.status != Status::kDraft) fail(ErrorCode::kConflict, "only draft experiments activate");
  e.status = Status::kActive;
  return e;
}

Experiment ExperimentRegistry::close(std::string_view experiment_id) {
  std::lock_guard lock(mu_);
  Experiment& e = find(experiment_id);
  if (e.status == Status::kClosed) fail(ErrorCode::kConflict, "experiment is already closed");
  e.status = Status::kClosed;
  return e;
}

void ExperimentRegistry::attach_document(std::string_view experiment_id, bool welcome,
                                         Document doc) {
  if (doc.bytes.size() > kMaxDocumentBytes) fail(ErrorCode::kValidation, "document exceeds 20 MiB");
  std::lock_guard lock(mu_);
  Experiment& e = find(experiment_id);
  (welcome ? e.welcome_doc : e.exit_doc) = std::move(doc);
}

json ExperimentRegistry::to_json(std::string_view experiment_id) const {
  std::lock_guard lock(mu_);
  const Experiment& e = find(experiment_id);
  json groups = json::array();
  for (const auto& g : e.groups) groups.push_back(group_to_json(g));
  json assignments = json::array();
  if (auto it = assignments_.find(experiment_id); it != assignments_.end()) {
    std::vector<const AssignmentRecord*> recs;
    for (const auto& [p, rec] : it->second) recs.push_back(&rec);
    std::sort(recs.begin(), recs.end(), [](auto* a, auto* b) {
      return std::tie(a->joined_at, a->participant) < std::tie(b->joined_at, b->participant);
    });
    for (const auto* rec : recs) {
      assignments.push_back({{"participant", rec->participant},
                             {"group_id", rec->group_id},
                             {"joined_at", format_rfc3339(rec->joined_at)}});
    }
  }
  auto doc_summary = [](const std::optional<Document>& d) -> json {
    if (!d) return nullptr;
    return {{"media_type", d->media_type}, {"size", d->bytes.size()}};
  };
  return {{"id", e.id},
          {"name", e.name},
          {"mode", to_string(e.mode)},
          {"groups", std::move(groups)},
          {"phases", phases_to_json(e.phases)},
          {"status", to_string(e.status)},
          {"created_at", format_rfc3339(e.created_at)},
          {"seed", e.seed},
          {"docs", {{"welcome", doc_summary(e.welcome_doc)}, {"exit", doc_summary(e.exit_doc)}}},
          {"assignments", std::move(assignments)}};
}

void ExperimentRegistry::restore(const json& doc) {
  Experiment e;
  try {
    e.id = doc.at("id").get<std::string>();
    e.name = doc.at("name").get<std::string>();
    e.mode = doc.at("mode").get<std::string>() == "random" ? AssignmentMode::kRandom
                                                            : AssignmentMode::kManual;
    for (const auto& g : doc.at("groups")) e.groups.push_back(group_from_json(g, true));
    e.phases = phases_from_json(doc.value("phases", json::array()));
    const std::string status = doc.at("status").get<std::string>();
    e.status = status == "closed"   ? Status::kClosed
               : status == "active" ? Status::kActive
                                    : Status::kDraft;
    e.created_at = parse_rfc3339(doc.at("created_at").get<std::string>());
    e.seed = doc.value("seed", std::uint64_t{0});
  } catch (const json::exception& ex) {
    fail(ErrorCode::kValidation, std::string("experiment document: ") + ex.what());
  }
  std::lock_guard lock(mu_);
  auto& per_experiment = assignments_[e.id];
  for (const auto& a : doc.value("assignments", json::array())) {
    AssignmentRecord rec{e.id, a.at("participant").get<std::string>(),
                         a.at("group_id").get<std::string>(),
                         parse_rfc3339(a.at("joined_at").get<std::string>()), true};
    per_experiment.emplace(rec.participant, rec);
  }
  next_experiment_ = std::max(next_experiment_, as_number(e.id) + 1);
  for (const auto& g : e.groups) next_group_ = std::max(next_group_, as_number(g.group_id) + 1);
  experiments_[e.id] = std::move(e);
}

}  // namespace vera::exp
