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
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vera/time.h"

// Two-group experiments: per-group feature flags, attached documents,
// manual or hashed-random assignment, phases and lifecycle.
namespace vera::exp {

enum class FeatureFlag { kAdvancedParameters, kCloning, kExemplarModels, kLookupEol, kSimulation };

inline constexpr std::array<FeatureFlag, 5> kAllFlags = {
    FeatureFlag::kAdvancedParameters, FeatureFlag::kCloning, FeatureFlag::kExemplarModels,
    FeatureFlag::kLookupEol, FeatureFlag::kSimulation};

std::string_view to_string(FeatureFlag flag);
std::optional<FeatureFlag> parse_flag(std::string_view text);

struct GroupConfig {
  std::string group_id;
  std::map<FeatureFlag, bool> flags;

  bool enabled(FeatureFlag flag) const;
  static GroupConfig all_enabled(std::string group_id = {});
  bool operator==(const GroupConfig&) const = default;
};

enum class AssignmentMode { kManual, kRandom };
enum class Status { kDraft, kActive, kClosed };

std::string_view to_string(AssignmentMode mode);
std::string_view to_string(Status status);

inline constexpr std::size_t kMaxDocumentBytes = 20u * 1024u * 1024u;

struct Document {
  std::string media_type = "application/pdf";
  std::string bytes;
  bool operator==(const Document&) const = default;
};

struct Phase {
  std::string name;
  Timestamp start{};
  Timestamp end{};
  bool contains(Timestamp ts) const { return ts >= start && ts < end; }
  bool operator==(const Phase&) const = default;
};

struct AssignmentRecord {
  std::string experiment_id;
  std::string participant;
  std::string group_id;
  Timestamp joined_at{};
  bool sticky = true;
  bool operator==(const AssignmentRecord&) const = default;
};

struct Experiment {
  std::string id;
  std::string name;
  std::vector<GroupConfig> groups;
  AssignmentMode mode = AssignmentMode::kManual;
  std::optional<Document> welcome_doc;
  std::optional<Document> exit_doc;
  std::vector<Phase> phases;
  Status status = Status::kDraft;
  Timestamp created_at{};
  std::uint64_t seed = 0;

  const GroupConfig* group(std::string_view group_id) const;
  // Name of the phase whose window holds ts, if any.
  std::optional<std::string> phase_at(Timestamp ts) const;
};

struct ExperimentSpec {
  std::string name;
  // Empty group ids are assigned by the registry.
  std::vector<GroupConfig> groups;
  AssignmentMode mode = AssignmentMode::kManual;
  std::optional<Document> welcome_doc;
  std::optional<Document> exit_doc;
  std::vector<Phase> phases;
  std::optional<std::uint64_t> seed;
  bool start_as_draft = false;
};

// Throws vera::Error(kValidation) when the spec breaks an experiment
// invariant (group count, missing flags, overlapping phases, document size).
void check_spec(const ExperimentSpec& spec);

// Parses the creation document used by the CLI and the HTTP API:
// {name, mode, groups:[{group_id?, flags:{...}}], phases:[{name,start,end}], seed?}
ExperimentSpec spec_from_json(const nlohmann::json& doc);

struct JoinLink {
  std::optional<std::string> group_id;  // set in manual mode
  std::string url;
};

// Query parameters of a join URL.
struct JoinParams {
  std::optional<std::string> group;
  std::optional<std::string> experiment;
};

// Random-mode assignment: a pure function of (seed, participant).
std::size_t random_group_index(std::uint64_t seed, std::string_view participant);

// Thread-safe store of experiments and their assignments. First join wins
// for a participant; later joins return the stored record.
class ExperimentRegistry {
 public:
  explicit ExperimentRegistry(std::uint64_t default_seed = 0) : default_seed_(default_seed) {}

  Experiment create(ExperimentSpec spec, Timestamp now);
  Experiment get(std::string_view experiment_id) const;
  std::vector<Experiment> list() const;
  std::optional<std::string> experiment_of_group(std::string_view group_id) const;

  // base_url has no trailing slash, e.g. "http://localhost:8080".
  std::vector<JoinLink> join_links(std::string_view experiment_id,
                                   std::string_view base_url) const;
  AssignmentRecord join(const JoinParams& params, const std::string& participant, Timestamp now);
  AssignmentRecord join(std::string_view experiment_id, const std::string& participant,
                        const JoinParams& params, Timestamp now);

  bool is_enabled(std::string_view experiment_id, std::string_view group_id,
                  FeatureFlag flag) const;
  std::optional<AssignmentRecord> assignment(std::string_view experiment_id,
                                             std::string_view participant) const;
  std::vector<AssignmentRecord> assignments(std::string_view experiment_id) const;

  Experiment activate(std::string_view experiment_id);
  Experiment close(std::string_view experiment_id);

  // experiment.json: config plus assignments. Documents are summarized by
  // media type and size; their bytes travel separately.
  nlohmann::json to_json(std::string_view experiment_id) const;
  // Restores an experiment and its assignments (document bytes excluded).
  void restore(const nlohmann::json& doc);
  void attach_document(std::string_view experiment_id, bool welcome, Document doc);

 private:
  Experiment& find(std::string_view experiment_id);
  const Experiment& find(std::string_view experiment_id) const;

  mutable std::mutex mu_;
  std::uint64_t default_seed_;
  std::uint64_t next_experiment_ = 1;
  std::uint64_t next_group_ = 1;
  std::map<std::string, Experiment, std::less<>> experiments_;
  // experiment -> participant -> record
  std::map<std::string, std::map<std::string, AssignmentRecord, std::less<>>, std::less<>>
      assignments_;
};

nlohmann::json phases_to_json(const std::vector<Phase>& phases);
std::vector<Phase> phases_from_json(const nlohmann::json& doc);
nlohmann::json group_to_json(const GroupConfig& group);
GroupConfig group_from_json(const nlohmann::json& doc, bool require_all_flags);

}  // namespace vera::exp
