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
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vera/ids.h"
#include "vera/time.h"

// Conceptual (component-mechanism-phenomenon) ecology models: typed
// components carrying parameter sets, linked by typed relationships.
namespace vera::cmp {

enum class ParameterName {
  // biotic, basic
  kLifespan,
  kBodyMass,
  kStartingPopulation,
  kOffspringCount,
  kReproductiveMaturity,
  kReproductiveInterval,
  kMinimumPopulation,
  // biotic, advanced
  kPhotosynthesisRate,
  kAssimilationEfficiency,
  kMoveVelocity,
  kRespiratoryRate,
  kMoveDirection,
  kCarbonBiomass,
  // abiotic
  kAmount,
  kMinimumAmount,
  kGrowthRate,
  // relationship
  kInteractionRate,
};

inline constexpr std::array<ParameterName, 17> kAllParameters = {
    ParameterName::kLifespan,           ParameterName::kBodyMass,
    ParameterName::kStartingPopulation, ParameterName::kOffspringCount,
    ParameterName::kReproductiveMaturity,
    ParameterName::kReproductiveInterval,
    ParameterName::kMinimumPopulation,  ParameterName::kPhotosynthesisRate,
    ParameterName::kAssimilationEfficiency,
    ParameterName::kMoveVelocity,       ParameterName::kRespiratoryRate,
    ParameterName::kMoveDirection,      ParameterName::kCarbonBiomass,
    ParameterName::kAmount,             ParameterName::kMinimumAmount,
    ParameterName::kGrowthRate,         ParameterName::kInteractionRate,
};

enum class ParameterCategory { kBioticBasic, kBioticAdvanced, kAbiotic, kRelationship };
enum class ComponentKind { kBiotic, kAbiotic };
enum class RelationKind { kConsumes, kProduces, kDestroys };

ParameterCategory category(ParameterName p);
bool is_advanced(ParameterName p);

// Wire key, e.g. "starting_population".
std::string_view key(ParameterName p);
// Human label used in analytics pairs, e.g. "starting population".
std::string_view label(ParameterName p);
// Accepts either the wire key or the label.
std::optional<ParameterName> parse_parameter(std::string_view text);

// Static accept/reject matrix for parameter names against component kinds.
bool accepts(ComponentKind kind, ParameterName p);
double default_value(ParameterName p);
// Empty when the value is acceptable, otherwise a human-readable reason.
std::optional<std::string> check_value(ParameterName p, double value);

std::string_view to_string(ComponentKind kind);
std::optional<ComponentKind> parse_component_kind(std::string_view text);
std::string_view to_string(RelationKind kind);  // "consumes"
std::optional<RelationKind> parse_relation_kind(std::string_view text);
std::string_view display_name(RelationKind kind);  // "Consumes"
std::string_view rate_label(RelationKind kind);    // "consumption rate"

using ParamMap = std::map<ParameterName, double>;

struct Component {
  std::string id;
  std::string name;
  ComponentKind kind = ComponentKind::kBiotic;
  ParamMap params;

  double param(ParameterName p) const;
  bool operator==(const Component&) const = default;
};

struct Relationship {
  std::string id;
  std::string source;
  std::string target;
  RelationKind kind = RelationKind::kConsumes;
  double rate = 0.1;

  bool operator==(const Relationship&) const = default;
};

struct Provenance {
  enum class Kind { kFresh, kClonedFrom, kExemplar };
  Kind kind = Kind::kFresh;
  // Source model id for kClonedFrom, exemplar name for kExemplar.
  std::string ref;

  static Provenance fresh() { return {}; }
  static Provenance cloned_from(std::string id) { return {Kind::kClonedFrom, std::move(id)}; }
  static Provenance exemplar(std::string name) { return {Kind::kExemplar, std::move(name)}; }
  bool operator==(const Provenance&) const = default;
};

struct Model {
  std::string id;
  std::string name;
  std::string owner;
  std::vector<Component> components;
  std::vector<Relationship> relationships;
  Provenance provenance;
  Timestamp created_at{};
  Timestamp updated_at{};

  const Component* find_component(std::string_view id) const;
  Component* find_component(std::string_view id);
  const Component* find_component_by_name(std::string_view name) const;
  const Relationship* find_relationship(std::string_view id) const;

  bool operator==(const Model&) const = default;
};

// Old/new values of an edit, used for capture payloads. For relationship
// rates `subject_id` is the relationship id.
struct ParameterChange {
  std::string subject_id;
  ParameterName parameter;
  double old_value;
  double new_value;
};

struct Violation {
  std::string code;     // e.g. "dangling_endpoint"
  std::string subject;  // offending component/relationship id
  std::string message;

  bool operator==(const Violation&) const = default;
};

Model new_model(std::string name, std::string owner, IdSource& ids, Timestamp now);

// Unset parameters take their defaults. Returns the stored component.
const Component& add_component(Model& model, std::string name, ComponentKind kind,
                               const ParamMap& params, IdSource& ids, Timestamp now);

ParameterChange set_parameter(Model& model, std::string_view component_id, ParameterName p,
                              double value, Timestamp now);

const Relationship& add_relationship(Model& model, std::string_view source_id,
                                     std::string_view target_id, RelationKind kind, double rate,
                                     IdSource& ids, Timestamp now);

ParameterChange set_relationship_rate(Model& model, std::string_view relationship_id,
                                      double rate, Timestamp now);

// Fails with kConflict while any relationship still references the component.
Component remove_component(Model& model, std::string_view component_id, Timestamp now);
Relationship remove_relationship(Model& model, std::string_view relationship_id, Timestamp now);

// Deep copy with fresh ids; provenance points at the immediate source.
Model clone_model(const Model& source, std::string new_owner, IdSource& ids, Timestamp now);

// Same as clone_model but records the exemplar name as provenance.
Model instantiate_exemplar(const Model& exemplar, std::string owner, IdSource& ids,
                           Timestamp now);

std::vector<Violation> validate(const Model& model);

// Equality that ignores ids, timestamps and provenance: same named components
// with the same kinds and parameters, and the same edges between names.
bool structurally_equal(const Model& a, const Model& b);

}  // namespace vera::cmp
