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

#include "vera/model.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "vera/error.h"

namespace vera::cmp {
namespace {

struct ParameterInfo {
  ParameterName name;
  std::string_view key;
  std::string_view label;
  ParameterCategory category;
  double default_value;
};

constexpr std::array<ParameterInfo, 17> kInfo = {{
    {ParameterName::kLifespan, "lifespan", "lifespan", ParameterCategory::kBioticBasic, 24},
    {ParameterName::kBodyMass, "body_mass", "body mass", ParameterCategory::kBioticBasic, 1.0},
    {ParameterName::kStartingPopulation, "starting_population", "starting population",
     ParameterCategory::kBioticBasic, 100},
    {ParameterName::kOffspringCount, "offspring_count", "offspring count",
     ParameterCategory::kBioticBasic, 2},
    {ParameterName::kReproductiveMaturity, "reproductive_maturity", "reproductive maturity",
     ParameterCategory::kBioticBasic, 6},
    {ParameterName::kReproductiveInterval, "reproductive_interval", "reproductive interval",
     ParameterCategory::kBioticBasic, 6},
    {ParameterName::kMinimumPopulation, "minimum_population", "minimum population",
     ParameterCategory::kBioticBasic, 0},
    {ParameterName::kPhotosynthesisRate, "photosynthesis_rate", "photosynthesis rate",
     ParameterCategory::kBioticAdvanced, 0},
    {ParameterName::kAssimilationEfficiency, "assimilation_efficiency",
     "assimilation efficiency", ParameterCategory::kBioticAdvanced, 1.0},
    {ParameterName::kMoveVelocity, "move_velocity", "move velocity",
     ParameterCategory::kBioticAdvanced, 0},
    {ParameterName::kRespiratoryRate, "respiratory_rate", "respiratory rate",
     ParameterCategory::kBioticAdvanced, 0},
    {ParameterName::kMoveDirection, "move_direction", "move direction",
     ParameterCategory::kBioticAdvanced, 0},
    {ParameterName::kCarbonBiomass, "carbon_biomass", "carbon biomass",
     ParameterCategory::kBioticAdvanced, 0},
    {ParameterName::kAmount, "amount", "amount", ParameterCategory::kAbiotic, 1000},
    {ParameterName::kMinimumAmount, "minimum_amount", "minimum amount",
     ParameterCategory::kAbiotic, 0},
    {ParameterName::kGrowthRate, "growth_rate", "growth rate", ParameterCategory::kAbiotic, 0},
    {ParameterName::kInteractionRate, "interaction_rate", "interaction rate",
     ParameterCategory::kRelationship, 0.1},
}};

const ParameterInfo& info(ParameterName p) { return kInfo[static_cast<std::size_t>(p)]; }

constexpr double kPopulationCap = 1e9;

bool is_integral(double v) { return std::floor(v) == v; }

std::string fmt_value(double v) {
  if (is_integral(v) && std::fabs(v) < 1e15) return std::to_string(static_cast<long long>(v));
  return std::to_string(v);
}

std::vector<ParameterName> parameters_for(ComponentKind kind) {
  std::vector<ParameterName> out;
  for (auto p : kAllParameters) {
    if (accepts(kind, p)) out.push_back(p);
  }
  return out;
}

void check_param_or_throw(ComponentKind kind, ParameterName p, double value) {
  if (!accepts(kind, p)) {
    fail(ErrorCode::kValidation,
         std::string("parameter '") + std::string(key(p)) + "' does not apply to " +
             std::string(to_string(kind)) + " components",
         {{"parameter", key(p)}});
  }
  if (auto why = check_value(p, value)) {
    fail(ErrorCode::kValidation, *why, {{"parameter", key(p)}, {"value", value}});
  }
}

std::optional<std::string> check_typing(const Component& src, const Component& dst,
                                        RelationKind kind) {
  switch (kind) {
    case RelationKind::kConsumes:
      if (src.kind != ComponentKind::kBiotic) return "consumes requires a biotic source";
      return std::nullopt;
    case RelationKind::kProduces:
      if (src.kind != ComponentKind::kBiotic || dst.kind != ComponentKind::kAbiotic) {
        return "produces requires a biotic source and an abiotic target";
      }
      return std::nullopt;
    case RelationKind::kDestroys:
      if (src.kind != ComponentKind::kAbiotic || dst.kind != ComponentKind::kBiotic) {
        return "destroys requires an abiotic source and a biotic target";
      }
      return std::nullopt;
  }
  return "unknown relationship kind";
}

void touch(Model& model, Timestamp now) { model.updated_at = std::max(model.updated_at, now); }

}  // namespace

ParameterCategory category(ParameterName p) { return info(p).category; }
bool is_advanced(ParameterName p) { return category(p) == ParameterCategory::kBioticAdvanced; }
std::string_view key(ParameterName p) { return info(p).key; }
std::string_view label(ParameterName p) { return info(p).label; }
double default_value(ParameterName p) { return info(p).default_value; }

std::optional<ParameterName> parse_parameter(std::string_view text) {
  for (const auto& i : kInfo) {
    if (i.key == text || i.label == text) return i.name;
  }
  return std::nullopt;
}

bool accepts(ComponentKind kind, ParameterName p) {
  switch (category(p)) {
    case ParameterCategory::kBioticBasic:
    case ParameterCategory::kBioticAdvanced:
      return kind == ComponentKind::kBiotic;
    case ParameterCategory::kAbiotic:
      return kind == ComponentKind::kAbiotic;
    case ParameterCategory::kRelationship:
      return false;
  }
  return false;
}

std::optional<std::string> check_value(ParameterName p, double value) {
  const std::string name(key(p));
  if (!std::isfinite(value)) return name + " must be finite";
  switch (p) {
    case ParameterName::kLifespan:
    case ParameterName::kReproductiveMaturity:
    case ParameterName::kReproductiveInterval:
      if (!is_integral(value) || value < 1) return name + " must be a whole number of months >= 1";
      return std::nullopt;
    case ParameterName::kStartingPopulation:
    case ParameterName::kOffspringCount:
    case ParameterName::kMinimumPopulation:
      if (!is_integral(value) || value < 0) return name + " must be a non-negative integer";
      if (value > kPopulationCap) return name + " exceeds 1e9";
      return std::nullopt;
    case ParameterName::kBodyMass:
    case ParameterName::kAmount:
    case ParameterName::kMinimumAmount:
    case ParameterName::kCarbonBiomass:
      if (value < 0) return name + " must be >= 0";
      return std::nullopt;
    case ParameterName::kPhotosynthesisRate:
    case ParameterName::kAssimilationEfficiency:
    case ParameterName::kInteractionRate:
      if (value < 0 || value > 1) return name + " must lie in [0, 1]";
      return std::nullopt;
    case ParameterName::kGrowthRate:
      if (value < -1 || value > 10) return name + " must lie in [-1, 10]";
      return std::nullopt;
    case ParameterName::kMoveVelocity:
    case ParameterName::kRespiratoryRate:
    case ParameterName::kMoveDirection:
      return std::nullopt;
  }
  return std::nullopt;
}

std::string_view to_string(ComponentKind kind) {
  return kind == ComponentKind::kBiotic ? "biotic" : "abiotic";
}

std::optional<ComponentKind> parse_component_kind(std::string_view text) {
  if (text == "biotic") return ComponentKind::kBiotic;
  if (text == "abiotic") return ComponentKind::kAbiotic;
  return std::nullopt;
}

std::string_view to_string(RelationKind kind) {
  switch (kind) {
    case RelationKind::kConsumes: return "consumes";
    case RelationKind::kProduces: return "produces";
    case RelationKind::kDestroys: return "destroys";
  }
  return "consumes";
}

std::optional<RelationKind> parse_relation_kind(std::string_view text) {
  if (text == "consumes") return RelationKind::kConsumes;
  if (text == "produces") return RelationKind::kProduces;
  if (text == "destroys") return RelationKind::kDestroys;
  return std::nullopt;
}

std::string_view display_name(RelationKind kind) {
  switch (kind) {
    case RelationKind::kConsumes: return "Consumes";
    case RelationKind::kProduces: return "Produces";
    case RelationKind::kDestroys: return "Destroys";
  }
  return "Consumes";
}

std::string_view rate_label(RelationKind kind) {
  switch (kind) {
    case RelationKind::kConsumes: return "consumption rate";
    case RelationKind::kProduces: return "production rate";
    case RelationKind::kDestroys: return "destruction rate";
  }
  return "consumption rate";
}

double Component::param(ParameterName p) const {
  auto it = params.find(p);
  return it == params.end() ? default_value(p) : it->second;
}

const Component* Model::find_component(std::string_view cid) const {
  auto it = std::find_if(components.begin(), components.end(),
                         [&](const Component& c) { return c.id == cid; });
  return it == components.end() ? nullptr : &*it;
}

Component* Model::find_component(std::string_view cid) {
  return const_cast<Component*>(std::as_const(*this).find_component(cid));
}

const Component* Model::find_component_by_name(std::string_view cname) const {
  auto it = std::find_if(components.begin(), components.end(),
                         [&](const Component& c) { return c.name == cname; });
  return it == components.end() ? nullptr : &*it;
}

const Relationship* Model::find_relationship(std::string_view rid) const {
  auto it = std::find_if(relationships.begin(), relationships.end(),
                         [&](const Relationship& r) { return r.id == rid; });
  return it == relationships.end() ? nullptr : &*it;
}

Model new_model(std::string name, std::string owner, IdSource& ids, Timestamp now) {
  if (name.empty()) fail(ErrorCode::kValidation, "model name must not be empty");
  Model m;
  m.id = ids.next("m");
  m.name = std::move(name);
  m.owner = std::move(owner);
  m.created_at = now;
  m.updated_at = now;
  return m;
}

const Component& add_component(Model& model, std::string name, ComponentKind kind,
                               const ParamMap& params, IdSource& ids, Timestamp now) {
  if (name.empty()) fail(ErrorCode::kValidation, "component name must not be empty");
  if (model.find_component_by_name(name) != nullptr) {
    fail(ErrorCode::kConflict, "component '" + name + "' already exists", {{"name", name}});
  }
  for (const auto& [p, v] : params) check_param_or_throw(kind, p, v);

  Component c;
  c.id = ids.next("c");
  c.name = std::move(name);
  c.kind = kind;
  for (auto p : parameters_for(kind)) {
    auto it = params.find(p);
    c.params[p] = it == params.end() ? default_value(p) : it->second;
  }
  model.components.push_back(std::move(c));
  touch(model, now);
  return model.components.back();
}

ParameterChange set_parameter(Model& model, std::string_view component_id, ParameterName p,
                              double value, Timestamp now) {
  Component* c = model.find_component(component_id);
  if (c == nullptr) {
    fail(ErrorCode::kNotFound, "unknown component '" + std::string(component_id) + "'");
  }
  check_param_or_throw(c->kind, p, value);
  ParameterChange change{c->id, p, c->param(p), value};
  c->params[p] = value;
  touch(model, now);
  return change;
}

const Relationship& add_relationship(Model& model, std::string_view source_id,
                                     std::string_view target_id, RelationKind kind, double rate,
                                     IdSource& ids, Timestamp now) {
  const Component* src = model.find_component(source_id);
  const Component* dst = model.find_component(target_id);
  if (src == nullptr || dst == nullptr) {
    fail(ErrorCode::kNotFound, "relationship endpoint does not exist",
         {{"source", source_id}, {"target", target_id}});
  }
  if (source_id == target_id) fail(ErrorCode::kValidation, "relationship source equals target");
  if (auto why = check_typing(*src, *dst, kind)) fail(ErrorCode::kValidation, *why);
  if (auto why = check_value(ParameterName::kInteractionRate, rate)) {
    fail(ErrorCode::kValidation, *why);
  }
  for (const auto& r : model.relationships) {
    if (r.source == source_id && r.target == target_id && r.kind == kind) {
      fail(ErrorCode::kConflict, "duplicate relationship",
           {{"source", source_id}, {"target", target_id}, {"kind", to_string(kind)}});
    }
  }
  Relationship r;
  r.id = ids.next("r");
  r.source = std::string(source_id);
  r.target = std::string(target_id);
  r.kind = kind;
  r.rate = rate;
  model.relationships.push_back(std::move(r));
  touch(model, now);
  return model.relationships.back();
}

ParameterChange set_relationship_rate(Model& model, std::string_view relationship_id,
                                      double rate, Timestamp now) {
  auto it = std::find_if(model.relationships.begin(), model.relationships.end(),
                         [&](const Relationship& r) { return r.id == relationship_id; });
  if (it == model.relationships.end()) {
    fail(ErrorCode::kNotFound, "unknown relationship '" + std::string(relationship_id) + "'");
  }
  if (auto why = check_value(ParameterName::kInteractionRate, rate)) {
    fail(ErrorCode::kValidation, *why, {{"value", rate}});
  }
  ParameterChange change{it->id, ParameterName::kInteractionRate, it->rate, rate};
  it->rate = rate;
  touch(model, now);
  return change;
}

Component remove_component(Model& model, std::string_view component_id, Timestamp now) {
  auto it = std::find_if(model.components.begin(), model.components.end(),
                         [&](const Component& c) { return c.id == component_id; });
  if (it == model.components.end()) {
    fail(ErrorCode::kNotFound, "unknown component '" + std::string(component_id) + "'");
  }
  for (const auto& r : model.relationships) {
    if (r.source == component_id || r.target == component_id) {
      fail(ErrorCode::kConflict, "component is referenced by relationship " + r.id,
           {{"relationship", r.id}});
    }
  }
  Component removed = std::move(*it);
  model.components.erase(it);
  touch(model, now);
  return removed;
}

Relationship remove_relationship(Model& model, std::string_view relationship_id, Timestamp now) {
  auto it = std::find_if(model.relationships.begin(), model.relationships.end(),
                         [&](const Relationship& r) { return r.id == relationship_id; });
  if (it == model.relationships.end()) {
    fail(ErrorCode::kNotFound, "unknown relationship '" + std::string(relationship_id) + "'");
  }
  Relationship removed = std::move(*it);
  model.relationships.erase(it);
  touch(model, now);
  return removed;
}

Model clone_model(const Model& source, std::string new_owner, IdSource& ids, Timestamp now) {
  Model copy;
  copy.id = ids.next("m");
  copy.name = source.name;
  copy.owner = std::move(new_owner);
  copy.provenance = Provenance::cloned_from(source.id);
  copy.created_at = now;
  copy.updated_at = now;

  std::map<std::string, std::string, std::less<>> remap;
  for (const auto& c : source.components) {
    Component nc = c;
    nc.id = ids.next("c");
    remap[c.id] = nc.id;
    copy.components.push_back(std::move(nc));
  }
  for (const auto& r : source.relationships) {
    Relationship nr = r;
    nr.id = ids.next("r");
    if (auto it = remap.find(r.source); it != remap.end()) nr.source = it->second;
    if (auto it = remap.find(r.target); it != remap.end()) nr.target = it->second;
    copy.relationships.push_back(std::move(nr));
  }
  return copy;
}

Model instantiate_exemplar(const Model& exemplar, std::string owner, IdSource& ids,
                           Timestamp now) {
  Model m = clone_model(exemplar, std::move(owner), ids, now);
  m.provenance = Provenance::exemplar(exemplar.name);
  return m;
}

std::vector<Violation> validate(const Model& model) {
  std::vector<Violation> out;
  if (model.name.empty()) out.push_back({"empty_name", model.id, "model name is empty"});

  std::set<std::string, std::less<>> ids;
  std::set<std::string, std::less<>> names;
  for (const auto& c : model.components) {
    if (!ids.insert(c.id).second) {
      out.push_back({"duplicate_id", c.id, "component id used more than once"});
    }
    if (c.name.empty()) out.push_back({"empty_name", c.id, "component name is empty"});
    if (!names.insert(c.name).second) {
      out.push_back({"duplicate_component_name", c.id, "component name '" + c.name +
                                                           "' used more than once"});
    }
    for (const auto& [p, v] : c.params) {
      if (!accepts(c.kind, p)) {
        out.push_back({"wrong_category_parameter", c.id,
                       std::string(key(p)) + " not allowed on " + std::string(to_string(c.kind)) +
                           " component"});
      } else if (auto why = check_value(p, v)) {
        out.push_back({"out_of_range", c.id, *why + " (got " + fmt_value(v) + ")"});
      }
    }
    for (auto p : parameters_for(c.kind)) {
      if (!c.params.contains(p)) {
        out.push_back({"missing_parameter", c.id, std::string(key(p)) + " is unset"});
      }
    }
  }

  std::set<std::tuple<std::string, std::string, RelationKind>> triples;
  for (const auto& r : model.relationships) {
    if (!ids.insert(r.id).second) {
      out.push_back({"duplicate_id", r.id, "relationship id used more than once"});
    }
    const Component* src = model.find_component(r.source);
    const Component* dst = model.find_component(r.target);
    if (src == nullptr || dst == nullptr) {
      out.push_back({"dangling_endpoint", r.id, "relationship endpoint does not exist"});
      continue;
    }
    if (r.source == r.target) {
      out.push_back({"self_loop", r.id, "relationship source equals target"});
    } else if (auto why = check_typing(*src, *dst, r.kind)) {
      out.push_back({"type_violation", r.id, *why});
    }
    if (auto why = check_value(ParameterName::kInteractionRate, r.rate)) {
      out.push_back({"out_of_range", r.id, *why});
    }
    if (!triples.emplace(r.source, r.target, r.kind).second) {
      out.push_back({"duplicate_relationship", r.id, "duplicate (source, target, kind)"});
    }
  }
  return out;
}

bool structurally_equal(const Model& a, const Model& b) {
  using ComponentKey = std::tuple<std::string, ComponentKind, ParamMap>;
  using EdgeKey = std::tuple<std::string, std::string, RelationKind, double>;
  auto components = [](const Model& m) {
    std::vector<ComponentKey> out;
    for (const auto& c : m.components) out.emplace_back(c.name, c.kind, c.params);
    std::sort(out.begin(), out.end());
    return out;
  };
  auto edges = [](const Model& m) {
    std::vector<EdgeKey> out;
    for (const auto& r : m.relationships) {
      const Component* s = m.find_component(r.source);
      const Component* t = m.find_component(r.target);
      out.emplace_back(s ? s->name : "?" + r.source, t ? t->name : "?" + r.target, r.kind,
                       r.rate);
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  return a.name == b.name && components(a) == components(b) && edges(a) == edges(b);
}

}  // namespace vera::cmp
