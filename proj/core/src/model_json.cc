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

#include "vera/model_json.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vera/error.h"
#include "vera_embedded_data.h"

namespace vera::cmp {
namespace {

using nlohmann::json;

json number(double v) {
  if (std::floor(v) == v && std::fabs(v) < 1e15) return static_cast<long long>(v);
  return v;
}

json provenance_to_json(const Provenance& p) {
  switch (p.kind) {
    case Provenance::Kind::kFresh: return {{"kind", "fresh"}};
    case Provenance::Kind::kClonedFrom: return {{"kind", "cloned_from"}, {"model", p.ref}};
    case Provenance::Kind::kExemplar: return {{"kind", "exemplar"}, {"name", p.ref}};
  }
  return {{"kind", "fresh"}};
}

[[noreturn]] void schema_error(const std::string& what) {
  fail(ErrorCode::kValidation, "model document: " + what);
}

const json& field(const json& obj, const char* name) {
  if (!obj.is_object() || !obj.contains(name)) schema_error(std::string("missing field '") + name + "'");
  return obj.at(name);
}

std::string string_field(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_string()) schema_error(std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

double number_field(const json& v, const std::string& what) {
  if (!v.is_number()) schema_error(what + " must be a number");
  return v.get<double>();
}

Provenance provenance_from_json(const json& doc) {
  const std::string kind = string_field(doc, "kind");
  if (kind == "fresh") return Provenance::fresh();
  if (kind == "cloned_from") return Provenance::cloned_from(string_field(doc, "model"));
  if (kind == "exemplar") return Provenance::exemplar(string_field(doc, "name"));
  schema_error("unknown provenance kind '" + kind + "'");
}

}  // namespace

json model_to_json(const Model& model) {
  std::vector<const Component*> components;
  for (const auto& c : model.components) components.push_back(&c);
  std::sort(components.begin(), components.end(),
            [](auto* a, auto* b) { return a->id < b->id; });
  std::vector<const Relationship*> relationships;
  for (const auto& r : model.relationships) relationships.push_back(&r);
  std::sort(relationships.begin(), relationships.end(),
            [](auto* a, auto* b) { return a->id < b->id; });

  json comps = json::array();
  for (const auto* c : components) {
    json params = json::object();
    for (const auto& [p, v] : c->params) params[std::string(key(p))] = number(v);
    comps.push_back({{"id", c->id}, {"name", c->name}, {"kind", to_string(c->kind)},
                     {"params", std::move(params)}});
  }
  json rels = json::array();
  for (const auto* r : relationships) {
    rels.push_back({{"id", r->id}, {"source", r->source}, {"target", r->target},
                    {"kind", to_string(r->kind)}, {"rate", number(r->rate)}});
  }
  return {{"id", model.id},
          {"name", model.name},
          {"owner", model.owner},
          {"provenance", provenance_to_json(model.provenance)},
          {"components", std::move(comps)},
          {"relationships", std::move(rels)},
          {"created_at", format_rfc3339(model.created_at)},
          {"updated_at", format_rfc3339(model.updated_at)}};
}

Model model_from_json(const json& doc) {
  if (!doc.is_object()) schema_error("expected an object");
  Model m;
  m.id = string_field(doc, "id");
  m.name = string_field(doc, "name");
  m.owner = string_field(doc, "owner");
  m.provenance = provenance_from_json(field(doc, "provenance"));
  m.created_at = parse_rfc3339(string_field(doc, "created_at"));
  m.updated_at = parse_rfc3339(string_field(doc, "updated_at"));

  const json& comps = field(doc, "components");
  if (!comps.is_array()) schema_error("components must be an array");
  for (const auto& jc : comps) {
    Component c;
    c.id = string_field(jc, "id");
    c.name = string_field(jc, "name");
    auto kind = parse_component_kind(string_field(jc, "kind"));
    if (!kind) schema_error("component " + c.id + " has an unknown kind");
    c.kind = *kind;
    const json& params = field(jc, "params");
    if (!params.is_object()) schema_error("params must be an object");
    for (const auto& [k, v] : params.items()) {
      auto p = parse_parameter(k);
      if (!p) schema_error("unknown parameter '" + k + "'");
      c.params[*p] = number_field(v, "parameter " + k);
    }
    m.components.push_back(std::move(c));
  }

  const json& rels = field(doc, "relationships");
  if (!rels.is_array()) schema_error("relationships must be an array");
  for (const auto& jr : rels) {
    Relationship r;
    r.id = string_field(jr, "id");
    r.source = string_field(jr, "source");
    r.target = string_field(jr, "target");
    auto kind = parse_relation_kind(string_field(jr, "kind"));
    if (!kind) schema_error("relationship " + r.id + " has an unknown kind");
    r.kind = *kind;
    r.rate = number_field(field(jr, "rate"), "rate");
    m.relationships.push_back(std::move(r));
  }
  return m;
}

std::string dump_model(const Model& model) { return model_to_json(model).dump(2) + "\n"; }

std::string dump_models(const std::vector<Model>& models) {
  json arr = json::array();
  for (const auto& m : models) arr.push_back(model_to_json(m));
  return arr.dump(2) + "\n";
}

std::vector<Model> models_from_json(const json& doc) {
  if (!doc.is_array()) schema_error("expected an array of models");
  std::vector<Model> out;
  for (const auto& d : doc) out.push_back(model_from_json(d));
  return out;
}

std::string_view bundled_exemplar_text() { return vera::embedded::kExemplarsJson; }

std::vector<Model> load_exemplars() {
  return models_from_json(json::parse(bundled_exemplar_text()));
}

std::vector<Model> load_exemplars(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot read exemplar file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json doc = json::parse(buf.str(), nullptr, false);
  if (doc.is_discarded()) fail(ErrorCode::kValidation, "corrupt exemplar file " + path.string());
  return models_from_json(doc);
}

}  // namespace vera::cmp
