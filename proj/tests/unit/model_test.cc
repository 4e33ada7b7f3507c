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

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "vera/error.h"
#include "vera/model.h"
#include "vera/model_json.h"

namespace vera::cmp {
namespace {

const Timestamp kT0 = parse_rfc3339("2022-01-01T00:00:00Z");
const Timestamp kT1 = parse_rfc3339("2022-01-02T00:00:00Z");

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected vera::Error";
  return ErrorCode::kIo;
}

const Model& exemplar(const std::string& name) {
  static const std::vector<Model> all = load_exemplars();
  for (const auto& m : all) {
    if (m.name == name) return m;
  }
  throw std::runtime_error("missing exemplar " + name);
}

TEST(Parameters, CategoryMatrixIsTotal) {
  int biotic = 0, abiotic = 0;
  for (auto p : kAllParameters) {
    const auto cat = category(p);
    const bool b = accepts(ComponentKind::kBiotic, p);
    const bool a = accepts(ComponentKind::kAbiotic, p);
    EXPECT_FALSE(a && b) << key(p);
    if (cat == ParameterCategory::kRelationship) {
      EXPECT_FALSE(a || b);
    }
    biotic += b;
    abiotic += a;
  }
  EXPECT_EQ(biotic, 13);
  EXPECT_EQ(abiotic, 3);
}

TEST(Parameters, KeysAndLabelsParseBack) {
  for (auto p : kAllParameters) {
    EXPECT_EQ(parse_parameter(key(p)), p);
    EXPECT_EQ(parse_parameter(label(p)), p);
  }
  EXPECT_EQ(label(ParameterName::kBodyMass), "body mass");
  EXPECT_EQ(key(ParameterName::kStartingPopulation), "starting_population");
  EXPECT_FALSE(parse_parameter("wingspan"));
  EXPECT_EQ(rate_label(RelationKind::kConsumes), "consumption rate");
  EXPECT_EQ(display_name(RelationKind::kConsumes), "Consumes");
}

TEST(Parameters, RangeChecks) {
  EXPECT_TRUE(check_value(ParameterName::kLifespan, 0));
  EXPECT_TRUE(check_value(ParameterName::kLifespan, 2.5));
  EXPECT_FALSE(check_value(ParameterName::kLifespan, 1));
  EXPECT_TRUE(check_value(ParameterName::kOffspringCount, -1));
  EXPECT_TRUE(check_value(ParameterName::kStartingPopulation, 1.5));
  EXPECT_FALSE(check_value(ParameterName::kMinimumPopulation, 0));
  EXPECT_TRUE(check_value(ParameterName::kInteractionRate, 1.01));
  EXPECT_TRUE(check_value(ParameterName::kAssimilationEfficiency, -0.1));
  EXPECT_TRUE(check_value(ParameterName::kGrowthRate, -1.5));
  EXPECT_FALSE(check_value(ParameterName::kGrowthRate, 10));
  EXPECT_TRUE(check_value(ParameterName::kBodyMass, std::nan("")));
}

TEST(Model, NewModelIsEmptyAndFresh) {
  IdSource ids;
  Model m = new_model("m1", "u1", ids, kT0);
  EXPECT_TRUE(m.components.empty());
  EXPECT_TRUE(m.relationships.empty());
  EXPECT_EQ(m.provenance.kind, Provenance::Kind::kFresh);
  EXPECT_NE(new_model("m1", "u1", ids, kT0).id, m.id);
  EXPECT_EQ(code_of([&] { new_model("", "u1", ids, kT0); }), ErrorCode::kValidation);
}

TEST(Model, AddComponentDefaultsUnsetParameters) {
  IdSource ids;
  Model m = new_model("m", "u", ids, kT0);
  const auto& sheep = add_component(m, "sheep", ComponentKind::kBiotic,
                                    {{ParameterName::kStartingPopulation, 100}}, ids, kT1);
  EXPECT_EQ(sheep.param(ParameterName::kStartingPopulation), 100);
  EXPECT_EQ(sheep.param(ParameterName::kLifespan), 24);
  EXPECT_EQ(sheep.params.size(), 13u);
  EXPECT_EQ(m.updated_at, kT1);
  EXPECT_EQ(code_of([&] {
              add_component(m, "light", ComponentKind::kAbiotic,
                            {{ParameterName::kPhotosynthesisRate, 0.5}}, ids, kT1);
            }),
            ErrorCode::kValidation);
  EXPECT_EQ(code_of([&] { add_component(m, "sheep", ComponentKind::kBiotic, {}, ids, kT1); }),
            ErrorCode::kConflict);
  EXPECT_EQ(code_of([&] {
              add_component(m, "wolf", ComponentKind::kBiotic, {{ParameterName::kLifespan, 0}}, ids, kT1);
            }),
            ErrorCode::kValidation);
  const auto& light = add_component(m, "light", ComponentKind::kAbiotic, {}, ids, kT1);
  EXPECT_EQ(light.params.size(), 3u);
  EXPECT_EQ(light.param(ParameterName::kAmount), 1000);
}

TEST(Model, SetParameterReportsOldAndNew) {
  IdSource ids;
  Model m = new_model("m", "u", ids, kT0);
  const std::string sheep = add_component(m, "sheep", ComponentKind::kBiotic, {}, ids, kT0).id;
  const auto change = set_parameter(m, sheep, ParameterName::kOffspringCount, 3, kT1);
  EXPECT_EQ(change.old_value, 2);
  EXPECT_EQ(change.new_value, 3);
  EXPECT_EQ(m.updated_at, kT1);
  EXPECT_EQ(code_of([&] { set_parameter(m, sheep, ParameterName::kAmount, 5, kT1); }),
            ErrorCode::kValidation);
  EXPECT_EQ(code_of([&] { set_parameter(m, sheep, ParameterName::kLifespan, 0, kT1); }),
            ErrorCode::kValidation);
  EXPECT_EQ(code_of([&] { set_parameter(m, "c-999999", ParameterName::kLifespan, 5, kT1); }),
            ErrorCode::kNotFound);
  EXPECT_EQ(m.find_component(sheep)->param(ParameterName::kLifespan), 24);
}

TEST(Model, RelationshipTyping) {
  IdSource ids;
  Model m = new_model("m", "u", ids, kT0);
  const std::string wolf = add_component(m, "wolf", ComponentKind::kBiotic, {}, ids, kT0).id;
  const std::string sheep = add_component(m, "sheep", ComponentKind::kBiotic, {}, ids, kT0).id;
  const std::string grass = add_component(m, "grass", ComponentKind::kAbiotic, {}, ids, kT0).id;
  const auto& r = add_relationship(m, wolf, sheep, RelationKind::kConsumes, 0.2, ids, kT0);
  EXPECT_EQ(r.rate, 0.2);
  EXPECT_EQ(code_of([&] { add_relationship(m, grass, wolf, RelationKind::kConsumes, 0.1, ids, kT0); }),
            ErrorCode::kValidation);
  EXPECT_EQ(code_of([&] { add_relationship(m, wolf, sheep, RelationKind::kConsumes, 0.3, ids, kT0); }),
            ErrorCode::kConflict);
  EXPECT_EQ(code_of([&] { add_relationship(m, wolf, "c-404", RelationKind::kConsumes, 0.1, ids, kT0); }),
            ErrorCode::kNotFound);
  EXPECT_EQ(code_of([&] { add_relationship(m, wolf, wolf, RelationKind::kConsumes, 0.1, ids, kT0); }),
            ErrorCode::kValidation);
  // consumes may target an abiotic resource; produces/destroys are typed.
  add_relationship(m, sheep, grass, RelationKind::kConsumes, 1, ids, kT0);
  add_relationship(m, sheep, grass, RelationKind::kProduces, 0.1, ids, kT0);
  add_relationship(m, grass, wolf, RelationKind::kDestroys, 0.1, ids, kT0);
  EXPECT_EQ(code_of([&] { add_relationship(m, grass, sheep, RelationKind::kProduces, 0.1, ids, kT0); }),
            ErrorCode::kValidation);
  EXPECT_EQ(code_of([&] { add_relationship(m, wolf, sheep, RelationKind::kDestroys, 0.1, ids, kT0); }),
            ErrorCode::kValidation);
  EXPECT_EQ(code_of([&] { add_relationship(m, sheep, wolf, RelationKind::kConsumes, 1.5, ids, kT0); }),
            ErrorCode::kValidation);
  EXPECT_TRUE(validate(m).empty());
}

TEST(Model, AddRemovePairsRestoreStructure) {
  IdSource ids;
  const Model base = clone_model(exemplar("wolf-sheep-grass"), "u", ids, kT0);
  Model m = base;
  const std::string fox = add_component(m, "fox", ComponentKind::kBiotic, {}, ids, kT1).id;
  const std::string edge =
      add_relationship(m, fox, m.find_component_by_name("Ovis aries")->id, RelationKind::kConsumes, 0.1,
                       ids, kT1)
          .id;
  EXPECT_FALSE(structurally_equal(m, base));
  EXPECT_EQ(code_of([&] { remove_component(m, fox, kT1); }), ErrorCode::kConflict);
  remove_relationship(m, edge, kT1);
  remove_component(m, fox, kT1);
  EXPECT_TRUE(structurally_equal(m, base));
  EXPECT_EQ(code_of([&] { remove_relationship(m, edge, kT1); }), ErrorCode::kNotFound);
}

TEST(Model, CloneIsDeepWithFreshIds) {
  IdSource ids;
  const Model& source = exemplar("wolf-sheep-grass");
  Model copy = clone_model(source, "u2", ids, kT1);
  EXPECT_TRUE(structurally_equal(copy, source));
  EXPECT_NE(copy.id, source.id);
  for (const auto& c : copy.components) EXPECT_EQ(source.find_component(c.id), nullptr);
  EXPECT_EQ(copy.provenance, Provenance::cloned_from(source.id));
  EXPECT_TRUE(validate(copy).empty());

  set_parameter(copy, copy.components[0].id, ParameterName::kLifespan, 7, kT1);
  EXPECT_NE(source.components[0].param(ParameterName::kLifespan), 7);

  Model grandchild = clone_model(copy, "u3", ids, kT1);
  EXPECT_EQ(grandchild.provenance.ref, copy.id);
}

TEST(Model, ValidateReportsViolations) {
  IdSource ids;
  Model m = clone_model(exemplar("wolf-sheep-grass"), "u", ids, kT0);
  EXPECT_TRUE(validate(m).empty());
  EXPECT_EQ(validate(m), validate(m));

  Model dangling = m;
  dangling.relationships[0].target = "c-missing";
  auto v = validate(dangling);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].code, "dangling_endpoint");

  Model typed = m;
  typed.components[2].kind = ComponentKind::kAbiotic;  // grass becomes abiotic...
  typed.components[2].params = {{ParameterName::kAmount, 5},
                                {ParameterName::kMinimumAmount, 0},
                                {ParameterName::kGrowthRate, 0}};
  // ...and then consumes edges sourced at it are ill-typed
  Model abiotic_source = typed;
  abiotic_source.relationships[1].source = typed.components[2].id;
  abiotic_source.relationships[1].target = typed.components[1].id;
  v = validate(abiotic_source);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].code, "type_violation");

  Model dup = m;
  dup.components[1].name = dup.components[0].name;
  v = validate(dup);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].code, "duplicate_component_name");

  Model missing = m;
  missing.components[0].params.erase(ParameterName::kLifespan);
  v = validate(missing);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].code, "missing_parameter");
}

TEST(Exemplars, ShipTheTwoReferenceModels) {
  const Model& kudzu = exemplar("kudzu");
  EXPECT_EQ(kudzu.components.size(), 4u);
  EXPECT_EQ(kudzu.relationships.size(), 4u);
  EXPECT_EQ(kudzu.find_component_by_name("light")->kind, ComponentKind::kAbiotic);
  for (const char* n : {"kudzu", "american hornbeam", "kudzu bug"}) {
    ASSERT_NE(kudzu.find_component_by_name(n), nullptr) << n;
  }
  auto has_edge = [](const Model& m, const char* src, const char* dst) {
    const auto* s = m.find_component_by_name(src);
    const auto* d = m.find_component_by_name(dst);
    for (const auto& r : m.relationships) {
      if (r.source == s->id && r.target == d->id && r.kind == RelationKind::kConsumes) return true;
    }
    return false;
  };
  EXPECT_TRUE(has_edge(kudzu, "kudzu bug", "kudzu"));
  EXPECT_TRUE(has_edge(kudzu, "kudzu bug", "american hornbeam"));
  EXPECT_TRUE(has_edge(kudzu, "kudzu", "light"));
  EXPECT_TRUE(has_edge(kudzu, "american hornbeam", "light"));

  const Model& wsg = exemplar("wolf-sheep-grass");
  EXPECT_EQ(wsg.components.size(), 3u);
  EXPECT_EQ(wsg.relationships.size(), 2u);
  EXPECT_TRUE(has_edge(wsg, "Canis lupus", "Ovis aries"));
  EXPECT_TRUE(has_edge(wsg, "Ovis aries", "Grass"));
  for (const auto& m : load_exemplars()) EXPECT_TRUE(validate(m).empty()) << m.name;
}

TEST(Exemplars, FileRoundTripsByteIdentically) {
  std::ifstream in(std::string(VERA_DATA_DIR) + "/exemplars.json", std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  EXPECT_EQ(text, std::string(bundled_exemplar_text()));
  EXPECT_EQ(dump_models(load_exemplars()), text);
  EXPECT_EQ(dump_models(models_from_json(nlohmann::json::parse(text))), text);
}

TEST(Exemplars, CorruptFileFailsToLoad) {
  const auto dir = std::filesystem::temp_directory_path() / "vera_model_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "bad.json") << "[{\"id\": 3";
  }
  EXPECT_EQ(code_of([&] { load_exemplars(dir / "bad.json"); }), ErrorCode::kValidation);
  EXPECT_EQ(code_of([&] { load_exemplars(dir / "missing.json"); }), ErrorCode::kIo);
}

TEST(ModelJson, CanonicalRoundTrip) {
  IdSource ids;
  Model m = new_model("mixed", "u", ids, kT0);
  const std::string b = add_component(m, "b", ComponentKind::kBiotic, {{ParameterName::kBodyMass, 0.125}}, ids, kT0).id;
  const std::string a = add_component(m, "a", ComponentKind::kAbiotic, {}, ids, kT0).id;
  add_relationship(m, b, a, RelationKind::kProduces, 0.3, ids, kT1);
  const std::string text = dump_model(m);
  const Model back = model_from_json(nlohmann::json::parse(text));
  EXPECT_EQ(back, m);
  EXPECT_EQ(dump_model(back), text);

  // Canonical form orders by id regardless of in-memory order.
  Model shuffled = m;
  std::reverse(shuffled.components.begin(), shuffled.components.end());
  EXPECT_EQ(dump_model(shuffled), text);

  const auto doc = model_to_json(m);
  EXPECT_EQ(doc["components"][0]["params"]["lifespan"].dump(), "24");
  EXPECT_EQ(doc["provenance"]["kind"], "fresh");
  EXPECT_EQ(doc["created_at"], "2022-01-01T00:00:00Z");
}

TEST(ModelJson, SchemaErrorsAreValidationErrors) {
  EXPECT_EQ(code_of([] { model_from_json(nlohmann::json::array()); }), ErrorCode::kValidation);
  auto doc = model_to_json(exemplar("kudzu"));
  doc["components"][0]["kind"] = "mineral";
  EXPECT_EQ(code_of([&] { model_from_json(doc); }), ErrorCode::kValidation);
  doc = model_to_json(exemplar("kudzu"));
  doc["components"][0]["params"]["wingspan"] = 3;
  EXPECT_EQ(code_of([&] { model_from_json(doc); }), ErrorCode::kValidation);
}

}  // namespace
}  // namespace vera::cmp
