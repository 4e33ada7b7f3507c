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

#include "vera/harness.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <random>
#include <sstream>

#include "vera/analytics.h"
#include "vera/error.h"
#include "vera/model_json.h"
#include "vera/rng.h"
#include "vera/service.h"
#include "vera/traits.h"

namespace vera::harness {
namespace {

using nlohmann::json;
using cmp::ParameterName;

constexpr const char* kPhaseNames[] = {"Phase I", "Phase II", "Phase III", "Phase IV", "Phase V"};

// Species a learner may add during a structural edit.
constexpr const char* kExtraSpecies[] = {"Vulpes vulpes", "Oryctolagus cuniculus", "Lynx canadensis",
                                         "Odocoileus virginianus"};

Timestamp scenario_epoch() { return parse_rfc3339("2022-01-10T09:00:00Z"); }

double round_to(double v, double step) { return std::round(v / step) * step; }

bool integral_param(ParameterName p) {
  switch (p) {
    case ParameterName::kLifespan:
    case ParameterName::kReproductiveMaturity:
    case ParameterName::kReproductiveInterval:
    case ParameterName::kStartingPopulation:
    case ParameterName::kOffspringCount:
    case ParameterName::kMinimumPopulation:
      return true;
    default:
      return false;
  }
}

struct Candidate {
  std::string subject;  // component or relationship id
  bool relationship = false;
  ParameterName parameter = ParameterName::kInteractionRate;
  std::string label;
  bool advanced = false;
  double current = 0;
};

std::vector<Candidate> candidates(const cmp::Model& model) {
  std::vector<Candidate> out;
  for (const auto& c : model.components) {
    for (auto p : cmp::kAllParameters) {
      if (!cmp::accepts(c.kind, p)) continue;
      out.push_back({c.id, false, p, std::string(cmp::label(p)), cmp::is_advanced(p), c.param(p)});
    }
  }
  for (const auto& r : model.relationships) {
    out.push_back({r.id, true, ParameterName::kInteractionRate, std::string(cmp::rate_label(r.kind)),
                   false, r.rate});
  }
  return out;
}

class Learner {
 public:
  Learner(service::Service& svc, ManualClock& clock, const ScenarioScript& script,
          ScenarioResult& result, std::string participant, std::string group_label,
          const LearnerPolicy& policy)
      : svc_(svc),
        clock_(clock),
        script_(script),
        result_(result),
        participant_(std::move(participant)),
        label_(std::move(group_label)),
        policy_(policy),
        rng_({script.seed, fnv1a64(participant_)}) {}

  void join(const std::string& link_path) {
    tick();
    const json r = must(service::Request::get(link_path + "&participant=" + participant_));
    token_ = r.at("token").get<std::string>();
    group_ = r.at("group").get<std::string>();
    for (auto f : exp::kAllFlags) flags_.flags[f] = r.at("flags").value(std::string(exp::to_string(f)), true);
  }

  void run_session(int phase, int session) {
    clock_.advance(std::chrono::minutes(31 + pick(60)));
    start_model(session == 0);
    if (policy_.kind == LearnerPolicy::Kind::kGuided && session == 0) hypotheses(phase);
    std::poisson_distribution<int> changes(policy_.changes_mean);
    const int n = std::max(1, changes(rng_));
    for (int i = 0; i < n; ++i) {
      free_change();
      if (chance(policy_.structural_probability)) structural_edit();
      if (chance(policy_.eol_probability)) lookup();
      if (chance(policy_.simulate_probability)) simulate();
    }
    simulate();
  }

 private:
  void tick() { clock_.advance(std::chrono::minutes(1 + pick(5))); }

  std::size_t pick(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }
  bool chance(double p) { return rng_.uniform() < p; }

  bool allowed(exp::FeatureFlag f) const { return flags_.enabled(f); }
  bool attempt(exp::FeatureFlag f) const { return allowed(f) || script_.probe_disabled; }

  // Successful call or abort. A disabled flag must come back as
  // feature_disabled; anything else is a broken gate.
  std::optional<json> call(const service::Request& request,
                           std::optional<exp::FeatureFlag> gate = std::nullopt) {
    tick();
    const service::Response r = svc_.handle(request);
    const bool blocked = gate && !allowed(*gate);
    if (blocked) {
      const json body = r.json();
      if (r.status != 403 || body.value("code", "") != "feature_disabled") {
        fail(ErrorCode::kConflict, "scenario: " + request.method + " " + request.path +
                                       " was not rejected although " +
                                       std::string(exp::to_string(*gate)) + " is disabled");
      }
      ++result_.rejected[group_][std::string(exp::to_string(*gate))];
      return std::nullopt;
    }
    if (!r.ok()) {
      const json body = r.json();
      fail(ErrorCode::kConflict, "scenario: " + request.method + " " + request.path + " failed for " +
                                     participant_ + ": " + body.value("message", r.body),
           body.value("detail", json::object()));
    }
    return r.json();
  }

  json must(const service::Request& request) { return *call(request); }

  void adopt(const json& response) {
    model_ = cmp::model_from_json(response.at("model"));
  }

  void start_model(bool phase_start) {
    if (!phase_start && model_ && attempt(exp::FeatureFlag::kCloning)) {
      if (auto r = call(service::Request::post("/models/" + model_->id + "/clone", json::object(), token_),
                        exp::FeatureFlag::kCloning)) {
        adopt(*r);
        return;
      }
    }
    if (!phase_start && model_) return;
    if (attempt(exp::FeatureFlag::kExemplarModels)) {
      if (auto r = call(service::Request::post("/models", {{"exemplar", script_.base_model}}, token_),
                        exp::FeatureFlag::kExemplarModels)) {
        adopt(*r);
        return;
      }
    }
    build_from_scratch();
  }

  // Rebuilds the base exemplar one construct at a time.
  void build_from_scratch() {
    const auto exemplars = cmp::load_exemplars();
    auto it = std::find_if(exemplars.begin(), exemplars.end(),
                           [&](const cmp::Model& m) { return m.name == script_.base_model; });
    if (it == exemplars.end()) fail(ErrorCode::kNotFound, "unknown exemplar " + script_.base_model);
    adopt(must(service::Request::post("/models", {{"name", it->name}}, token_)));
    std::map<std::string, std::string> ids;
    for (const auto& c : it->components) {
      json params = json::object();
      for (const auto& [p, v] : c.params) {
        if (!cmp::is_advanced(p) || p == ParameterName::kPhotosynthesisRate) params[std::string(cmp::key(p))] = v;
      }
      const json r = must(service::Request::post(
          "/models/" + model_->id + "/components",
          {{"name", c.name}, {"kind", cmp::to_string(c.kind)}, {"params", params}}, token_));
      ids[c.id] = r.at("component").get<std::string>();
      adopt(r);
    }
    for (const auto& rel : it->relationships) {
      adopt(must(service::Request::post("/models/" + model_->id + "/relationships",
                                        {{"source", ids.at(rel.source)},
                                         {"target", ids.at(rel.target)},
                                         {"kind", cmp::to_string(rel.kind)},
                                         {"rate", rel.rate}},
                                        token_)));
    }
  }

  double propose(const Candidate& c) {
    static constexpr double kFactors[] = {0.5, 0.75, 1.5, 2.0};
    const double f = kFactors[pick(4)];
    const ParameterName p = c.parameter;
    if (integral_param(p)) {
      const bool months = p == ParameterName::kLifespan || p == ParameterName::kReproductiveMaturity ||
                          p == ParameterName::kReproductiveInterval;
      double v = std::round(c.current * f);
      if (c.current == 0) v = static_cast<double>(1 + pick(20));
      if (v == c.current) v += 1;
      return months ? std::max(1.0, v) : std::max(0.0, v);
    }
    switch (p) {
      case ParameterName::kPhotosynthesisRate:
      case ParameterName::kAssimilationEfficiency:
      case ParameterName::kInteractionRate:
        return round_to(0.05 + 0.9 * rng_.uniform(), 0.01);
      case ParameterName::kGrowthRate:
        return round_to(rng_.uniform() - 0.5, 0.01);
      case ParameterName::kMoveVelocity:
      case ParameterName::kRespiratoryRate:
      case ParameterName::kMoveDirection:
      case ParameterName::kCarbonBiomass:
        return round_to(10 * rng_.uniform(), 0.1);
      default:
        return c.current == 0 ? 1.0 : c.current * f;
    }
  }

  void set(const Candidate& c, double value, const std::string& hypothesis = {}) {
    json body = {{"value", value}};
    if (c.relationship) {
      body["relationship"] = c.subject;
    } else {
      body["component"] = c.subject;
      body["parameter"] = cmp::key(c.parameter);
    }
    if (!hypothesis.empty()) body["hypothesis"] = hypothesis;
    std::optional<exp::FeatureFlag> gate;
    if (c.advanced) gate = exp::FeatureFlag::kAdvancedParameters;
    if (gate && !attempt(*gate)) return;
    if (auto r = call(service::Request::post("/models/" + model_->id + "/parameters", body, token_), gate)) {
      adopt(*r);
    }
  }

  void free_change() {
    std::vector<Candidate> all = candidates(*model_);
    if (!script_.probe_disabled && !allowed(exp::FeatureFlag::kAdvancedParameters)) {
      std::erase_if(all, [](const Candidate& c) { return c.advanced; });
    }
    if (all.empty()) return;
    if (policy_.kind == LearnerPolicy::Kind::kGuided) {
      std::vector<Candidate> in, out;
      for (auto& c : all) (policy_.focus.count(c.label) ? in : out).push_back(c);
      const bool focus = chance(policy_.focus_probability);
      const auto& pool = (focus && !in.empty()) || out.empty() ? in : out;
      const Candidate c = pool[pick(pool.size())];
      set(c, propose(c));
      return;
    }
    const Candidate c = all[pick(all.size())];
    set(c, propose(c));
  }

  // The three scripted hypotheses: prey reproduction, consumer starting
  // population and consumption rate. Later phases test two levels each.
  void hypotheses(int phase) {
    const cmp::Relationship* top = nullptr;
    for (const auto& r : model_->relationships) {
      if (r.kind != cmp::RelationKind::kConsumes) continue;
      const bool eaten = std::any_of(model_->relationships.begin(), model_->relationships.end(),
                                     [&](const cmp::Relationship& o) { return o.target == r.source; });
      const auto* prey = model_->find_component(r.target);
      if (!eaten && prey != nullptr && prey->kind == cmp::ComponentKind::kBiotic) {
        top = &r;
        break;
      }
    }
    if (top == nullptr) return;
    const std::string consumer = top->source;
    const std::string prey = top->target;
    const std::string edge = top->id;
    const int levels = phase == 0 ? 1 : 2;
    auto param = [&](const std::string& id, ParameterName p) {
      const auto* c = model_->find_component(id);
      return Candidate{id, false, p, std::string(cmp::label(p)), false, c->param(p)};
    };
    for (int level = 0; level < levels; ++level) {
      const double up = level == 0 ? 2.0 : 0.5;
      auto oc = param(prey, ParameterName::kOffspringCount);
      set(oc, std::max(0.0, std::round(oc.current * up + (level == 0 ? 1 : 0))), "H1 prey reproduction rate");
      simulate();
      auto ri = param(prey, ParameterName::kReproductiveInterval);
      set(ri, std::max(1.0, std::round(ri.current / up)), "H1 prey reproduction rate");
      simulate();
      auto sp = param(consumer, ParameterName::kStartingPopulation);
      set(sp, std::max(1.0, std::round(sp.current * up)), "H2 consumer starting population");
      simulate();
      const auto* r = model_->find_relationship(edge);
      if (r == nullptr) continue;
      Candidate rate{edge, true, ParameterName::kInteractionRate, std::string(cmp::rate_label(r->kind)),
                     false, r->rate};
      set(rate, std::clamp(round_to(rate.current * (level == 0 ? 4.0 : 0.5), 0.01), 0.01, 1.0),
          "H3 consumption rate");
      simulate();
    }
  }

  void structural_edit() {
    std::vector<std::string> fresh;
    for (const char* s : kExtraSpecies) {
      if (model_->find_component_by_name(s) == nullptr) fresh.emplace_back(s);
    }
    std::vector<std::string> prey;
    for (const auto& c : model_->components) {
      if (c.kind == cmp::ComponentKind::kBiotic) prey.push_back(c.id);
    }
    if (fresh.empty() || prey.empty()) {
      // Nothing left to add: drop the newest relationship of an added species.
      for (auto it = model_->relationships.rbegin(); it != model_->relationships.rend(); ++it) {
        const auto* src = model_->find_component(it->source);
        if (src && std::find(std::begin(kExtraSpecies), std::end(kExtraSpecies), src->name) !=
                       std::end(kExtraSpecies)) {
          adopt(must(service::Request::del("/models/" + model_->id + "/relationships/" + it->id, token_)));
          return;
        }
      }
      return;
    }
    const std::string name = fresh[pick(fresh.size())];
    const std::string target = prey[pick(prey.size())];
    const json r = must(service::Request::post("/models/" + model_->id + "/components",
                                               {{"name", name}, {"kind", "biotic"}}, token_));
    adopt(r);
    adopt(must(service::Request::post("/models/" + model_->id + "/relationships",
                                      {{"source", r.at("component")}, {"target", target},
                                       {"kind", "consumes"}, {"rate", 0.1}},
                                      token_)));
  }

  void lookup() {
    if (!attempt(exp::FeatureFlag::kLookupEol)) return;
    static const auto known = [] {
      std::set<std::string> names;
      const auto provider = traits::LocalTraitProvider::bundled();
      for (const auto& r : provider->records()) {
        names.insert(traits::lowercase(r.canonical_name));
      }
      return names;
    }();
    std::vector<std::string> targets;
    for (const auto& c : model_->components) {
      if (c.kind == cmp::ComponentKind::kBiotic && known.count(traits::lowercase(c.name))) {
        targets.push_back(c.id);
      }
    }
    if (targets.empty()) return;
    const std::string id = targets[pick(targets.size())];
    if (auto r = call(service::Request::post("/models/" + model_->id + "/apply-traits",
                                             {{"component", id}}, token_),
                      exp::FeatureFlag::kLookupEol)) {
      adopt(*r);
    }
  }

  void simulate() {
    if (!attempt(exp::FeatureFlag::kSimulation)) return;
    call(service::Request::post("/models/" + model_->id + "/simulate",
                                {{"runs", script_.sim_runs}, {"steps", script_.sim_steps}}, token_),
         exp::FeatureFlag::kSimulation);
  }

  service::Service& svc_;
  ManualClock& clock_;
  const ScenarioScript& script_;
  ScenarioResult& result_;
  std::string participant_;
  std::string label_;
  LearnerPolicy policy_;
  CounterRng rng_;
  std::string token_;
  std::string group_;
  exp::GroupConfig flags_;
  std::optional<cmp::Model> model_;
};

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string fixed2(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << v;
  return out.str();
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

struct Bar {
  std::string category;  // x-axis cluster
  std::string series;    // legend entry
  double value = 0;
};

std::string bar_chart_svg(const std::string& title, const std::vector<Bar>& bars, double max_value,
                          const std::string& unit) {
  std::vector<std::string> categories, series;
  for (const auto& b : bars) {
    if (std::find(categories.begin(), categories.end(), b.category) == categories.end()) {
      categories.push_back(b.category);
    }
    if (std::find(series.begin(), series.end(), b.series) == series.end()) series.push_back(b.series);
  }
  static constexpr const char* kColors[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2"};
  const int bar_w = 28, gap = 24, left = 50, top = 40, plot_h = 200;
  const int cluster_w = static_cast<int>(series.size()) * bar_w + gap;
  const int width = left + std::max(1, static_cast<int>(categories.size())) * cluster_w + 140;
  const int height = top + plot_h + 50;
  if (max_value <= 0) max_value = 1;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "  <text x=\"" << left << "\" y=\"20\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
  svg << "  <line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << width - 130
      << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  svg << "  <text x=\"4\" y=\"" << top + 4 << "\">" << fixed2(max_value) << unit << "</text>\n";
  for (const auto& b : bars) {
    const auto ci = std::find(categories.begin(), categories.end(), b.category) - categories.begin();
    const auto si = std::find(series.begin(), series.end(), b.series) - series.begin();
    const double h = plot_h * std::clamp(b.value / max_value, 0.0, 1.0);
    const double x = left + ci * cluster_w + si * bar_w + gap / 2.0;
    svg << "  <rect x=\"" << x << "\" y=\"" << top + plot_h - h << "\" width=\"" << bar_w - 4
        << "\" height=\"" << h << "\" fill=\"" << kColors[si % 5] << "\"><title>"
        << xml_escape(b.series + " / " + b.category + ": " + fixed2(b.value)) << "</title></rect>\n";
  }
  for (std::size_t ci = 0; ci < categories.size(); ++ci) {
    svg << "  <text x=\"" << left + ci * cluster_w + gap / 2 << "\" y=\"" << top + plot_h + 16
        << "\">" << xml_escape(categories[ci]) << "</text>\n";
  }
  for (std::size_t si = 0; si < series.size(); ++si) {
    const int y = top + 14 * static_cast<int>(si);
    svg << "  <rect x=\"" << width - 120 << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\""
        << kColors[si % 5] << "\"/>\n";
    svg << "  <text x=\"" << width - 105 << "\" y=\"" << y + 9 << "\">" << xml_escape(series[si])
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace

// ---------------------------------------------------------------- policies

LearnerPolicy LearnerPolicy::guided() {
  LearnerPolicy p;
  p.kind = Kind::kGuided;
  p.focus = analytics::default_focus_set();
  p.focus_probability = 0.9;
  p.changes_mean = 4;
  p.structural_probability = 0.02;
  p.eol_probability = 0.05;
  p.simulate_probability = 0.5;
  return p;
}

LearnerPolicy LearnerPolicy::unguided() {
  LearnerPolicy p;
  p.kind = Kind::kUnguided;
  p.changes_mean = 8;
  p.structural_probability = 0.1;
  p.eol_probability = 0.1;
  p.simulate_probability = 0.3;
  return p;
}

void LearnerPolicy::check() const {
  for (double v : {focus_probability, structural_probability, eol_probability, simulate_probability}) {
    if (!(v >= 0 && v <= 1)) fail(ErrorCode::kValidation, "policy probabilities must lie in [0, 1]");
  }
  if (!(changes_mean > 0)) fail(ErrorCode::kValidation, "changes_mean must be positive");
  if (kind == Kind::kGuided && focus.empty()) {
    fail(ErrorCode::kValidation, "a guided policy needs a focus set");
  }
}

json policy_to_json(const LearnerPolicy& p) {
  json doc = {{"kind", p.kind == LearnerPolicy::Kind::kGuided ? "guided" : "unguided"},
              {"changes_mean", p.changes_mean},
              {"structural_probability", p.structural_probability},
              {"eol_probability", p.eol_probability},
              {"simulate_probability", p.simulate_probability}};
  if (p.kind == LearnerPolicy::Kind::kGuided) {
    doc["focus"] = p.focus;
    doc["focus_probability"] = p.focus_probability;
  }
  return doc;
}

LearnerPolicy policy_from_json(const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::kValidation, "policy must be an object");
  const std::string kind = doc.value("kind", "unguided");
  LearnerPolicy p;
  if (kind == "guided") {
    p = LearnerPolicy::guided();
  } else if (kind == "unguided") {
    p = LearnerPolicy::unguided();
  } else {
    fail(ErrorCode::kValidation, "unknown policy kind '" + kind + "'");
  }
  try {
    if (doc.contains("focus")) p.focus = doc["focus"].get<std::set<std::string>>();
    p.focus_probability = doc.value("focus_probability", p.focus_probability);
    p.changes_mean = doc.value("changes_mean", p.changes_mean);
    p.structural_probability = doc.value("structural_probability", p.structural_probability);
    p.eol_probability = doc.value("eol_probability", p.eol_probability);
    p.simulate_probability = doc.value("simulate_probability", p.simulate_probability);
  } catch (const json::exception& e) {
    fail(ErrorCode::kValidation, std::string("policy: ") + e.what());
  }
  p.check();
  return p;
}

// ---------------------------------------------------------------- scripts

void ScenarioScript::check() const {
  if (phases.empty()) fail(ErrorCode::kValidation, "a scenario needs at least one phase");
  if (phases.size() > std::size(kPhaseNames)) fail(ErrorCode::kValidation, "too many phases");
  for (const auto& p : phases) {
    if (p.sessions < 1) fail(ErrorCode::kValidation, "sessions per phase must be at least 1");
  }
  if (learners < 1) fail(ErrorCode::kValidation, "learners must be at least 1");
  if (phase_days < 1) fail(ErrorCode::kValidation, "phase_days must be at least 1");
  if (sim_runs < 1 || sim_steps < 1) fail(ErrorCode::kValidation, "simulation size must be positive");
  policy_a.check();
  policy_b.check();
}

ScenarioScript ScenarioScript::default_script() {
  ScenarioScript s;
  s.phases = {{"Phase I", 2}, {"Phase II", 2}};
  return s;
}

json script_to_json(const ScenarioScript& s) {
  json phases = json::array();
  for (const auto& p : s.phases) phases.push_back({{"name", p.name}, {"sessions", p.sessions}});
  json doc = {{"phases", phases},
              {"learners", s.learners},
              {"base_model", s.base_model},
              {"seed", s.seed},
              {"policies", {{"A", policy_to_json(s.policy_a)}, {"B", policy_to_json(s.policy_b)}}},
              {"phase_days", s.phase_days},
              {"sim_runs", s.sim_runs},
              {"sim_steps", s.sim_steps},
              {"probe_disabled", s.probe_disabled}};
  if (s.flags_a || s.flags_b) {
    doc["flags"] = json::object();
    if (s.flags_a) doc["flags"]["A"] = exp::group_to_json(*s.flags_a)["flags"];
    if (s.flags_b) doc["flags"]["B"] = exp::group_to_json(*s.flags_b)["flags"];
  }
  return doc;
}

ScenarioScript script_from_json(const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::kValidation, "scenario script must be an object");
  ScenarioScript s = ScenarioScript::default_script();
  try {
    if (doc.contains("phases")) {
      s.phases.clear();
      for (const auto& p : doc["phases"]) {
        s.phases.push_back({p.at("name").get<std::string>(), p.value("sessions", 1)});
      }
    }
    s.learners = doc.value("learners", s.learners);
    s.base_model = doc.value("base_model", s.base_model);
    s.seed = doc.value("seed", s.seed);
    s.phase_days = doc.value("phase_days", s.phase_days);
    s.sim_runs = doc.value("sim_runs", s.sim_runs);
    s.sim_steps = doc.value("sim_steps", s.sim_steps);
    s.probe_disabled = doc.value("probe_disabled", s.probe_disabled);
    if (doc.contains("policies")) {
      const json& p = doc["policies"];
      if (p.contains("A")) s.policy_a = policy_from_json(p["A"]);
      if (p.contains("B")) s.policy_b = policy_from_json(p["B"]);
    }
    if (doc.contains("flags")) {
      const json& f = doc["flags"];
      auto partial = [](const json& flags) {
        exp::GroupConfig g = exp::GroupConfig::all_enabled();
        for (const auto& [k, v] : exp::group_from_json({{"flags", flags}}, false).flags) g.flags[k] = v;
        return g;
      };
      if (f.contains("A")) s.flags_a = partial(f["A"]);
      if (f.contains("B")) s.flags_b = partial(f["B"]);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kValidation, std::string("scenario script: ") + e.what());
  }
  s.check();
  return s;
}

ScenarioScript load_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot read " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) fail(ErrorCode::kValidation, path.string() + " is not valid JSON");
  return script_from_json(doc);
}

// ---------------------------------------------------------------- scenario

ScenarioResult run_scenario(const ScenarioScript& script) {
  return run_scenario(script, script.policy_a, script.policy_b);
}

ScenarioResult run_scenario(ScenarioScript script, const LearnerPolicy& policy_a,
                            const LearnerPolicy& policy_b) {
  script.policy_a = policy_a;
  script.policy_b = policy_b;
  script.check();

  const Timestamp t0 = scenario_epoch();
  auto clock = std::make_shared<ManualClock>(t0);
  service::ServiceConfig config;
  config.default_seed = script.seed;
  config.sync_simulation_limit = static_cast<std::size_t>(-1);
  service::Service svc(config, clock);
  const std::string researcher = config.researcher_token;

  const auto phase_start = [&](std::size_t k) {
    return t0 + std::chrono::hours(24) * script.phase_days * static_cast<long long>(k);
  };
  json phases = json::array();
  for (std::size_t k = 0; k < script.phases.size(); ++k) {
    phases.push_back({{"name", script.phases[k].name},
                      {"start", format_rfc3339(phase_start(k))},
                      {"end", format_rfc3339(phase_start(k + 1))}});
  }
  auto group_doc = [](const std::optional<exp::GroupConfig>& g) {
    return exp::group_to_json(g ? *g : exp::GroupConfig::all_enabled());
  };
  json a = group_doc(script.flags_a), b = group_doc(script.flags_b);
  a.erase("group_id");
  b.erase("group_id");
  const json spec = {{"name", "scenario-" + std::to_string(script.seed)},
                     {"mode", "manual"},
                     {"groups", {a, b}},
                     {"phases", phases},
                     {"seed", script.seed}};
  auto expect = [](const service::Response& r, const std::string& what) {
    if (!r.ok()) fail(ErrorCode::kConflict, "scenario: " + what + " failed: " + r.body);
    return r.json();
  };
  const json created = expect(svc.handle(service::Request::post("/researcher/experiments", spec, researcher)),
                              "create experiment");

  ScenarioResult result;
  result.experiment_id = created.at("id").get<std::string>();
  const json links = expect(svc.handle(service::Request::get(
                                "/researcher/experiments/" + result.experiment_id + "/links", researcher)),
                            "links");
  std::vector<std::string> paths;
  for (const auto& l : links.at("links")) {
    std::string url = l.at("url").get<std::string>();
    if (url.rfind(config.base_url, 0) == 0) url = url.substr(config.base_url.size());
    paths.push_back(url);
    result.group_ids.push_back(l.at("group_id").get<std::string>());
  }

  std::vector<Learner> learners;
  for (int i = 0; i < script.learners; ++i) {
    for (int g = 0; g < 2; ++g) {
      std::ostringstream id;
      id << (g == 0 ? "A" : "B") << '-' << std::setw(2) << std::setfill('0') << i + 1;
      learners.emplace_back(svc, *clock, script, result, id.str(), g == 0 ? "A" : "B",
                            g == 0 ? policy_a : policy_b);
    }
  }

  for (std::size_t k = 0; k < script.phases.size(); ++k) {
    if (clock->now() > phase_start(k)) {
      fail(ErrorCode::kValidation, "scenario does not fit in phase_days; raise it or shrink the script");
    }
    clock->set(phase_start(k));
    for (int s = 0; s < script.phases[k].sessions; ++s) {
      for (std::size_t i = 0; i < learners.size(); ++i) {
        if (k == 0 && s == 0) learners[i].join(paths[i % 2]);
        learners[i].run_session(static_cast<int>(k), s);
      }
    }
  }
  if (clock->now() >= phase_start(script.phases.size())) {
    fail(ErrorCode::kValidation, "scenario does not fit in phase_days; raise it or shrink the script");
  }

  expect(svc.handle(service::Request::post("/researcher/experiments/" + result.experiment_id + "/close",
                                           json::object(), researcher)),
         "close");
  const service::Response analytics = svc.handle(service::Request::get(
      "/researcher/experiments/" + result.experiment_id + "/analytics", researcher));
  expect(analytics, "analytics");
  result.analytics = analytics.body;
  result.bundle = svc.export_bundle(result.experiment_id);
  return result;
}

// ---------------------------------------------------------------- replay

ReplayResult replay(const std::filesystem::path& path) {
  bundle::ExportBundle b;
  if (std::filesystem::is_directory(path)) {
    b = bundle::read_bundle(path);
  } else if (path.extension() == ".zip") {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::kIo, "cannot read " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    b = bundle::bundle_from_files(bundle::unzip_archive(bytes));
  } else {
    b.events = events::import_jsonl_file(path);
  }
  ReplayResult out;
  out.analytics = bundle::compute_analytics(b);
  out.analytics_text = bundle::dump_analytics(out.analytics);
  out.table = render_tables(out.analytics);
  return out;
}

// ---------------------------------------------------------------- reports

std::string render_tables(const json& a) {
  std::ostringstream out;
  const std::size_t space = a.value("parameter_space", json::array()).size();
  out << "Parameter space: " << space << " pairs\n\n";

  out << "Coverage\n" << pad("group", 10) << pad("phase", 12) << pad("explored", 10) << "pct\n";
  const json coverage = a.value("coverage", json::array());
  for (const auto& row : coverage) {
    out << pad(row.value("group", ""), 10) << pad(row.value("phase", ""), 12)
        << pad(std::to_string(row.value("explored", json::array()).size()), 10)
        << (row["pct"].is_number() ? fixed2(row["pct"].get<double>()) : std::string("n/a")) << "\n";
  }

  out << "\nFocus share\n" << pad("group", 10) << pad("phase", 12) << "pct\n";
  const json focus = a.value("focus", json::array());
  for (const auto& row : focus) {
    out << pad(row.value("group", ""), 10) << pad(row.value("phase", ""), 12)
        << (row["pct"].is_number() ? fixed2(row["pct"].get<double>()) : std::string("n/a")) << "\n";
  }

  out << "\nSession patterns\n"
      << pad("group", 10) << pad("Observation", 13) << pad("Construction", 14) << "Exploration\n";
  const json patterns = a.value("patterns", json::object());
  for (const auto& [g, h] : patterns.items()) {
    out << pad(g, 10) << pad(std::to_string(h.value("Observation", 0)), 13)
        << pad(std::to_string(h.value("Construction", 0)), 14) << h.value("Exploration", 0) << "\n";
  }

  out << "\nGroups\n"
      << pad("group", 10) << pad("learners", 10) << pad("models", 8) << pad("session_s", 12)
      << "per_learner_s\n";
  const json groups = a.value("groups", json::object());
  for (const auto& [g, s] : groups.items()) {
    out << pad(g, 10) << pad(std::to_string(s.value("learners", 0)), 10)
        << pad(std::to_string(s.value("models", 0)), 8)
        << pad(std::to_string(s.value("total_session_time_s", 0)), 12)
        << fixed2(s.value("mean_session_time_per_learner_s", 0.0)) << "\n";
  }
  return out.str();
}

std::string render_coverage_svg(const json& a) {
  std::vector<Bar> bars;
  const json coverage = a.value("coverage", json::array());
  for (const auto& row : coverage) {
    if (!row["pct"].is_number()) continue;
    bars.push_back({row.value("phase", ""), "group " + row.value("group", ""), row["pct"].get<double>()});
  }
  return bar_chart_svg("Parameter space explored", bars, 100, "%");
}

std::string render_patterns_svg(const json& a) {
  std::vector<Bar> bars;
  double max_value = 0;
  const json patterns = a.value("patterns", json::object());
  for (const auto& [g, h] : patterns.items()) {
    for (const char* cls : {"Observation", "Construction", "Exploration"}) {
      const double v = h.value(cls, 0);
      bars.push_back({cls, "group " + g, v});
      max_value = std::max(max_value, v);
    }
  }
  return bar_chart_svg("Session patterns", bars, max_value, "");
}

}  // namespace vera::harness
