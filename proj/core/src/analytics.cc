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

#include "vera/analytics.h"

#include <algorithm>

#include "vera/error.h"

namespace vera::analytics {
namespace {

using nlohmann::json;

bool in_scope(const ActionEvent& e, std::string_view group, const PhaseWindow& phase) {
  return e.group == group && phase.contains(e.ts);
}

json pair_json(const ParamPair& p) { return {{"component", p.component}, {"parameter", p.parameter}}; }

json space_json(const ParameterSpace& space) {
  json out = json::array();
  for (const auto& p : space) out.push_back(pair_json(p));
  return out;
}

}  // namespace

double GroupStats::mean_session_time_per_learner_s() const {
  if (learners == 0) return 0;
  return static_cast<double>(total_session_time.count()) / static_cast<double>(learners);
}

GroupStats group_stats(const std::vector<ActionEvent>& events, std::string_view group) {
  GroupStats stats;
  for (auto a : events::kAllActions) stats.action_frequency[a] = 0;
  std::set<std::string_view> learners;
  std::set<std::string_view> models;
  std::vector<ActionEvent> mine;
  for (const auto& e : events) {
    if (e.group != group) continue;
    learners.insert(e.participant);
    if (!e.model.empty()) models.insert(e.model);
    ++stats.action_frequency[e.action];
    mine.push_back(e);
  }
  stats.learners = learners.size();
  stats.models = models.size();
  for (const auto& s : events::sessionize(std::move(mine))) stats.total_session_time += s.duration();
  return stats;
}

std::size_t model_complexity(const cmp::Model& model) {
  return model.components.size() + model.relationships.size();
}

std::size_t model_variety(const cmp::Model& model) {
  std::set<std::string_view> names;
  for (const auto& c : model.components) names.insert(c.name);
  std::set<cmp::RelationKind> kinds;
  for (const auto& r : model.relationships) kinds.insert(r.kind);
  return names.size() + kinds.size();
}

std::optional<ParamPair> pair_of(const ActionEvent& e) {
  if (e.action != ActionKind::kP) return std::nullopt;
  const json& p = e.payload;
  if (!p.is_object() || !p.contains("component") || !p.contains("parameter") ||
      !p["component"].is_string() || !p["parameter"].is_string()) {
    return std::nullopt;
  }
  return ParamPair{p["component"].get<std::string>(), p["parameter"].get<std::string>()};
}

ParameterSpace build_parameter_space(const std::vector<ActionEvent>& events) {
  ParameterSpace space;
  for (const auto& e : events) {
    if (auto p = pair_of(e)) space.insert(std::move(*p));
  }
  return space;
}

bool PhaseWindow::contains(Timestamp ts) const {
  return (!start || ts >= *start) && (!end || ts < *end);
}

std::vector<PhaseWindow> infer_phases(const std::vector<ActionEvent>& events, Seconds min_gap) {
  std::vector<Timestamp> times;
  for (const auto& e : events) times.push_back(e.ts);
  std::sort(times.begin(), times.end());
  std::vector<PhaseWindow> out;
  static constexpr const char* kRoman[] = {"I",  "II",  "III", "IV", "V",
                                           "VI", "VII", "VIII", "IX", "X"};
  auto name = [](std::size_t i) {
    return "Phase " + (i < 10 ? std::string(kRoman[i]) : std::to_string(i + 1));
  };
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (i == 0 || times[i] - times[i - 1] >= min_gap) {
      out.push_back({name(out.size()), times[i], std::nullopt});
    }
    out.back().end = times[i] + Seconds(1);
  }
  return out;
}

double round_pct(std::size_t num, std::size_t den) {
  if (den == 0) fail(ErrorCode::kNoData, "percentage of an empty denominator");
  const auto hundredths = (20000ULL * num + den) / (2ULL * den);
  return static_cast<double>(hundredths) / 100.0;
}

CoverageReport coverage(const std::vector<ActionEvent>& events, std::string_view group,
                        const PhaseWindow& phase, const ParameterSpace& space) {
  if (space.empty()) fail(ErrorCode::kNoData, "coverage is undefined for an empty parameter space");
  CoverageReport rep;
  rep.group = std::string(group);
  rep.phase = phase.name;
  for (const auto& e : events) {
    if (!in_scope(e, group, phase)) continue;
    if (auto p = pair_of(e); p && space.contains(*p)) rep.explored.insert(std::move(*p));
  }
  rep.percentage = round_pct(rep.explored.size(), space.size());
  return rep;
}

std::set<std::string> default_focus_set() {
  return {"consumption rate",      "starting population",  "minimum population",
          "offspring count",       "reproductive interval", "reproductive maturity"};
}

std::optional<double> focus_share(const std::vector<ActionEvent>& events, std::string_view group,
                                  const PhaseWindow& phase, const std::set<std::string>& focus) {
  if (focus.empty()) fail(ErrorCode::kValidation, "focus set must not be empty");
  std::size_t total = 0, hits = 0;
  for (const auto& e : events) {
    if (!in_scope(e, group, phase)) continue;
    auto p = pair_of(e);
    if (!p) continue;
    ++total;
    if (focus.contains(p->parameter)) ++hits;
  }
  if (total == 0) return std::nullopt;
  return round_pct(hits, total);
}

json TransitionMatrix::to_json() const {
  json states_json = json::array();
  for (auto s : states) states_json.push_back(events::to_string(s));
  json counts_json = json::object();
  for (const auto& [from, row] : counts) {
    for (const auto& [to, n] : row) {
      counts_json[std::string(events::to_string(from))][std::string(events::to_string(to))] = n;
    }
  }
  json probs_json = json::object();
  for (const auto& [from, row] : probs) {
    for (const auto& [to, p] : row) {
      probs_json[std::string(events::to_string(from))][std::string(events::to_string(to))] = p;
    }
  }
  return {{"states", states_json}, {"counts", counts_json}, {"probs", probs_json}};
}

namespace {

void normalize(TransitionMatrix& m) {
  m.probs.clear();
  for (const auto& [from, row] : m.counts) {
    std::size_t total = 0;
    for (const auto& [to, n] : row) total += n;
    if (total == 0) continue;
    for (const auto& [to, n] : row) {
      m.probs[from][to] = static_cast<double>(n) / static_cast<double>(total);
    }
  }
}

}  // namespace

TransitionMatrix transition_matrix(const std::vector<ActionKind>& actions) {
  if (actions.empty()) fail(ErrorCode::kValidation, "transition matrix of an empty session");
  TransitionMatrix m;
  std::set<ActionKind> seen(actions.begin(), actions.end());
  m.states.assign(seen.begin(), seen.end());
  for (std::size_t i = 1; i < actions.size(); ++i) ++m.counts[actions[i - 1]][actions[i]];
  normalize(m);
  return m;
}

TransitionMatrix transition_matrix(const events::Session& session) {
  return transition_matrix(session.actions());
}

TransitionMatrix pooled(const std::vector<TransitionMatrix>& matrices) {
  TransitionMatrix out;
  std::set<ActionKind> seen;
  for (const auto& m : matrices) {
    seen.insert(m.states.begin(), m.states.end());
    for (const auto& [from, row] : m.counts) {
      for (const auto& [to, n] : row) out.counts[from][to] += n;
    }
  }
  out.states.assign(seen.begin(), seen.end());
  normalize(out);
  return out;
}

std::string_view to_string(PatternClass cls) {
  switch (cls) {
    case PatternClass::kObservation: return "Observation";
    case PatternClass::kConstruction: return "Construction";
    case PatternClass::kExploration: return "Exploration";
  }
  return "Observation";
}

PatternClass classify_pattern(const std::vector<ActionKind>& actions) {
  if (actions.empty()) fail(ErrorCode::kValidation, "cannot classify an empty session");
  auto has = [&](ActionKind a) { return std::find(actions.begin(), actions.end(), a) != actions.end(); };
  const bool structural = has(ActionKind::kC) || has(ActionKind::kR);
  if (!structural) return PatternClass::kObservation;

  if (has(ActionKind::kP)) {
    // Look for S ... (C|R) ... S.
    bool seen_s = false, edit_after_s = false;
    for (auto a : actions) {
      if (a == ActionKind::kS) {
        if (edit_after_s) return PatternClass::kExploration;
        seen_s = true;
      } else if (seen_s && (a == ActionKind::kC || a == ActionKind::kR)) {
        edit_after_s = true;
      }
    }
  }
  return PatternClass::kConstruction;
}

PatternClass classify_pattern(const events::Session& session) {
  return classify_pattern(session.actions());
}

json analytics_report(const ReportInput& in) {
  json groups = json::object();
  json patterns = json::object();
  json transitions = json::object();
  for (const auto& g : in.groups) {
    GroupStats st = group_stats(in.events, g);
    json freq = json::object();
    for (const auto& [a, n] : st.action_frequency) freq[std::string(events::to_string(a))] = n;
    groups[g] = {{"learners", st.learners},
                 {"models", st.models},
                 {"total_session_time_s", st.total_session_time.count()},
                 {"mean_session_time_per_learner_s", st.mean_session_time_per_learner_s()},
                 {"frequency", std::move(freq)}};

    std::vector<ActionEvent> mine;
    for (const auto& e : in.events) {
      if (e.group == g) mine.push_back(e);
    }
    std::map<PatternClass, std::size_t> hist = {{PatternClass::kObservation, 0},
                                                {PatternClass::kConstruction, 0},
                                                {PatternClass::kExploration, 0}};
    std::vector<TransitionMatrix> matrices;
    for (const auto& s : events::sessionize(std::move(mine))) {
      ++hist[classify_pattern(s)];
      matrices.push_back(transition_matrix(s));
    }
    json h = json::object();
    for (const auto& [cls, n] : hist) h[std::string(to_string(cls))] = n;
    patterns[g] = std::move(h);
    transitions[g] = pooled(matrices).to_json()["probs"];
  }

  std::vector<const cmp::Model*> models;
  for (const auto& m : in.models) models.push_back(&m);
  std::sort(models.begin(), models.end(), [](auto* a, auto* b) { return a->id < b->id; });
  json model_rows = json::array();
  for (const auto* m : models) {
    auto it = in.model_groups.find(m->id);
    model_rows.push_back({{"id", m->id},
                          {"group", it == in.model_groups.end() ? json(nullptr) : json(it->second)},
                          {"complexity", model_complexity(*m)},
                          {"variety", model_variety(*m)}});
  }

  const ParameterSpace space = build_parameter_space(in.events);
  json cov = json::array();
  json focus = json::array();
  for (const auto& g : in.groups) {
    for (const auto& ph : in.phases) {
      if (!space.empty()) {
        CoverageReport rep = coverage(in.events, g, ph, space);
        cov.push_back({{"group", g},
                       {"phase", ph.name},
                       {"explored", space_json(rep.explored)},
                       {"pct", rep.percentage}});
      } else {
        cov.push_back({{"group", g}, {"phase", ph.name}, {"explored", json::array()},
                       {"pct", nullptr}});
      }
      auto share = focus_share(in.events, g, ph, in.focus);
      focus.push_back({{"group", g}, {"phase", ph.name},
                       {"pct", share ? json(*share) : json(nullptr)}});
    }
  }

  return {{"groups", std::move(groups)},
          {"models", std::move(model_rows)},
          {"parameter_space", space_json(space)},
          {"coverage", std::move(cov)},
          {"focus", std::move(focus)},
          {"patterns", std::move(patterns)},
          {"transitions", std::move(transitions)}};
}

}  // namespace vera::analytics
