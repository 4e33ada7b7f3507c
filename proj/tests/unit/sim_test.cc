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

#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "vera/error.h"
#include "vera/model.h"
#include "vera/model_json.h"
#include "vera/sim.h"

namespace vera::sim {
namespace {

using cmp::ParameterName;

const Timestamp kT0 = parse_rfc3339("2022-01-01T00:00:00Z");

cmp::Model exemplar(const std::string& name) {
  for (auto& m : cmp::load_exemplars()) {
    if (m.name == name) return m;
  }
  throw std::runtime_error(name);
}

std::string edge_between(const cmp::Model& m, const char* src, const char* dst) {
  const auto* s = m.find_component_by_name(src);
  const auto* d = m.find_component_by_name(dst);
  for (const auto& r : m.relationships) {
    if (r.source == s->id && r.target == d->id) return r.id;
  }
  return {};
}

double sheep_mean(double wolf_rate, bool expectation, int runs) {
  cmp::Model m = exemplar("wolf-sheep-grass");
  cmp::set_relationship_rate(m, edge_between(m, "Canis lupus", "Ovis aries"), wolf_rate, kT0);
  SimConfig cfg;
  cfg.runs = runs;
  cfg.steps = 24;
  cfg.seed = 11;
  cfg.expectation_mode = expectation;
  const auto spec = compile(m);
  return aggregate(spec, run_batch(spec, cfg), "Ovis aries").mean;
}

TEST(Compile, CountsAndOrder) {
  const auto spec = compile(exemplar("kudzu"));
  EXPECT_EQ(spec.vars.size(), 4u);
  EXPECT_EQ(spec.couplings.size(), 4u);
  EXPECT_EQ(spec.count(cmp::RelationKind::kConsumes), 4u);
  EXPECT_EQ(spec.count(cmp::RelationKind::kProduces), 0u);
  for (std::size_t i = 1; i < spec.vars.size(); ++i) EXPECT_LT(spec.vars[i - 1].id, spec.vars[i].id);
  ASSERT_TRUE(spec.index_of("kudzu bug"));
  EXPECT_EQ(spec.index_of(spec.vars[2].id), 2u);
  EXPECT_FALSE(spec.index_of("dodo"));
}

TEST(Compile, RejectsInvalidModels) {
  cmp::Model m = exemplar("wolf-sheep-grass");
  m.relationships[0].target = "c-gone";
  try {
    compile(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kValidation);
    EXPECT_TRUE(e.detail().contains("violations"));
  }
}

TEST(Config, Bounds) {
  SimConfig c;
  c.check();
  c.runs = 0;
  EXPECT_THROW(c.check(), Error);
  c = {};
  c.steps = -1;
  EXPECT_THROW(c.check(), Error);
  c = {};
  c.starvation_severity = 1.5;
  EXPECT_THROW(c.check(), Error);
  c = {};
  c.steps = 5;
  c.seed = 99;
  c.expectation_mode = true;
  const auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(back.steps, 5);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_TRUE(back.expectation_mode);
  EXPECT_EQ(config_from_json(nlohmann::json::object()).runs, 10);
}

TEST(Run, ZeroStepsYieldsInitialState) {
  const auto spec = compile(exemplar("wolf-sheep-grass"));
  SimConfig cfg;
  cfg.steps = 0;
  const auto r = run(spec, cfg, 0);
  ASSERT_EQ(r.values.size(), 3u);
  for (std::size_t v = 0; v < spec.vars.size(); ++v) {
    ASSERT_EQ(r.values[v].size(), 1u);
    EXPECT_EQ(r.values[v][0], spec.vars[v].initial);
  }
}

TEST(Run, DeterministicPerSeedAndRunIndex) {
  const auto spec = compile(exemplar("kudzu"));
  SimConfig cfg;
  cfg.seed = 1234;
  cfg.steps = 36;
  EXPECT_EQ(run(spec, cfg, 3), run(spec, cfg, 3));
  EXPECT_NE(run(spec, cfg, 3).values, run(spec, cfg, 4).values);
  SimConfig other = cfg;
  other.seed = 1235;
  EXPECT_NE(run(spec, cfg, 3).values, run(spec, other, 3).values);
}

TEST(Run, BatchIndependentOfThreadCount) {
  const auto spec = compile(exemplar("wolf-sheep-grass"));
  SimConfig cfg;
  cfg.runs = 16;
  cfg.seed = 5;
  cfg.threads = 1;
  const auto serial = run_batch(spec, cfg);
  cfg.threads = 7;
  const auto parallel = run_batch(spec, cfg);
  EXPECT_EQ(serial, parallel);
  for (int i = 0; i < cfg.runs; ++i) {
    EXPECT_EQ(serial[static_cast<std::size_t>(i)].run_index, i);
    EXPECT_EQ(serial[static_cast<std::size_t>(i)], run(spec, cfg, i));
  }
}

TEST(Run, StatesStayFiniteAndNonNegative) {
  for (const auto& m : cmp::load_exemplars()) {
    const auto spec = compile(m);
    SimConfig cfg;
    cfg.runs = 4;
    cfg.steps = 120;
    for (const auto& r : run_batch(spec, cfg)) {
      for (const auto& series : r.values) {
        for (double v : series) {
          ASSERT_TRUE(std::isfinite(v));
          ASSERT_GE(v, 0);
          ASSERT_LE(v, 1e9);
        }
      }
    }
  }
}

TEST(Expectation, NullDynamicsAreConstant) {
  IdSource ids;
  cmp::Model m = cmp::new_model("still", "u", ids, kT0);
  cmp::add_component(m, "rock", cmp::ComponentKind::kAbiotic, {{ParameterName::kAmount, 50}}, ids, kT0);
  SimConfig cfg;
  cfg.expectation_mode = true;
  cfg.steps = 30;
  const auto r = run(compile(m), cfg, 0);
  for (double v : r.values[0]) EXPECT_EQ(v, 50);
}

TEST(Expectation, OffspringCountRaisesPopulation) {
  auto mean_with = [](double offspring) {
    IdSource ids;
    cmp::Model m = cmp::new_model("solo", "u", ids, kT0);
    const std::string id =
        cmp::add_component(m, "hare", cmp::ComponentKind::kBiotic, {}, ids, kT0).id;
    cmp::set_parameter(m, id, ParameterName::kOffspringCount, offspring, kT0);
    SimConfig cfg;
    cfg.expectation_mode = true;
    cfg.runs = 1;
    cfg.steps = 36;
    const auto spec = compile(m);
    return aggregate(spec, run_batch(spec, cfg), "hare").mean;
  };
  EXPECT_LT(mean_with(1), mean_with(4));
}

TEST(Expectation, ExpectationModeIgnoresSeed) {
  const auto spec = compile(exemplar("wolf-sheep-grass"));
  SimConfig a;
  a.expectation_mode = true;
  a.seed = 1;
  SimConfig b = a;
  b.seed = 2;
  EXPECT_EQ(run(spec, a, 0).values, run(spec, b, 5).values);
}

TEST(Direction, WolfConsumptionLowersSheep) {
  EXPECT_LT(sheep_mean(0.4, true, 1), sheep_mean(0.1, true, 1));
  EXPECT_LT(sheep_mean(0.4, false, 20), sheep_mean(0.1, false, 20));
}

TEST(Aggregate, HistogramOfSmallSample) {
  const auto agg = aggregate_summaries("c", "x", {1, 1, 2}, 2);
  ASSERT_EQ(agg.bins.size(), 2u);
  EXPECT_EQ(agg.bins[0].lo, 1);
  EXPECT_EQ(agg.bins[0].hi, 1.5);
  EXPECT_EQ(agg.bins[0].count, 2);
  EXPECT_EQ(agg.bins[1].count, 1);
  EXPECT_EQ(agg.bins[1].hi, 2);
  EXPECT_DOUBLE_EQ(agg.peak, 1.25);
  EXPECT_DOUBLE_EQ(agg.mean, 4.0 / 3.0);

  const auto flat = aggregate_summaries("c", "x", {3, 3, 3}, 5);
  ASSERT_EQ(flat.bins.size(), 1u);
  EXPECT_EQ(flat.bins[0].count, 3);
  EXPECT_EQ(flat.peak, 3);
  EXPECT_THROW(aggregate_summaries("c", "x", {1}, 0), Error);
}

TEST(Aggregate, UnknownTarget) {
  const auto spec = compile(exemplar("kudzu"));
  SimConfig cfg;
  cfg.runs = 2;
  const auto batch = run_batch(spec, cfg);
  try {
    aggregate(spec, batch, "dodo");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotFound);
  }
  const auto agg = aggregate(spec, batch, "kudzu");
  EXPECT_EQ(agg.summaries.size(), 2u);
  EXPECT_EQ(aggregate_json(agg)["target"], "kudzu");
}

TEST(PeakShift, IdenticalAndShifted) {
  std::vector<double> base;
  for (int i = 0; i < 30; ++i) base.push_back(100 + (i * 37) % 17);
  std::vector<double> plus;
  for (double v : base) plus.push_back(v + 10);
  const auto a = aggregate_summaries("c", "sheep", base, 20);
  const auto same = peak_shift(a, a);
  EXPECT_EQ(same.delta_mean, 0);
  EXPECT_FALSE(same.shifted_right);
  EXPECT_EQ(same.ci_low, 0);
  EXPECT_EQ(same.ci_high, 0);

  const auto b = aggregate_summaries("c", "sheep", plus, 20);
  const auto up = peak_shift(a, b);
  EXPECT_TRUE(up.shifted_right);
  EXPECT_DOUBLE_EQ(up.delta_mean, 10);
  EXPECT_NEAR(up.delta_peak, 10, 1e-9);
  EXPECT_FALSE(peak_shift(b, a).shifted_right);

  const auto c = aggregate_summaries("c", "wolf", plus, 20);
  EXPECT_THROW(peak_shift(a, c), Error);
}

TEST(Csv, Layout) {
  const auto spec = compile(exemplar("wolf-sheep-grass"));
  SimConfig cfg;
  cfg.runs = 2;
  cfg.steps = 3;
  const auto batch = run_batch(spec, cfg);
  const std::string csv = batch_csv(spec, batch);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "run,step,component,value");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 2u * 4u * 3u);

  const std::string agg = aggregate_csv(aggregate(spec, batch, "Grass"));
  EXPECT_EQ(agg.substr(0, agg.find('\n')), "run,summary");
}

}  // namespace
}  // namespace vera::sim
