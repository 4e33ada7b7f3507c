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

#include <benchmark/benchmark.h>

#include "vera/analytics.h"
#include "vera/rng.h"

namespace {

std::vector<vera::events::ActionEvent> synthetic_log(std::size_t n) {
  vera::CounterRng rng(1);
  const char* components[] = {"Canis lupus", "Ovis aries", "Grass", "Consumes"};
  const char* parameters[] = {"lifespan", "body mass", "offspring count", "starting population"};
  const auto t0 = vera::parse_rfc3339("2022-01-01T00:00:00Z");
  std::vector<vera::events::ActionEvent> out;
  for (std::size_t i = 0; i < n; ++i) {
    vera::events::ActionEvent e;
    e.seq = i + 1;
    e.ts = t0 + std::chrono::seconds(i * 90);
    e.experiment = "1";
    e.group = rng() % 2 ? "1" : "2";
    e.participant = "p" + std::to_string(rng() % 40);
    e.model = "m-" + e.participant;
    e.action = vera::events::kAllActions[rng() % 6];
    if (e.action == vera::events::ActionKind::kP) {
      e.payload = {{"component", components[rng() % 4]}, {"parameter", parameters[rng() % 4]}};
    } else if (e.action == vera::events::ActionKind::kC || e.action == vera::events::ActionKind::kR) {
      e.payload = {{"edit", "add_component"}};
    } else if (e.action == vera::events::ActionKind::kE) {
      e.payload = {{"species", "Canis lupus"}};
    }
    out.push_back(std::move(e));
  }
  return out;
}

void BM_AnalyticsReport(benchmark::State& state) {
  vera::analytics::ReportInput in;
  in.groups = {"1", "2"};
  in.events = synthetic_log(static_cast<std::size_t>(state.range(0)));
  in.phases = vera::analytics::infer_phases(in.events, std::chrono::hours(24));
  for (auto _ : state) benchmark::DoNotOptimize(vera::analytics::analytics_report(in));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AnalyticsReport)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_Sessionize(benchmark::State& state) {
  const auto log = synthetic_log(10000);
  for (auto _ : state) benchmark::DoNotOptimize(vera::events::sessionize(log));
}
BENCHMARK(BM_Sessionize)->Unit(benchmark::kMillisecond);

}  // namespace
