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

#include "vera/model_json.h"
#include "vera/sim.h"

namespace {

vera::sim::SimSpec spec_of(const char* name) {
  for (const auto& m : vera::cmp::load_exemplars()) {
    if (m.name == name) return vera::sim::compile(m);
  }
  return {};
}

void BM_RunBatch(benchmark::State& state) {
  const auto spec = spec_of("wolf-sheep-grass");
  vera::sim::SimConfig cfg;
  cfg.runs = static_cast<int>(state.range(0));
  cfg.steps = 120;
  cfg.threads = static_cast<unsigned>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(vera::sim::run_batch(spec, cfg));
  state.SetItemsProcessed(state.iterations() * cfg.runs * cfg.steps);
}
BENCHMARK(BM_RunBatch)->Args({10, 1})->Args({100, 1})->Args({100, 0})->Unit(benchmark::kMillisecond);

void BM_Aggregate(benchmark::State& state) {
  const auto spec = spec_of("kudzu");
  vera::sim::SimConfig cfg;
  cfg.runs = 200;
  const auto batch = vera::sim::run_batch(spec, cfg);
  for (auto _ : state) benchmark::DoNotOptimize(vera::sim::aggregate(spec, batch, "kudzu"));
}
BENCHMARK(BM_Aggregate);

}  // namespace
