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

#include "vera/events.h"

namespace {

std::vector<vera::events::ActionEvent> log_of(std::size_t n) {
  const auto t0 = vera::parse_rfc3339("2022-01-01T00:00:00Z");
  std::vector<vera::events::ActionEvent> out;
  for (std::size_t i = 0; i < n; ++i) {
    vera::events::ActionEvent e;
    e.seq = i + 1;
    e.ts = t0 + std::chrono::seconds(i);
    e.experiment = "1";
    e.group = "1";
    e.participant = "p" + std::to_string(i % 20);
    e.model = "m-000001";
    e.action = vera::events::ActionKind::kP;
    e.payload = {{"component", "Ovis aries"}, {"parameter", "lifespan"}, {"old", 24}, {"new", 30}};
    out.push_back(std::move(e));
  }
  return out;
}

void BM_ExportJsonl(benchmark::State& state) {
  const auto log = log_of(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(vera::events::export_jsonl(log));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ExportJsonl)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_ImportJsonl(benchmark::State& state) {
  const std::string text = vera::events::export_jsonl(log_of(static_cast<std::size_t>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(vera::events::import_jsonl(text));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ImportJsonl)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_AppendInMemory(benchmark::State& state) {
  const auto log = log_of(1);
  for (auto _ : state) {
    vera::events::EventLog store;
    for (int i = 0; i < 1000; ++i) store.append(log[0]);
    benchmark::DoNotOptimize(store.size());
  }
}
BENCHMARK(BM_AppendInMemory)->Unit(benchmark::kMicrosecond);

}  // namespace
