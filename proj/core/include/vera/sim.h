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

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vera/model.h"

// Native, seeded, discrete-time population engine. One step is one month.
namespace vera::sim {

struct SimConfig {
  int steps = 24;
  int runs = 10;
  std::uint64_t seed = 0;
  double arena_scale = 1000.0;
  double starvation_severity = 0.5;
  int histogram_bins = 20;
  // Replace every Poisson/Binomial draw by its rounded expectation.
  bool expectation_mode = false;
  // Worker threads for run_batch; 0 picks hardware concurrency.
  unsigned threads = 0;

  // Throws vera::Error(kValidation) when a bound is violated.
  void check() const;
};

nlohmann::json config_to_json(const SimConfig& config);
// Missing fields keep their defaults.
SimConfig config_from_json(const nlohmann::json& doc);

struct StateVar {
  std::string id;
  std::string name;
  cmp::ComponentKind kind = cmp::ComponentKind::kBiotic;
  std::uint64_t key = 0;  // hash of id, part of the RNG key
  double initial = 0;
  // biotic
  double lifespan = 24;
  double offspring_count = 2;
  double reproductive_maturity = 6;
  long long reproductive_interval = 6;
  double minimum_population = 0;
  double photosynthesis_rate = 0;
  double assimilation_efficiency = 1;
  // abiotic
  double minimum_amount = 0;
  double growth_rate = 0;

  bool producer = false;
  bool consumer = false;
};

struct Coupling {
  std::string id;
  std::size_t source = 0;
  std::size_t target = 0;
  cmp::RelationKind kind = cmp::RelationKind::kConsumes;
  double rate = 0;
  std::uint64_t key = 0;
};

// Executable form of a model: state variables in component-id order and
// couplings in relationship-id order.
struct SimSpec {
  std::string model_id;
  std::vector<StateVar> vars;
  std::vector<Coupling> couplings;

  std::optional<std::size_t> index_of(std::string_view id_or_name) const;
  std::size_t count(cmp::RelationKind kind) const;
};

// Throws vera::Error(kValidation) listing the model's violations.
SimSpec compile(const cmp::Model& model);

struct RunSeries {
  int run_index = 0;
  std::uint64_t seed = 0;
  // values[var][t] for t = 0..steps, indexed like SimSpec::vars.
  std::vector<std::vector<double>> values;
  // Set when some state hit the 1e9 ceiling.
  bool capped = false;

  bool operator==(const RunSeries&) const = default;
};

RunSeries run(const SimSpec& spec, const SimConfig& config, int run_index);
std::vector<RunSeries> run_batch(const SimSpec& spec, const SimConfig& config);

struct HistogramBin {
  double lo = 0;
  double hi = 0;
  int count = 0;
};

struct BatchAggregate {
  std::string target_id;
  std::string target_name;
  std::vector<double> summaries;  // time-averaged population, one per run
  std::vector<HistogramBin> bins;
  double peak = 0;
  double mean = 0;
};

// Throws vera::Error(kNotFound) for an unknown target (id or name).
BatchAggregate aggregate(const SimSpec& spec, const std::vector<RunSeries>& batch,
                         std::string_view target, int histogram_bins = 20);
// Aggregate of precomputed summaries; exposed for tests and re-analysis.
BatchAggregate aggregate_summaries(std::string target_id, std::string target_name,
                                   std::vector<double> summaries, int histogram_bins);

struct PeakShiftReport {
  double delta_mean = 0;
  double delta_peak = 0;
  bool shifted_right = false;
  double ci_low = 0;
  double ci_high = 0;
};

// Treatment minus baseline. When both aggregates have the same number of
// runs the bootstrap resamples run indices jointly (runs with equal index
// share their random stream); otherwise the two sides resample independently.
PeakShiftReport peak_shift(const BatchAggregate& baseline, const BatchAggregate& treatment,
                           int resamples = 1000, std::uint64_t seed = 0);

// run,step,component,value
std::string batch_csv(const SimSpec& spec, const std::vector<RunSeries>& batch);
// run,summary
std::string aggregate_csv(const BatchAggregate& agg);
// {target, bins:[{lo,hi,count}], peak, mean}
nlohmann::json aggregate_json(const BatchAggregate& agg);

}  // namespace vera::sim
