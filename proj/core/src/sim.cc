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

#include "vera/sim.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "vera/error.h"
#include "vera/rng.h"

namespace vera::sim {
namespace {

using cmp::ComponentKind;
using cmp::ParameterName;
using cmp::RelationKind;

constexpr double kCeiling = 1e9;

enum class Stage : std::uint64_t {
  kGrowth = 1,
  kReproduction = 4,
  kMortality = 5,
  kStarvation = 6,
  kDestroys = 7,
};

class Draws {
 public:
  Draws(const SimConfig& config, int run_index, int step)
      : config_(config), run_index_(run_index), step_(step) {}

  double poisson(double mean, std::uint64_t component, Stage stage) const {
    if (!(mean > 0)) return 0;
    // Anything above the ceiling is clamped afterwards anyway.
    mean = std::min(mean, 4 * kCeiling);
    if (config_.expectation_mode) return std::round(mean);
    CounterRng rng = make(component, stage);
    std::poisson_distribution<long long> dist(mean);
    return static_cast<double>(dist(rng));
  }

  double binomial(double n, double p, std::uint64_t component, Stage stage) const {
    p = std::clamp(p, 0.0, 1.0);
    if (n <= 0 || p <= 0) return 0;
    if (p >= 1) return n;
    if (config_.expectation_mode) return std::round(n * p);
    CounterRng rng = make(component, stage);
    std::binomial_distribution<long long> dist(static_cast<long long>(n), p);
    return static_cast<double>(dist(rng));
  }

 private:
  CounterRng make(std::uint64_t component, Stage stage) const {
    return CounterRng({config_.seed, static_cast<std::uint64_t>(run_index_),
                       static_cast<std::uint64_t>(step_), component,
                       static_cast<std::uint64_t>(stage)});
  }

  const SimConfig& config_;
  int run_index_;
  int step_;
};

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

std::string fmt_number(double v) {
  if (std::floor(v) == v && std::fabs(v) < 1e15) {
    return std::to_string(static_cast<long long>(v));
  }
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void SimConfig::check() const {
  if (steps < 0) fail(ErrorCode::kValidation, "steps must be >= 0");
  if (runs < 1) fail(ErrorCode::kValidation, "runs must be >= 1");
  if (!(arena_scale > 0) || !std::isfinite(arena_scale)) {
    fail(ErrorCode::kValidation, "arena_scale must be positive");
  }
  if (!(starvation_severity >= 0 && starvation_severity <= 1)) {
    fail(ErrorCode::kValidation, "starvation_severity must lie in [0, 1]");
  }
  if (histogram_bins < 1) fail(ErrorCode::kValidation, "histogram_bins must be >= 1");
}

nlohmann::json config_to_json(const SimConfig& c) {
  return {{"steps", c.steps},
          {"runs", c.runs},
          {"seed", c.seed},
          {"arena_scale", c.arena_scale},
          {"starvation_severity", c.starvation_severity},
          {"histogram_bins", c.histogram_bins},
          {"expectation_mode", c.expectation_mode}};
}

SimConfig config_from_json(const nlohmann::json& doc) {
  SimConfig c;
  if (!doc.is_object()) return c;
  try {
    c.steps = doc.value("steps", c.steps);
    c.runs = doc.value("runs", c.runs);
    c.seed = doc.value("seed", c.seed);
    c.arena_scale = doc.value("arena_scale", c.arena_scale);
    c.starvation_severity = doc.value("starvation_severity", c.starvation_severity);
    c.histogram_bins = doc.value("histogram_bins", c.histogram_bins);
    c.expectation_mode = doc.value("expectation_mode", c.expectation_mode);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kValidation, std::string("simulation config: ") + e.what());
  }
  return c;
}

std::optional<std::size_t> SimSpec::index_of(std::string_view id_or_name) const {
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (vars[i].id == id_or_name) return i;
  }
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (vars[i].name == id_or_name) return i;
  }
  return std::nullopt;
}

std::size_t SimSpec::count(RelationKind kind) const {
  return static_cast<std::size_t>(std::count_if(
      couplings.begin(), couplings.end(), [&](const Coupling& c) { return c.kind == kind; }));
}

SimSpec compile(const cmp::Model& model) {
  auto violations = cmp::validate(model);
  if (!violations.empty()) {
    nlohmann::json detail = nlohmann::json::array();
    for (const auto& v : violations) {
      detail.push_back({{"code", v.code}, {"subject", v.subject}, {"message", v.message}});
    }
    fail(ErrorCode::kValidation, "model does not compile: " + violations.front().message,
         {{"violations", std::move(detail)}});
  }

  SimSpec spec;
  spec.model_id = model.id;
  std::vector<const cmp::Component*> comps;
  for (const auto& c : model.components) comps.push_back(&c);
  std::sort(comps.begin(), comps.end(), [](auto* a, auto* b) { return a->id < b->id; });

  for (const auto* c : comps) {
    StateVar v;
    v.id = c->id;
    v.name = c->name;
    v.kind = c->kind;
    v.key = fnv1a64(c->id);
    if (c->kind == ComponentKind::kBiotic) {
      v.initial = c->param(ParameterName::kStartingPopulation);
      v.lifespan = c->param(ParameterName::kLifespan);
      v.offspring_count = c->param(ParameterName::kOffspringCount);
      v.reproductive_maturity = c->param(ParameterName::kReproductiveMaturity);
      v.reproductive_interval =
          static_cast<long long>(c->param(ParameterName::kReproductiveInterval));
      v.minimum_population = c->param(ParameterName::kMinimumPopulation);
      v.photosynthesis_rate = c->param(ParameterName::kPhotosynthesisRate);
      v.assimilation_efficiency = c->param(ParameterName::kAssimilationEfficiency);
      v.producer = v.photosynthesis_rate > 0;
    } else {
      v.initial = c->param(ParameterName::kAmount);
      v.minimum_amount = c->param(ParameterName::kMinimumAmount);
      v.growth_rate = c->param(ParameterName::kGrowthRate);
    }
    spec.vars.push_back(std::move(v));
  }

  std::vector<const cmp::Relationship*> rels;
  for (const auto& r : model.relationships) rels.push_back(&r);
  std::sort(rels.begin(), rels.end(), [](auto* a, auto* b) { return a->id < b->id; });
  for (const auto* r : rels) {
    Coupling cp;
    cp.id = r->id;
    cp.source = *spec.index_of(r->source);
    cp.target = *spec.index_of(r->target);
    cp.kind = r->kind;
    cp.rate = r->rate;
    cp.key = fnv1a64(r->id);
    if (cp.kind == RelationKind::kConsumes) spec.vars[cp.source].consumer = true;
    spec.couplings.push_back(std::move(cp));
  }
  return spec;
}

RunSeries run(const SimSpec& spec, const SimConfig& config, int run_index) {
  config.check();
  const std::size_t n = spec.vars.size();
  RunSeries out;
  out.run_index = run_index;
  out.seed = config.seed;
  out.values.assign(n, std::vector<double>(static_cast<std::size_t>(config.steps) + 1, 0.0));

  std::vector<double> state(n);
  for (std::size_t i = 0; i < n; ++i) state[i] = spec.vars[i].initial;

  auto clamp_state = [&](double& v) {
    if (v > kCeiling) {
      v = kCeiling;
      out.capped = true;
    }
    if (v < 0) v = 0;
  };
  for (auto& v : state) clamp_state(v);
  for (std::size_t i = 0; i < n; ++i) out.values[i][0] = state[i];

  std::vector<double> intake(n);
  std::vector<double> satiation(n);
  for (int t = 1; t <= config.steps; ++t) {
    const Draws draw(config, run_index, t);

    // (1) producer growth
    for (std::size_t i = 0; i < n; ++i) {
      const StateVar& v = spec.vars[i];
      if (v.kind != ComponentKind::kBiotic || !v.producer) continue;
      const double room = std::max(0.0, 1.0 - state[i] / config.arena_scale);
      state[i] += draw.poisson(v.photosynthesis_rate * state[i] * room, v.key, Stage::kGrowth);
      clamp_state(state[i]);
    }

    // (2) consumption along each consumes edge
    std::fill(intake.begin(), intake.end(), 0.0);
    for (const Coupling& c : spec.couplings) {
      if (c.kind != RelationKind::kConsumes) continue;
      const double attempted = std::round(c.rate * state[c.source]);
      const double consumed = std::min(state[c.target], attempted);
      state[c.target] -= consumed;
      intake[c.source] += consumed;
    }

    // (3) satiation
    for (std::size_t i = 0; i < n; ++i) {
      const StateVar& v = spec.vars[i];
      satiation[i] = v.consumer ? std::min(1.0, v.assimilation_efficiency * intake[i] /
                                                    std::max(1.0, state[i]))
                                : 1.0;
    }

    for (std::size_t i = 0; i < n; ++i) {
      const StateVar& v = spec.vars[i];
      if (v.kind != ComponentKind::kBiotic) continue;
      // (4) reproduction
      if (v.reproductive_interval > 0 && t % v.reproductive_interval == 0) {
        const double mature_share =
            std::clamp(1.0 - v.reproductive_maturity / v.lifespan, 0.0, 1.0);
        const double mature = std::floor(state[i] * mature_share);
        const double fertility = v.consumer ? satiation[i] : 1.0;
        state[i] += draw.poisson(mature * v.offspring_count * fertility, v.key,
                                 Stage::kReproduction);
        clamp_state(state[i]);
      }
      // (5) natural mortality
      state[i] -= draw.binomial(state[i], 1.0 / v.lifespan, v.key, Stage::kMortality);
      // (6) starvation
      if (v.consumer) {
        state[i] -= draw.binomial(state[i], (1.0 - satiation[i]) * config.starvation_severity,
                                  v.key, Stage::kStarvation);
      }
      clamp_state(state[i]);
    }

    // (7) destroys: abiotic source harms biotic target
    for (const Coupling& c : spec.couplings) {
      if (c.kind != RelationKind::kDestroys) continue;
      const double p = std::min(1.0, c.rate * state[c.source] / config.arena_scale);
      state[c.target] -= draw.binomial(state[c.target], p, c.key, Stage::kDestroys);
      clamp_state(state[c.target]);
    }

    // (8) produces: biotic source adds to abiotic target
    for (const Coupling& c : spec.couplings) {
      if (c.kind != RelationKind::kProduces) continue;
      state[c.target] += std::round(c.rate * state[c.source]);
      clamp_state(state[c.target]);
    }

    for (std::size_t i = 0; i < n; ++i) {
      const StateVar& v = spec.vars[i];
      if (v.kind == ComponentKind::kAbiotic) {
        // (9) abiotic baseline
        state[i] = std::max(v.minimum_amount, std::round(state[i] * (1.0 + v.growth_rate)));
      } else {
        // (10) biotic floor
        state[i] = std::max(state[i], v.minimum_population);
      }
      clamp_state(state[i]);
      out.values[i][static_cast<std::size_t>(t)] = state[i];
    }
  }
  return out;
}

std::vector<RunSeries> run_batch(const SimSpec& spec, const SimConfig& config) {
  config.check();
  std::vector<RunSeries> out(static_cast<std::size_t>(config.runs));
  unsigned workers = config.threads != 0 ? config.threads : std::thread::hardware_concurrency();
  workers = std::clamp(workers, 1u, static_cast<unsigned>(config.runs));
  if (workers == 1) {
    for (int r = 0; r < config.runs; ++r) out[static_cast<std::size_t>(r)] = run(spec, config, r);
    return out;
  }
  std::atomic<int> next{0};
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int r = next++; r < config.runs; r = next++) {
          out[static_cast<std::size_t>(r)] = run(spec, config, r);
        }
      });
    }
  }
  return out;
}

BatchAggregate aggregate_summaries(std::string target_id, std::string target_name,
                                   std::vector<double> summaries, int histogram_bins) {
  if (histogram_bins < 1) fail(ErrorCode::kValidation, "histogram_bins must be >= 1");
  BatchAggregate agg;
  agg.target_id = std::move(target_id);
  agg.target_name = std::move(target_name);
  agg.summaries = std::move(summaries);
  if (agg.summaries.empty()) return agg;
  agg.mean = mean_of(agg.summaries);

  const auto [lo_it, hi_it] = std::minmax_element(agg.summaries.begin(), agg.summaries.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (lo == hi) {
    agg.bins.push_back({lo, hi, static_cast<int>(agg.summaries.size())});
    agg.peak = lo;
    return agg;
  }
  const double width = (hi - lo) / histogram_bins;
  for (int b = 0; b < histogram_bins; ++b) {
    const double b_lo = lo + width * b;
    const double b_hi = b + 1 == histogram_bins ? hi : lo + width * (b + 1);
    agg.bins.push_back({b_lo, b_hi, 0});
  }
  for (double s : agg.summaries) {
    auto b = static_cast<std::size_t>(std::floor((s - lo) / width));
    b = std::min(b, agg.bins.size() - 1);
    ++agg.bins[b].count;
  }
  // Lowest bin wins ties.
  std::size_t modal = 0;
  for (std::size_t b = 1; b < agg.bins.size(); ++b) {
    if (agg.bins[b].count > agg.bins[modal].count) modal = b;
  }
  agg.peak = 0.5 * (agg.bins[modal].lo + agg.bins[modal].hi);
  return agg;
}

BatchAggregate aggregate(const SimSpec& spec, const std::vector<RunSeries>& batch,
                         std::string_view target, int histogram_bins) {
  auto idx = spec.index_of(target);
  if (!idx) fail(ErrorCode::kNotFound, "unknown target component '" + std::string(target) + "'");
  std::vector<double> summaries;
  summaries.reserve(batch.size());
  for (const auto& series : batch) summaries.push_back(mean_of(series.values.at(*idx)));
  return aggregate_summaries(spec.vars[*idx].id, spec.vars[*idx].name, std::move(summaries),
                             histogram_bins);
}

PeakShiftReport peak_shift(const BatchAggregate& baseline, const BatchAggregate& treatment,
                           int resamples, std::uint64_t seed) {
  if (baseline.target_name != treatment.target_name) {
    fail(ErrorCode::kValidation, "peak_shift targets differ: '" + baseline.target_name +
                                     "' vs '" + treatment.target_name + "'");
  }
  if (baseline.summaries.empty() || treatment.summaries.empty()) {
    fail(ErrorCode::kNoData, "peak_shift needs at least one run on each side");
  }
  PeakShiftReport rep;
  rep.delta_mean = treatment.mean - baseline.mean;
  rep.delta_peak = treatment.peak - baseline.peak;

  const std::size_t nb = baseline.summaries.size();
  const std::size_t nt = treatment.summaries.size();
  const bool paired = nb == nt;
  std::vector<double> deltas;
  deltas.reserve(static_cast<std::size_t>(std::max(resamples, 1)));
  CounterRng rng({seed, 0x70656b73ULL});
  for (int i = 0; i < std::max(resamples, 1); ++i) {
    double sb = 0, st = 0;
    if (paired) {
      for (std::size_t k = 0; k < nb; ++k) {
        const std::size_t j = static_cast<std::size_t>(rng() % nb);
        sb += baseline.summaries[j];
        st += treatment.summaries[j];
      }
    } else {
      for (std::size_t k = 0; k < nb; ++k) sb += baseline.summaries[rng() % nb];
      for (std::size_t k = 0; k < nt; ++k) st += treatment.summaries[rng() % nt];
    }
    deltas.push_back(st / static_cast<double>(nt) - sb / static_cast<double>(nb));
  }
  std::sort(deltas.begin(), deltas.end());
  const auto last = deltas.size() - 1;
  rep.ci_low = deltas[static_cast<std::size_t>(std::floor(0.025 * static_cast<double>(last)))];
  rep.ci_high = deltas[static_cast<std::size_t>(std::ceil(0.975 * static_cast<double>(last)))];
  rep.shifted_right = rep.delta_mean > 0 && rep.ci_low > 0;
  return rep;
}

std::string batch_csv(const SimSpec& spec, const std::vector<RunSeries>& batch) {
  std::string out = "run,step,component,value\n";
  for (const auto& series : batch) {
    const std::size_t steps = series.values.empty() ? 0 : series.values.front().size();
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t i = 0; i < spec.vars.size(); ++i) {
        out += std::to_string(series.run_index) + ',' + std::to_string(t) + ',' +
               spec.vars[i].name + ',' + fmt_number(series.values[i][t]) + '\n';
      }
    }
  }
  return out;
}

std::string aggregate_csv(const BatchAggregate& agg) {
  std::string out = "run,summary\n";
  for (std::size_t r = 0; r < agg.summaries.size(); ++r) {
    out += std::to_string(r) + ',' + fmt_number(agg.summaries[r]) + '\n';
  }
  return out;
}

nlohmann::json aggregate_json(const BatchAggregate& agg) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : agg.bins) bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}});
  return {{"target", agg.target_name}, {"bins", std::move(bins)}, {"peak", agg.peak},
          {"mean", agg.mean}};
}

}  // namespace vera::sim
