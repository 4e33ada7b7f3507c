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

#include "vera/traits.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "vera/error.h"
#include "vera_embedded_data.h"

namespace vera::traits {
namespace {

using nlohmann::json;

std::vector<TraitRecord> records_from_text(std::string_view text, const std::string& origin) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_array()) {
    fail(ErrorCode::kValidation, "trait fixture " + origin + " is not a JSON array");
  }
  std::vector<TraitRecord> out;
  for (const auto& r : doc) out.push_back(record_from_json(r));
  return out;
}

}  // namespace

std::string lowercase(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

json record_to_json(const TraitRecord& r) {
  json params = json::object();
  for (const auto& [p, v] : r.params) params[std::string(cmp::key(p))] = v;
  json out = {{"canonical_name", r.canonical_name},
              {"params", std::move(params)},
              {"source", r.remote_url ? "remote" : "local"},
              {"retrieved_at", format_rfc3339(r.retrieved_at)}};
  if (r.remote_url) out["url"] = *r.remote_url;
  return out;
}

TraitRecord record_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("canonical_name") || !doc["canonical_name"].is_string()) {
    fail(ErrorCode::kValidation, "trait record needs a canonical_name");
  }
  TraitRecord r;
  r.canonical_name = doc["canonical_name"].get<std::string>();
  if (doc.contains("params")) {
    if (!doc["params"].is_object()) fail(ErrorCode::kValidation, "trait params must be an object");
    for (const auto& [k, v] : doc["params"].items()) {
      auto p = cmp::parse_parameter(k);
      if (!p || !cmp::accepts(cmp::ComponentKind::kBiotic, *p)) {
        fail(ErrorCode::kValidation, "trait record param '" + k + "' is not a biotic parameter");
      }
      if (!v.is_number()) fail(ErrorCode::kValidation, "trait param '" + k + "' must be numeric");
      if (auto why = cmp::check_value(*p, v.get<double>())) fail(ErrorCode::kValidation, *why);
      r.params[*p] = v.get<double>();
    }
  }
  if (doc.value("source", std::string("local")) == "remote") {
    r.remote_url = doc.value("url", std::string());
  }
  if (doc.contains("retrieved_at") && doc["retrieved_at"].is_string()) {
    r.retrieved_at = parse_rfc3339(doc["retrieved_at"].get<std::string>());
  }
  return r;
}

LocalTraitProvider::LocalTraitProvider(std::vector<TraitRecord> records)
    : records_(std::move(records)) {}

std::shared_ptr<LocalTraitProvider> LocalTraitProvider::bundled() {
  return std::make_shared<LocalTraitProvider>(
      records_from_text(vera::embedded::kTraitsJson, "(bundled)"));
}

std::shared_ptr<LocalTraitProvider> LocalTraitProvider::from_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot read trait fixture " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return std::make_shared<LocalTraitProvider>(records_from_text(buf.str(), path.string()));
}

std::optional<TraitRecord> LocalTraitProvider::fetch(std::string_view name,
                                                     std::chrono::milliseconds) {
  const std::string needle = lowercase(name);
  for (const auto& r : records_) {
    if (lowercase(r.canonical_name) == needle) return r;
  }
  return std::nullopt;
}

std::optional<TraitRecord> RemoteTraitProvider::fetch(std::string_view name,
                                                      std::chrono::milliseconds timeout) {
  httplib::Client client(base_url_);
  const auto secs = timeout.count() / 1000;
  const auto usecs = (timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Params params{{"name", std::string(name)}};
  auto res = client.Get("/traits", params, httplib::Headers{});
  if (!res) {
    fail(ErrorCode::kIo, "trait provider unavailable: " + httplib::to_string(res.error()));
  }
  if (res->status == 404) return std::nullopt;
  if (res->status != 200) {
    fail(ErrorCode::kIo, "trait provider returned HTTP " + std::to_string(res->status));
  }
  json doc = json::parse(res->body, nullptr, false);
  if (doc.is_discarded()) fail(ErrorCode::kIo, "trait provider returned malformed JSON");
  TraitRecord r = record_from_json(doc);
  r.remote_url = base_url_ + "/traits?name=" + httplib::detail::encode_query_param(std::string(name));
  return r;
}

std::shared_ptr<TraitProvider> make_provider(const ProviderConfig& config) {
  if (config.ttl.count() <= 0) fail(ErrorCode::kValidation, "trait cache TTL must be positive");
  if (config.remote_base_url) return std::make_shared<RemoteTraitProvider>(*config.remote_base_url);
  if (config.fixture) return LocalTraitProvider::from_file(*config.fixture);
  return LocalTraitProvider::bundled();
}

TraitCache::TraitCache(std::shared_ptr<TraitProvider> provider,
                       std::shared_ptr<const Clock> clock, Seconds ttl,
                       std::chrono::milliseconds timeout)
    : provider_(std::move(provider)), clock_(std::move(clock)), ttl_(ttl), timeout_(timeout) {
  if (ttl_.count() <= 0) fail(ErrorCode::kValidation, "trait cache TTL must be positive");
}

TraitRecord TraitCache::lookup(std::string_view name) {
  if (name.empty()) fail(ErrorCode::kValidation, "species name must not be empty");
  const std::string key = lowercase(name);

  std::shared_future<std::optional<TraitRecord>> pending;
  std::promise<std::optional<TraitRecord>> promise;
  bool leader = false;
  {
    std::lock_guard lock(mu_);
    const Timestamp now = clock_->now();
    if (auto it = entries_.find(key); it != entries_.end() && now - it->second.fetched_at < ttl_) {
      return it->second.record;
    }
    if (auto it = inflight_.find(key); it != inflight_.end()) {
      pending = it->second;
    } else {
      pending = promise.get_future().share();
      inflight_.emplace(key, pending);
      ++calls_;
      leader = true;
    }
  }

  if (leader) {
    try {
      auto rec = provider_->fetch(name, timeout_);
      {
        std::lock_guard lock(mu_);
        if (rec) {
          rec->retrieved_at = clock_->now();
          entries_[key] = {*rec, rec->retrieved_at};
        }
        inflight_.erase(key);
      }
      promise.set_value(rec);
    } catch (...) {
      {
        std::lock_guard lock(mu_);
        inflight_.erase(key);
      }
      promise.set_exception(std::current_exception());
    }
  }

  auto rec = pending.get();
  if (!rec) fail(ErrorCode::kNotFound, "no trait record for '" + std::string(name) + "'");
  return *rec;
}

std::size_t TraitCache::provider_calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::vector<cmp::ParameterChange> apply_traits(cmp::Model& model, std::string_view component_id,
                                               const TraitRecord& record, Timestamp now) {
  const cmp::Component* c = model.find_component(component_id);
  if (c == nullptr) {
    fail(ErrorCode::kNotFound, "unknown component '" + std::string(component_id) + "'");
  }
  if (c->kind != cmp::ComponentKind::kBiotic) {
    fail(ErrorCode::kValidation, "traits apply to biotic components only");
  }
  for (const auto& [p, v] : record.params) {
    if (!cmp::accepts(cmp::ComponentKind::kBiotic, p)) {
      fail(ErrorCode::kValidation, "trait record carries a non-biotic parameter");
    }
    if (auto why = cmp::check_value(p, v)) fail(ErrorCode::kValidation, *why);
  }
  std::vector<cmp::ParameterChange> changes;
  for (const auto& [p, v] : record.params) {
    if (c->param(p) == v) continue;
    changes.push_back(cmp::set_parameter(model, component_id, p, v, now));
  }
  return changes;
}

}  // namespace vera::traits
