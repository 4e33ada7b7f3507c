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

#include <chrono>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vera/model.h"
#include "vera/time.h"

// Species trait lookup with pluggable providers and a TTL cache.
namespace vera::traits {

struct TraitRecord {
  std::string canonical_name;
  cmp::ParamMap params;       // biotic parameters only
  std::optional<std::string> remote_url;  // unset for the local dataset
  Timestamp retrieved_at{};

  bool operator==(const TraitRecord&) const = default;
};

nlohmann::json record_to_json(const TraitRecord& record);
// Throws vera::Error(kValidation) for non-biotic or out-of-range params.
TraitRecord record_from_json(const nlohmann::json& doc);

class TraitProvider {
 public:
  virtual ~TraitProvider() = default;
  // nullopt when the species is unknown. Remote providers throw
  // vera::Error(kIo) when the timeout elapses.
  virtual std::optional<TraitRecord> fetch(std::string_view name,
                                           std::chrono::milliseconds timeout) = 0;
};

// Serves a JSON array of trait records; never touches the network.
class LocalTraitProvider final : public TraitProvider {
 public:
  explicit LocalTraitProvider(std::vector<TraitRecord> records);
  // Bundled dataset.
  static std::shared_ptr<LocalTraitProvider> bundled();
  static std::shared_ptr<LocalTraitProvider> from_file(const std::filesystem::path& path);

  std::optional<TraitRecord> fetch(std::string_view name,
                                   std::chrono::milliseconds timeout) override;
  const std::vector<TraitRecord>& records() const { return records_; }

 private:
  std::vector<TraitRecord> records_;
};

// GET {base}/traits?name={urlencoded} -> one record, or 404.
class RemoteTraitProvider final : public TraitProvider {
 public:
  explicit RemoteTraitProvider(std::string base_url) : base_url_(std::move(base_url)) {}
  std::optional<TraitRecord> fetch(std::string_view name,
                                   std::chrono::milliseconds timeout) override;

 private:
  std::string base_url_;
};

struct ProviderConfig {
  std::optional<std::filesystem::path> fixture;  // local provider; bundled when unset
  std::optional<std::string> remote_base_url;    // takes precedence when set
  Seconds ttl = std::chrono::hours(24);
  std::chrono::milliseconds timeout{5000};
};

std::shared_ptr<TraitProvider> make_provider(const ProviderConfig& config);

// Case-insensitive exact-name cache. Concurrent misses for the same name
// share one provider call.
class TraitCache {
 public:
  TraitCache(std::shared_ptr<TraitProvider> provider, std::shared_ptr<const Clock> clock,
             Seconds ttl = std::chrono::hours(24),
             std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));

  // Throws vera::Error(kNotFound) for unknown species, kValidation for an
  // empty name, kIo on provider timeout.
  TraitRecord lookup(std::string_view name);
  std::size_t provider_calls() const;

 private:
  struct Entry {
    TraitRecord record;
    Timestamp fetched_at;
  };

  std::shared_ptr<TraitProvider> provider_;
  std::shared_ptr<const Clock> clock_;
  Seconds ttl_;
  std::chrono::milliseconds timeout_;

  mutable std::mutex mu_;
  std::map<std::string, Entry, std::less<>> entries_;
  std::map<std::string, std::shared_future<std::optional<TraitRecord>>, std::less<>> inflight_;
  std::size_t calls_ = 0;
};

// Overwrites only the parameters present in the record and returns what
// changed. Throws kValidation for abiotic targets, kNotFound for unknown ids.
std::vector<cmp::ParameterChange> apply_traits(cmp::Model& model, std::string_view component_id,
                                               const TraitRecord& record, Timestamp now);

std::string lowercase(std::string_view text);

}  // namespace vera::traits
