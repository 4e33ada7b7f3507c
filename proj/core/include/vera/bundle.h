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

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vera/analytics.h"
#include "vera/events.h"
#include "vera/model.h"

// Export bundles: the directory (or zip) a researcher downloads.
//
//   experiment.json   config + assignments
//   models.json       every participant model of the experiment
//   events.jsonl      the experiment's action log
//   simulations/      per-batch series and aggregate files
//   analytics.json    analytics_report over the above
namespace vera::bundle {

struct ExportBundle {
  nlohmann::json experiment;  // null for a bare event log
  std::vector<cmp::Model> models;
  std::vector<events::ActionEvent> events;
  // Paths relative to simulations/.
  std::map<std::string, std::string> simulations;
  nlohmann::json analytics;

  // Complete file layout, path -> bytes.
  std::map<std::string, std::string> files() const;
};

// Groups and phases come from `experiment` when present; otherwise groups
// are the distinct group ids in the log and phases are inferred from
// multi-day gaps. Model groups come from each model's first event.
analytics::ReportInput report_input(const nlohmann::json& experiment,
                                    const std::vector<cmp::Model>& models,
                                    const std::vector<events::ActionEvent>& events);

nlohmann::json compute_analytics(const ExportBundle& bundle);

// Serialized form used for analytics.json and the HTTP route.
std::string dump_analytics(const nlohmann::json& analytics);

// Throws vera::Error(kIo) on filesystem failures.
void write_bundle(const ExportBundle& bundle, const std::filesystem::path& dir);
// Missing files read as empty; analytics.json is loaded verbatim when present.
ExportBundle read_bundle(const std::filesystem::path& dir);
// Same, over a path -> bytes layout (e.g. an unzipped archive).
ExportBundle bundle_from_files(const std::map<std::string, std::string>& files);

// Uncompressed ("stored") zip archive with fixed timestamps, so identical
// inputs give identical bytes.
std::string zip_archive(const std::map<std::string, std::string>& files);
// Reads archives written by zip_archive.
std::map<std::string, std::string> unzip_archive(std::string_view bytes);

}  // namespace vera::bundle
