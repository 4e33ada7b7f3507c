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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vera/model.h"

namespace vera::cmp {

// Canonical document: components and relationships ordered by id, integral
// parameter values written as integers, timestamps in RFC 3339.
nlohmann::json model_to_json(const Model& model);

// Structural decoding only; invariants are left to validate(). Throws
// vera::Error(kValidation) on schema errors.
Model model_from_json(const nlohmann::json& doc);

// Pretty-printed canonical text with a trailing newline.
std::string dump_model(const Model& model);
std::string dump_models(const std::vector<Model>& models);

std::vector<Model> models_from_json(const nlohmann::json& doc);

// Bundled template models (kudzu, wolf-sheep-grass).
std::vector<Model> load_exemplars();
// Throws vera::Error(kIo) when the file is unreadable, kValidation when corrupt.
std::vector<Model> load_exemplars(const std::filesystem::path& path);

// Raw text of the bundled exemplar file.
std::string_view bundled_exemplar_text();

}  // namespace vera::cmp
