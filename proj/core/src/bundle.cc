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

#include "vera/bundle.h"

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>

#include <zlib.h>

#include "vera/error.h"
#include "vera/model_json.h"

namespace vera::bundle {
namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::error_code ec;
  std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + path.parent_path().string() + ": " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
}

void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get32(std::string_view in, std::size_t at) {
  if (at + 4 > in.size()) fail(ErrorCode::kValidation, "truncated zip archive");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(in[at + i]);
  return v;
}

std::uint16_t get16(std::string_view in, std::size_t at) {
  if (at + 2 > in.size()) fail(ErrorCode::kValidation, "truncated zip archive");
  return static_cast<std::uint16_t>(static_cast<unsigned char>(in[at]) |
                                    (static_cast<unsigned char>(in[at + 1]) << 8));
}

}  // namespace

std::map<std::string, std::string> ExportBundle::files() const {
  std::map<std::string, std::string> out;
  out["experiment.json"] = experiment.is_null() ? std::string("null\n") : experiment.dump(2) + "\n";
  out["models.json"] = cmp::dump_models(models);
  out["events.jsonl"] = events::export_jsonl(events);
  for (const auto& [path, bytes] : simulations) out["simulations/" + path] = bytes;
  out["analytics.json"] = dump_analytics(analytics);
  return out;
}

analytics::ReportInput report_input(const json& experiment, const std::vector<cmp::Model>& models,
                                    const std::vector<events::ActionEvent>& events) {
  analytics::ReportInput in;
  in.events = events;
  in.models = models;
  if (experiment.is_object() && experiment.contains("groups")) {
    for (const auto& g : experiment["groups"]) in.groups.push_back(g.at("group_id").get<std::string>());
    for (const auto& p : exp::phases_from_json(experiment.value("phases", json::array()))) {
      in.phases.push_back(analytics::PhaseWindow::from(p));
    }
    if (in.phases.empty()) in.phases.push_back(analytics::PhaseWindow::all());
  } else {
    std::set<std::string> groups;
    for (const auto& e : events) groups.insert(e.group);
    in.groups.assign(groups.begin(), groups.end());
    in.phases = analytics::infer_phases(events);
  }
  for (const auto& e : events) {
    if (!e.model.empty()) in.model_groups.emplace(e.model, e.group);
  }
  return in;
}

json compute_analytics(const ExportBundle& bundle) {
  return analytics::analytics_report(report_input(bundle.experiment, bundle.models, bundle.events));
}

std::string dump_analytics(const json& analytics) { return analytics.dump(2) + "\n"; }

void write_bundle(const ExportBundle& bundle, const std::filesystem::path& dir) {
  for (const auto& [path, bytes] : bundle.files()) write_file(dir / path, bytes);
}

ExportBundle bundle_from_files(const std::map<std::string, std::string>& files) {
  auto get = [&](const std::string& name) -> const std::string* {
    auto it = files.find(name);
    return it == files.end() ? nullptr : &it->second;
  };
  ExportBundle b;
  if (const auto* text = get("experiment.json")) {
    b.experiment = json::parse(*text, nullptr, false);
    if (b.experiment.is_discarded()) fail(ErrorCode::kValidation, "corrupt experiment.json");
  }
  if (const auto* text = get("models.json")) {
    json doc = json::parse(*text, nullptr, false);
    if (doc.is_discarded()) fail(ErrorCode::kValidation, "corrupt models.json");
    b.models = cmp::models_from_json(doc);
  }
  if (const auto* text = get("events.jsonl")) b.events = events::import_jsonl(std::string_view(*text));
  const std::string prefix = "simulations/";
  for (const auto& [name, bytes] : files) {
    if (name.size() > prefix.size() && name.compare(0, prefix.size(), prefix) == 0) {
      b.simulations[name.substr(prefix.size())] = bytes;
    }
  }
  if (const auto* text = get("analytics.json")) {
    b.analytics = json::parse(*text, nullptr, false);
    if (b.analytics.is_discarded()) fail(ErrorCode::kValidation, "corrupt analytics.json");
  }
  return b;
}

ExportBundle read_bundle(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) fail(ErrorCode::kIo, dir.string() + " is not a bundle directory");
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    files[fs::relative(entry.path(), dir).generic_string()] = read_file(entry.path());
  }
  return bundle_from_files(files);
}

std::string zip_archive(const std::map<std::string, std::string>& files) {
  // 1980-01-01 00:00 in DOS format.
  constexpr std::uint16_t kDosTime = 0;
  constexpr std::uint16_t kDosDate = (1 << 5) | 1;
  std::string out;
  std::string central;
  std::uint16_t count = 0;
  for (const auto& [name, bytes] : files) {
    const auto crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
    const auto size = static_cast<std::uint32_t>(bytes.size());
    const auto offset = static_cast<std::uint32_t>(out.size());

    put32(out, 0x04034b50);
    put16(out, 20);  // version needed
    put16(out, 0);   // flags
    put16(out, 0);   // stored
    put16(out, kDosTime);
    put16(out, kDosDate);
    put32(out, crc);
    put32(out, size);
    put32(out, size);
    put16(out, static_cast<std::uint16_t>(name.size()));
    put16(out, 0);
    out += name;
    out += bytes;

    put32(central, 0x02014b50);
    put16(central, 20);  // version made by
    put16(central, 20);
    put16(central, 0);
    put16(central, 0);
    put16(central, kDosTime);
    put16(central, kDosDate);
    put32(central, crc);
    put32(central, size);
    put32(central, size);
    put16(central, static_cast<std::uint16_t>(name.size()));
    put16(central, 0);  // extra
    put16(central, 0);  // comment
    put16(central, 0);  // disk
    put16(central, 0);  // internal attrs
    put32(central, 0);  // external attrs
    put32(central, offset);
    central += name;
    ++count;
  }
  const auto central_offset = static_cast<std::uint32_t>(out.size());
  out += central;
  put32(out, 0x06054b50);
  put16(out, 0);
  put16(out, 0);
  put16(out, count);
  put16(out, count);
  put32(out, static_cast<std::uint32_t>(central.size()));
  put32(out, central_offset);
  put16(out, 0);
  return out;
}

std::map<std::string, std::string> unzip_archive(std::string_view in) {
  std::map<std::string, std::string> out;
  std::size_t at = 0;
  while (at + 4 <= in.size() && get32(in, at) == 0x04034b50) {
    if (get16(in, at + 8) != 0) fail(ErrorCode::kValidation, "only stored zip entries are supported");
    const std::uint32_t crc = get32(in, at + 14);
    const std::uint32_t size = get32(in, at + 18);
    const std::uint16_t name_len = get16(in, at + 26);
    const std::uint16_t extra_len = get16(in, at + 28);
    const std::size_t data_at = at + 30 + name_len + extra_len;
    if (data_at + size > in.size()) fail(ErrorCode::kValidation, "truncated zip archive");
    std::string name(in.substr(at + 30, name_len));
    std::string data(in.substr(data_at, size));
    const auto actual = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
    if (actual != crc) fail(ErrorCode::kValidation, "zip entry " + name + " fails its CRC");
    out.emplace(std::move(name), std::move(data));
    at = data_at + size;
  }
  return out;
}

}  // namespace vera::bundle
