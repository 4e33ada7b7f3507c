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

#include "vera/service.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>

#include "vera/error.h"
#include "vera/model_json.h"
#include "vera/rng.h"

namespace vera::service {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::optional<std::string> base64_decode(std::string_view text) {
  std::string clean;
  for (char c : text) {
    if (c == '-') c = '+';
    if (c == '_') c = '/';
    if (c != '\n' && c != '\r' && c != ' ') clean.push_back(c);
  }
  while (clean.size() % 4 != 0) clean.push_back('=');
  std::string out(3 * clean.size() / 4, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(clean.data()),
                                static_cast<int>(clean.size()));
  if (n < 0) return std::nullopt;
  std::size_t pad = 0;
  for (auto it = clean.rbegin(); it != clean.rend() && *it == '='; ++it) ++pad;
  out.resize(static_cast<std::size_t>(n) - std::min<std::size_t>(pad, static_cast<std::size_t>(n)));
  return out;
}

std::string to_url_safe(std::string text) {
  for (char& c : text) {
    if (c == '+') c = '-';
    if (c == '/') c = '_';
  }
  while (!text.empty() && text.back() == '=') text.pop_back();
  return text;
}

std::string hmac_hex(std::string_view key, std::string_view data) {
  unsigned char mac[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()),
       reinterpret_cast<const unsigned char*>(data.data()), data.size(), mac, &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[mac[i] >> 4]);
    out.push_back(kHex[mac[i] & 0xf]);
  }
  return out;
}

std::string percent_decode(std::string_view text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '+') {
      out.push_back(' ');
    } else if (text[i] == '%' && i + 2 < text.size() &&
               std::isxdigit(static_cast<unsigned char>(text[i + 1])) &&
               std::isxdigit(static_cast<unsigned char>(text[i + 2]))) {
      out.push_back(static_cast<char>(std::stoi(std::string(text.substr(i + 1, 2)), nullptr, 16)));
      i += 2;
    } else {
      out.push_back(text[i]);
    }
  }
  return out;
}

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    std::size_t j = path.find('/', i);
    if (j == std::string_view::npos) j = path.size();
    if (j > i) out.push_back(percent_decode(path.substr(i, j - i)));
    i = j;
  }
  return out;
}

json parse_body(const Request& request) {
  if (request.body.empty()) return json::object();
  json doc = json::parse(request.body, nullptr, false);
  if (doc.is_discarded()) fail(ErrorCode::kValidation, "request body is not valid JSON");
  if (!doc.is_object()) fail(ErrorCode::kValidation, "request body must be a JSON object");
  return doc;
}

std::string require_string(const json& body, const char* field) {
  if (!body.contains(field) || !body[field].is_string() || body[field].get<std::string>().empty()) {
    fail(ErrorCode::kValidation, std::string("field '") + field + "' must be a non-empty string",
         {{"field", field}});
  }
  return body[field].get<std::string>();
}

double require_number(const json& body, const char* field) {
  if (!body.contains(field) || !body[field].is_number()) {
    fail(ErrorCode::kValidation, std::string("field '") + field + "' must be a number",
         {{"field", field}});
  }
  return body[field].get<double>();
}

Response json_response(int status, const json& body) {
  return {status, "application/json", body.dump() + "\n"};
}

Response error_response(const Error& e) {
  return json_response(http_status(e.code()),
                       {{"code", to_string(e.code())}, {"message", e.what()}, {"detail", e.detail()}});
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Write-then-rename so a crash never leaves a torn file behind.
void write_file(const fs::path& path, std::string_view bytes) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + path.parent_path().string());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::kIo, "cannot write " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::kIo, "cannot rename " + tmp.string());
}

json flags_json(const exp::GroupConfig& group) {
  json flags = json::object();
  for (auto f : exp::kAllFlags) flags[std::string(exp::to_string(f))] = group.enabled(f);
  return flags;
}

std::optional<exp::Document> document_from_json(const json& doc) {
  if (doc.is_null()) return std::nullopt;
  if (!doc.is_object()) fail(ErrorCode::kValidation, "document must be an object");
  exp::Document d;
  d.media_type = doc.value("media_type", d.media_type);
  auto bytes = base64_decode(require_string(doc, "data"));
  if (!bytes) fail(ErrorCode::kValidation, "document data is not valid base64");
  d.bytes = std::move(*bytes);
  return d;
}

// Resolves a component by id first, then by name.
const cmp::Component& resolve_component(const cmp::Model& model, std::string_view ref) {
  if (const auto* c = model.find_component(ref)) return *c;
  if (const auto* c = model.find_component_by_name(ref)) return *c;
  fail(ErrorCode::kNotFound, "unknown component '" + std::string(ref) + "'",
       {{"component", ref}});
}

cmp::ParamMap params_from_json(const json& doc) {
  cmp::ParamMap out;
  if (doc.is_null()) return out;
  if (!doc.is_object()) fail(ErrorCode::kValidation, "params must be an object");
  for (const auto& [k, v] : doc.items()) {
    auto p = cmp::parse_parameter(k);
    if (!p) fail(ErrorCode::kValidation, "unknown parameter '" + k + "'", {{"parameter", k}});
    if (!v.is_number()) fail(ErrorCode::kValidation, "parameter '" + k + "' must be a number");
    out[*p] = v.get<double>();
  }
  return out;
}

}  // namespace

Request Request::get(std::string path, std::string bearer) {
  return {"GET", std::move(path), {}, std::move(bearer), {}, {}};
}

Request Request::post(std::string path, const json& body, std::string bearer) {
  return {"POST", std::move(path), {}, std::move(bearer), "application/json", body.dump()};
}

Request Request::put(std::string path, const json& body, std::string bearer) {
  return {"PUT", std::move(path), {}, std::move(bearer), "application/json", body.dump()};
}

Request Request::del(std::string path, std::string bearer) {
  return {"DELETE", std::move(path), {}, std::move(bearer), {}, {}};
}

json Response::json() const {
  auto doc = nlohmann::json::parse(body, nullptr, false);
  return doc.is_discarded() ? nlohmann::json() : doc;
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kValidation: return 400;
    case ErrorCode::kUnauthorized: return 401;
    case ErrorCode::kFeatureDisabled: return 403;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kConflict: return 409;
    case ErrorCode::kNoData: return 422;
    case ErrorCode::kIo: return 502;
  }
  return 500;
}

Service::Service(ServiceConfig config, std::shared_ptr<const Clock> clock)
    : config_(std::move(config)),
      clock_(std::move(clock)),
      registry_(config_.default_seed),
      exemplars_(cmp::load_exemplars()) {
  traits_ = std::make_shared<traits::TraitCache>(traits::make_provider(config_.traits), clock_,
                                                 config_.traits.ttl, config_.traits.timeout);
  if (config_.data_dir) {
    std::error_code ec;
    fs::create_directories(*config_.data_dir, ec);
    if (ec) fail(ErrorCode::kIo, "cannot create data dir " + config_.data_dir->string());
    load_state();
  } else {
    log_ = std::make_unique<events::EventLog>();
  }
}

Service::~Service() {
  std::vector<std::jthread> jobs;
  {
    std::lock_guard lock(batches_mu_);
    jobs.swap(jobs_);
  }
  jobs.clear();  // joins
}

// ---------------------------------------------------------------- tokens

std::string Service::issue_token(const Principal& who) const {
  const json claims = {{"e", who.experiment}, {"g", who.group}, {"p", who.participant}};
  const std::string body = to_url_safe(base64_encode(claims.dump()));
  return body + "." + hmac_hex(config_.token_secret, body);
}

std::optional<Principal> Service::verify_token(std::string_view token) const {
  const auto dot = token.find('.');
  if (dot == std::string_view::npos) return std::nullopt;
  const std::string body(token.substr(0, dot));
  const std::string mac(token.substr(dot + 1));
  const std::string expected = hmac_hex(config_.token_secret, body);
  if (mac.size() != expected.size() ||
      CRYPTO_memcmp(mac.data(), expected.data(), mac.size()) != 0) {
    return std::nullopt;
  }
  auto raw = base64_decode(body);
  if (!raw) return std::nullopt;
  json claims = json::parse(*raw, nullptr, false);
  if (!claims.is_object()) return std::nullopt;
  Principal p;
  p.role = Principal::Role::kParticipant;
  p.experiment = claims.value("e", "");
  p.group = claims.value("g", "");
  p.participant = claims.value("p", "");
  if (p.experiment.empty() || p.group.empty() || p.participant.empty()) return std::nullopt;
  return p;
}

Principal Service::authenticate(const Request& request) const {
  if (request.bearer.empty()) fail(ErrorCode::kUnauthorized, "missing bearer token");
  if (request.bearer.size() == config_.researcher_token.size() &&
      CRYPTO_memcmp(request.bearer.data(), config_.researcher_token.data(),
                    request.bearer.size()) == 0) {
    return {Principal::Role::kResearcher, {}, {}, {}};
  }
  if (auto p = verify_token(request.bearer)) return *p;
  fail(ErrorCode::kUnauthorized, "invalid bearer token");
}

Principal Service::require_researcher(const Request& request) const {
  Principal who = authenticate(request);
  if (who.role != Principal::Role::kResearcher) {
    fail(ErrorCode::kUnauthorized, "researcher credentials required");
  }
  return who;
}

Principal Service::require_participant(const Request& request) const {
  Principal who = authenticate(request);
  if (who.role != Principal::Role::kParticipant) {
    fail(ErrorCode::kUnauthorized, "participant credentials required");
  }
  return who;
}

void Service::require_flag(const Principal& who, exp::FeatureFlag flag) const {
  if (!registry_.is_enabled(who.experiment, who.group, flag)) {
    fail(ErrorCode::kFeatureDisabled,
         std::string(exp::to_string(flag)) + " is disabled for group " + who.group,
         {{"flag", exp::to_string(flag)}});
  }
}

// ---------------------------------------------------------------- dispatch

Response Service::handle(const Request& raw) {
  Request request = raw;
  if (auto q = request.path.find('?'); q != std::string::npos) {
    std::string_view query = std::string_view(request.path).substr(q + 1);
    while (!query.empty()) {
      auto amp = query.find('&');
      std::string_view pair = query.substr(0, amp);
      auto eq = pair.find('=');
      std::string k = percent_decode(pair.substr(0, eq));
      std::string v = eq == std::string_view::npos ? "" : percent_decode(pair.substr(eq + 1));
      if (!k.empty()) request.query.emplace(std::move(k), std::move(v));
      if (amp == std::string_view::npos) break;
      query.remove_prefix(amp + 1);
    }
    request.path.resize(q);
  }
  try {
    return dispatch(request);
  } catch (const Error& e) {
    return error_response(e);
  } catch (const json::exception& e) {
    return error_response(Error(ErrorCode::kValidation, e.what()));
  } catch (const std::exception& e) {
    return json_response(500, {{"code", "internal"}, {"message", e.what()}, {"detail", json::object()}});
  }
}

Response Service::dispatch(const Request& request) {
  const auto seg = split_path(request.path);
  const std::string& m = request.method;
  const std::size_t n = seg.size();
  auto is = [&](std::initializer_list<const char*> parts) {
    if (parts.size() != n) return false;
    std::size_t i = 0;
    for (const char* p : parts) {
      if (p[0] != '{' && seg[i] != p) return false;
      ++i;
    }
    return true;
  };

  if (n >= 1 && seg[0] == "researcher") {
    if (m == "GET" && is({"researcher", "join-experiment"})) return join_route(request);
    require_researcher(request);
    if (m == "POST" && is({"researcher", "experiments"})) return create_experiment_route(request);
    if (m == "GET" && is({"researcher", "experiments"})) {
      json out = json::array();
      for (const auto& e : registry_.list()) out.push_back(registry_.to_json(e.id));
      return json_response(200, {{"experiments", out}});
    }
    if (m == "GET" && is({"researcher", "experiments", "{id}"})) return get_experiment_route(seg[2]);
    if (m == "GET" && is({"researcher", "experiments", "{id}", "links"})) return links_route(seg[2]);
    if (m == "GET" && is({"researcher", "experiments", "{id}", "analytics"})) {
      return analytics_route(seg[2]);
    }
    if (m == "GET" && is({"researcher", "experiments", "{id}", "export"})) return export_route(seg[2]);
    if (m == "POST" && is({"researcher", "experiments", "{id}", "close"})) return close_route(seg[2]);
    if (m == "PUT" && is({"researcher", "experiments", "{id}", "docs", "{which}"})) {
      return upload_doc_route(seg[2], seg[4], request);
    }
    fail(ErrorCode::kNotFound, "no route for " + m + " " + request.path);
  }

  if (m == "GET" && is({"experiments", "{id}", "docs", "{which}"})) {
    return doc_route(request, seg[1], seg[3]);
  }
  if (m == "GET" && is({"participant"})) return me_route(request);
  if (m == "GET" && is({"exemplars"})) return exemplars_route(request);
  if (m == "GET" && is({"traits"})) return traits_route(request);
  if (m == "GET" && is({"simulations", "{batch}"})) return simulation_route(request, seg[1]);
  if (n >= 1 && seg[0] == "models") {
    if (m == "POST" && is({"models"})) return create_model_route(request);
    if (m == "GET" && is({"models"})) {
      const Principal who = require_participant(request);
      json out = json::array();
      std::lock_guard lock(models_mu_);
      for (const auto& [id, entry] : models_) {
        if (entry.participant == who.participant && entry.experiment == who.experiment) {
          out.push_back(cmp::model_to_json(entry.model));
        }
      }
      return json_response(200, {{"models", out}});
    }
    if (n >= 2) {
      const std::string& id = seg[1];
      if (m == "GET" && is({"models", "{id}"})) return get_model_route(request, id);
      if (m == "PUT" && is({"models", "{id}"})) return put_model_route(request, id);
      if (m == "POST" && is({"models", "{id}", "clone"})) return clone_route(request, id);
      if (m == "POST" && is({"models", "{id}", "components"})) return add_component_route(request, id);
      if (m == "DELETE" && is({"models", "{id}", "components", "{cid}"})) {
        return remove_component_route(request, id, seg[3]);
      }
      if (m == "POST" && is({"models", "{id}", "relationships"})) {
        return add_relationship_route(request, id);
      }
      if (m == "DELETE" && is({"models", "{id}", "relationships", "{rid}"})) {
        return remove_relationship_route(request, id, seg[3]);
      }
      if (m == "POST" && is({"models", "{id}", "parameters"})) return parameters_route(request, id);
      if (m == "POST" && is({"models", "{id}", "simulate"})) return simulate_route(request, id);
      if (m == "POST" && is({"models", "{id}", "apply-traits"})) return apply_traits_route(request, id);
    }
  }
  fail(ErrorCode::kNotFound, "no route for " + m + " " + request.path);
}

// ---------------------------------------------------------------- researcher

exp::Experiment Service::create_experiment(exp::ExperimentSpec spec) {
  exp::Experiment e = registry_.create(std::move(spec), clock_->now());
  persist_experiment(e.id);
  return e;
}

Response Service::create_experiment_route(const Request& request) {
  const json body = parse_body(request);
  exp::ExperimentSpec spec = exp::spec_from_json(body);
  spec.welcome_doc = document_from_json(body.value("welcome_doc", json()));
  spec.exit_doc = document_from_json(body.value("exit_doc", json()));
  const exp::Experiment e = create_experiment(std::move(spec));
  json out = registry_.to_json(e.id);
  if (e.status == exp::Status::kActive) {
    json links = json::array();
    for (const auto& l : registry_.join_links(e.id, config_.base_url)) {
      links.push_back({{"group_id", l.group_id ? json(*l.group_id) : json()}, {"url", l.url}});
    }
    out["links"] = links;
  }
  return json_response(201, out);
}

Response Service::get_experiment_route(const std::string& id) {
  return json_response(200, registry_.to_json(id));
}

Response Service::links_route(const std::string& id) {
  json links = json::array();
  for (const auto& l : registry_.join_links(id, config_.base_url)) {
    links.push_back({{"group_id", l.group_id ? json(*l.group_id) : json()}, {"url", l.url}});
  }
  return json_response(200, {{"experiment", id}, {"links", links}});
}

Response Service::analytics_route(const std::string& id) {
  return {200, "application/json", analytics_json(id)};
}

Response Service::export_route(const std::string& id) {
  return {200, "application/zip", bundle::zip_archive(export_bundle(id).files())};
}

Response Service::close_route(const std::string& id) {
  registry_.close(id);
  persist_experiment(id);
  return json_response(200, registry_.to_json(id));
}

Response Service::upload_doc_route(const std::string& id, const std::string& which,
                                   const Request& request) {
  if (which != "welcome" && which != "exit") fail(ErrorCode::kNotFound, "unknown document " + which);
  exp::Document doc;
  if (!request.content_type.empty()) doc.media_type = request.content_type;
  doc.bytes = request.body;
  registry_.attach_document(id, which == "welcome", std::move(doc));
  persist_experiment(id);
  return json_response(200, registry_.to_json(id));
}

// ---------------------------------------------------------------- participant

Response Service::join_route(const Request& request) {
  exp::JoinParams params;
  if (auto it = request.query.find("group"); it != request.query.end()) params.group = it->second;
  if (auto it = request.query.find("experiment"); it != request.query.end()) {
    params.experiment = it->second;
  }
  std::string participant;
  if (auto it = request.query.find("participant"); it != request.query.end()) {
    participant = it->second;
  }
  if (participant.empty() && !request.bearer.empty()) {
    if (auto p = verify_token(request.bearer)) participant = p->participant;
  }
  if (participant.empty()) participant = ids_.next("p");
  const exp::AssignmentRecord rec = registry_.join(params, participant, clock_->now());
  persist_experiment(rec.experiment_id);
  const exp::Experiment e = registry_.get(rec.experiment_id);
  const Principal who{Principal::Role::kParticipant, rec.participant, rec.experiment_id,
                      rec.group_id};
  auto doc_url = [&](const std::optional<exp::Document>& d, const char* which) -> json {
    if (!d) return nullptr;
    return "/experiments/" + e.id + "/docs/" + which;
  };
  return json_response(200, {{"token", issue_token(who)},
                             {"participant", rec.participant},
                             {"experiment", rec.experiment_id},
                             {"group", rec.group_id},
                             {"joined_at", format_rfc3339(rec.joined_at)},
                             {"flags", flags_json(*e.group(rec.group_id))},
                             {"welcome_doc", doc_url(e.welcome_doc, "welcome")},
                             {"exit_doc", doc_url(e.exit_doc, "exit")}});
}

Response Service::doc_route(const Request& request, const std::string& id,
                            const std::string& which) {
  const Principal who = authenticate(request);
  if (who.role == Principal::Role::kParticipant && who.experiment != id) {
    fail(ErrorCode::kUnauthorized, "token is not valid for experiment " + id);
  }
  if (which != "welcome" && which != "exit") fail(ErrorCode::kNotFound, "unknown document " + which);
  const exp::Experiment e = registry_.get(id);
  const auto& doc = which == "welcome" ? e.welcome_doc : e.exit_doc;
  if (!doc) fail(ErrorCode::kNotFound, "experiment " + id + " has no " + which + " document");
  return {200, doc->media_type, doc->bytes};
}

Response Service::me_route(const Request& request) {
  const Principal who = require_participant(request);
  const exp::Experiment e = registry_.get(who.experiment);
  const auto* g = e.group(who.group);
  if (g == nullptr) fail(ErrorCode::kUnauthorized, "token group is not part of the experiment");
  return json_response(200, {{"participant", who.participant},
                             {"experiment", who.experiment},
                             {"group", who.group},
                             {"status", exp::to_string(e.status)},
                             {"flags", flags_json(*g)}});
}

Response Service::exemplars_route(const Request& request) {
  const Principal who = require_participant(request);
  require_flag(who, exp::FeatureFlag::kExemplarModels);
  json out = json::array();
  for (const auto& m : exemplars_) out.push_back(cmp::model_to_json(m));
  return json_response(200, {{"exemplars", out}});
}

Response Service::traits_route(const Request& request) {
  const Principal who = require_participant(request);
  require_flag(who, exp::FeatureFlag::kLookupEol);
  auto it = request.query.find("name");
  if (it == request.query.end() || it->second.empty()) {
    fail(ErrorCode::kValidation, "query parameter 'name' is required");
  }
  return json_response(200, traits::record_to_json(traits_->lookup(it->second)));
}

std::uint64_t Service::record_event(const Principal& who, const std::string& model_id,
                                    events::ActionKind action, json payload) {
  if (registry_.get(who.experiment).status != exp::Status::kActive) {
    fail(ErrorCode::kConflict, "experiment " + who.experiment + " is not accepting activity");
  }
  events::ActionEvent ev;
  ev.ts = clock_->now();
  ev.experiment = who.experiment;
  ev.group = who.group;
  ev.participant = who.participant;
  ev.model = model_id;
  ev.action = action;
  ev.payload = std::move(payload);
  return events::record(*log_, registry_, std::move(ev));
}

Response Service::store_new_model(const Principal& who, cmp::Model model, events::Operation op,
                                  json payload, int status) {
  if (auto v = cmp::validate(model); !v.empty()) {
    json detail = json::array();
    for (const auto& x : v) detail.push_back({{"code", x.code}, {"subject", x.subject}, {"message", x.message}});
    fail(ErrorCode::kValidation, "model is invalid", {{"violations", detail}});
  }
  ModelEntry entry{std::move(model), who.experiment, who.group, who.participant};
  std::uint64_t seq = 0;
  {
    std::lock_guard capture(capture_mu_);
    seq = record_event(who, entry.model.id, history_.derive(op, entry.model.id), std::move(payload));
    std::lock_guard lock(models_mu_);
    models_[entry.model.id] = entry;
  }
  persist_model(entry);
  return json_response(status, {{"model", cmp::model_to_json(entry.model)}, {"event", seq}});
}

Response Service::create_model_route(const Request& request) {
  const Principal who = require_participant(request);
  json body = parse_body(request);
  const Timestamp now = clock_->now();
  if (body.contains("exemplar")) {
    const std::string name = require_string(body, "exemplar");
    require_flag(who, exp::FeatureFlag::kExemplarModels);
    auto it = std::find_if(exemplars_.begin(), exemplars_.end(), [&](const cmp::Model& m) {
      return m.name == name || m.id == name;
    });
    if (it == exemplars_.end()) fail(ErrorCode::kNotFound, "unknown exemplar '" + name + "'");
    cmp::Model model = cmp::instantiate_exemplar(*it, who.participant, ids_, now);
    json payload = {{"provenance", cmp::model_to_json(model)["provenance"]}};
    return store_new_model(who, std::move(model), events::Operation::kInstantiateExemplar,
                           std::move(payload), 201);
  }
  cmp::Model model = cmp::new_model(body.value("name", std::string("untitled")), who.participant,
                                    ids_, now);
  // An optional initial structure: components and relationships as in a
  // model document. Ids in the document are only used to wire endpoints.
  std::map<std::string, std::string> remap;
  for (const auto& c : body.value("components", json::array())) {
    auto kind = cmp::parse_component_kind(c.value("kind", "biotic"));
    if (!kind) fail(ErrorCode::kValidation, "unknown component kind");
    const auto& added = cmp::add_component(model, require_string(c, "name"), *kind,
                                           params_from_json(c.value("params", json())), ids_, now);
    remap[c.value("id", added.name)] = added.id;
  }
  for (const auto& r : body.value("relationships", json::array())) {
    auto kind = cmp::parse_relation_kind(r.value("kind", "consumes"));
    if (!kind) fail(ErrorCode::kValidation, "unknown relationship kind");
    auto endpoint = [&](const char* field) {
      const std::string ref = require_string(r, field);
      if (auto it = remap.find(ref); it != remap.end()) return it->second;
      return resolve_component(model, ref).id;
    };
    cmp::add_relationship(model, endpoint("source"), endpoint("target"), *kind,
                          r.value("rate", cmp::default_value(cmp::ParameterName::kInteractionRate)),
                          ids_, now);
  }
  return store_new_model(who, std::move(model), events::Operation::kNewModel,
                         {{"provenance", {{"kind", "fresh"}}}}, 201);
}

namespace {
std::shared_ptr<std::mutex> lock_for(std::mutex& mu,
                                     std::map<std::string, std::shared_ptr<std::mutex>, std::less<>>& locks,
                                     const std::string& id) {
  std::lock_guard guard(mu);
  auto& slot = locks[id];
  if (!slot) slot = std::make_shared<std::mutex>();
  return slot;
}
}  // namespace

Response Service::get_model_route(const Request& request, const std::string& id) {
  const Principal who = authenticate(request);
  std::lock_guard lock(models_mu_);
  auto it = models_.find(id);
  if (it == models_.end()) fail(ErrorCode::kNotFound, "unknown model '" + id + "'");
  if (who.role == Principal::Role::kParticipant && it->second.participant != who.participant) {
    fail(ErrorCode::kUnauthorized, "model '" + id + "' belongs to another participant");
  }
  return json_response(200, cmp::model_to_json(it->second.model));
}

Response Service::edit_model(const Request& request, const std::string& id, events::Operation op,
                             const std::function<json(cmp::Model&, events::ActionEvent&)>& edit) {
  const Principal who = require_participant(request);
  auto mu = lock_for(models_mu_, model_locks_, id);
  std::lock_guard model_lock(*mu);
  ModelEntry entry;
  {
    std::lock_guard lock(models_mu_);
    auto it = models_.find(id);
    if (it == models_.end()) fail(ErrorCode::kNotFound, "unknown model '" + id + "'");
    if (it->second.participant != who.participant || it->second.experiment != who.experiment) {
      fail(ErrorCode::kUnauthorized, "model '" + id + "' belongs to another participant");
    }
    entry = it->second;
  }
  events::ActionEvent ev;
  ev.action = history_.derive(op, id);
  json extra = edit(entry.model, ev);
  std::uint64_t seq = 0;
  {
    std::lock_guard capture(capture_mu_);
    seq = record_event(who, id, ev.action, ev.payload);
    std::lock_guard lock(models_mu_);
    models_[id] = entry;
  }
  persist_model(entry);
  if (!extra.is_object()) extra = json::object();
  extra["model"] = cmp::model_to_json(entry.model);
  extra["event"] = seq;
  extra["action"] = events::to_string(ev.action);
  return json_response(200, extra);
}

Response Service::put_model_route(const Request& request, const std::string& id) {
  json body = parse_body(request);
  const Timestamp now = clock_->now();
  return edit_model(request, id, events::Operation::kReplaceModel,
                    [&](cmp::Model& model, events::ActionEvent& ev) {
                      json doc = body;
                      doc["id"] = model.id;
                      doc["owner"] = model.owner;
                      doc["provenance"] = cmp::model_to_json(model)["provenance"];
                      doc["created_at"] = format_rfc3339(model.created_at);
                      doc["updated_at"] = format_rfc3339(now);
                      if (!doc.contains("name")) doc["name"] = model.name;
                      cmp::Model next = cmp::model_from_json(doc);
                      if (auto v = cmp::validate(next); !v.empty()) {
                        fail(ErrorCode::kValidation, "model is invalid: " + v.front().message,
                             {{"code", v.front().code}, {"subject", v.front().subject}});
                      }
                      for (const auto& c : next.components) ids_.observe(c.id);
                      for (const auto& r : next.relationships) ids_.observe(r.id);
                      model = std::move(next);
                      ev.payload = {{"edit", "replace_model"}, {"target", model.id}};
                      return json::object();
                    });
}

Response Service::clone_route(const Request& request, const std::string& id) {
  const Principal who = require_participant(request);
  require_flag(who, exp::FeatureFlag::kCloning);
  cmp::Model source;
  {
    std::lock_guard lock(models_mu_);
    auto it = models_.find(id);
    if (it == models_.end()) fail(ErrorCode::kNotFound, "unknown model '" + id + "'");
    if (it->second.participant != who.participant) {
      fail(ErrorCode::kUnauthorized, "model '" + id + "' belongs to another participant");
    }
    source = it->second.model;
  }
  cmp::Model copy = cmp::clone_model(source, who.participant, ids_, clock_->now());
  json payload = {{"provenance", cmp::model_to_json(copy)["provenance"]}};
  return store_new_model(who, std::move(copy), events::Operation::kCloneModel, std::move(payload),
                         201);
}

Response Service::add_component_route(const Request& request, const std::string& id) {
  const json body = parse_body(request);
  return edit_model(request, id, events::Operation::kAddComponent,
                    [&](cmp::Model& model, events::ActionEvent& ev) {
                      auto kind = cmp::parse_component_kind(body.value("kind", "biotic"));
                      if (!kind) fail(ErrorCode::kValidation, "unknown component kind");
                      const auto& c = cmp::add_component(model, require_string(body, "name"), *kind,
                                                         params_from_json(body.value("params", json())),
                                                         ids_, clock_->now());
                      ev.payload = {{"edit", "add_component"}, {"target", c.id}, {"name", c.name}};
                      return json{{"component", c.id}};
                    });
}

Response Service::remove_component_route(const Request& request, const std::string& id,
                                         const std::string& component) {
  return edit_model(request, id, events::Operation::kRemoveComponent,
                    [&](cmp::Model& model, events::ActionEvent& ev) {
                      const cmp::Component removed = cmp::remove_component(
                          model, resolve_component(model, component).id, clock_->now());
                      ev.payload = {{"edit", "remove_component"}, {"target", removed.id},
                                    {"name", removed.name}};
                      return json::object();
                    });
}

Response Service::add_relationship_route(const Request& request, const std::string& id) {
  const json body = parse_body(request);
  return edit_model(request, id, events::Operation::kAddRelationship,
                    [&](cmp::Model& model, events::ActionEvent& ev) {
                      auto kind = cmp::parse_relation_kind(body.value("kind", "consumes"));
                      if (!kind) fail(ErrorCode::kValidation, "unknown relationship kind");
                      const std::string source = resolve_component(model, require_string(body, "source")).id;
                      const std::string target = resolve_component(model, require_string(body, "target")).id;
                      const double rate = body.contains("rate")
                                              ? require_number(body, "rate")
                                              : cmp::default_value(cmp::ParameterName::kInteractionRate);
                      const auto& r = cmp::add_relationship(model, source, target, *kind, rate, ids_,
                                                            clock_->now());
                      ev.payload = {{"edit", "add_relationship"}, {"target", r.id},
                                    {"kind", cmp::to_string(r.kind)}};
                      return json{{"relationship", r.id}};
                    });
}

Response Service::remove_relationship_route(const Request& request, const std::string& id,
                                            const std::string& relationship) {
  return edit_model(request, id, events::Operation::kRemoveRelationship,
                    [&](cmp::Model& model, events::ActionEvent& ev) {
                      const cmp::Relationship removed =
                          cmp::remove_relationship(model, relationship, clock_->now());
                      ev.payload = {{"edit", "remove_relationship"}, {"target", removed.id}};
                      return json::object();
                    });
}

Response Service::parameters_route(const Request& request, const std::string& id) {
  const Principal who = require_participant(request);
  const json body = parse_body(request);
  const double value = require_number(body, "value");
  return edit_model(request, id, events::Operation::kSetParameter,
                    [&](cmp::Model& model, events::ActionEvent& ev) {
                      json payload;
                      if (body.contains("relationship")) {
                        const std::string rid = require_string(body, "relationship");
                        const auto* r = model.find_relationship(rid);
                        if (r == nullptr) fail(ErrorCode::kNotFound, "unknown relationship '" + rid + "'");
                        const auto kind = r->kind;
                        const auto change = cmp::set_relationship_rate(model, rid, value, clock_->now());
                        payload = {{"component", cmp::display_name(kind)},
                                   {"parameter", cmp::rate_label(kind)},
                                   {"relationship", rid},
                                   {"old", change.old_value},
                                   {"new", change.new_value}};
                      } else {
                        const std::string pname = require_string(body, "parameter");
                        auto p = cmp::parse_parameter(pname);
                        if (!p) fail(ErrorCode::kValidation, "unknown parameter '" + pname + "'");
                        if (cmp::is_advanced(*p)) require_flag(who, exp::FeatureFlag::kAdvancedParameters);
                        const auto& c = resolve_component(model, require_string(body, "component"));
                        const std::string cid = c.id;
                        const std::string cname = c.name;
                        const auto change = cmp::set_parameter(model, cid, *p, value, clock_->now());
                        payload = {{"component", cname},
                                   {"parameter", cmp::label(*p)},
                                   {"component_id", cid},
                                   {"old", change.old_value},
                                   {"new", change.new_value}};
                      }
                      if (body.contains("hypothesis")) payload["hypothesis"] = body["hypothesis"];
                      ev.payload = payload;
                      return json{{"old", payload["old"]}, {"new", payload["new"]}};
                    });
}

Response Service::apply_traits_route(const Request& request, const std::string& id) {
  const Principal who = require_participant(request);
  require_flag(who, exp::FeatureFlag::kLookupEol);
  const json body = parse_body(request);
  return edit_model(request, id, events::Operation::kApplyTraits,
                    [&](cmp::Model& model, events::ActionEvent& ev) {
                      const auto& c = resolve_component(model, require_string(body, "component"));
                      const std::string cid = c.id;
                      const std::string species = body.value("species", c.name);
                      const traits::TraitRecord record = traits_->lookup(species);
                      const auto changes = traits::apply_traits(model, cid, record, clock_->now());
                      json list = json::array();
                      for (const auto& ch : changes) {
                        list.push_back({{"parameter", cmp::label(ch.parameter)},
                                        {"old", ch.old_value},
                                        {"new", ch.new_value}});
                      }
                      ev.payload = {{"species", record.canonical_name}, {"component", cid},
                                    {"changes", list}};
                      return json{{"changes", list}, {"record", traits::record_to_json(record)}};
                    });
}

// ---------------------------------------------------------------- simulation

Response Service::simulate_route(const Request& request, const std::string& id) {
  const Principal who = require_participant(request);
  require_flag(who, exp::FeatureFlag::kSimulation);
  const json body = parse_body(request);
  sim::SimConfig config = sim::config_from_json(body);
  config.check();
  auto mu = lock_for(models_mu_, model_locks_, id);
  std::lock_guard model_lock(*mu);
  ModelEntry entry;
  {
    std::lock_guard lock(models_mu_);
    auto it = models_.find(id);
    if (it == models_.end()) fail(ErrorCode::kNotFound, "unknown model '" + id + "'");
    if (it->second.participant != who.participant || it->second.experiment != who.experiment) {
      fail(ErrorCode::kUnauthorized, "model '" + id + "' belongs to another participant");
    }
    entry = it->second;
  }
  BatchEntry batch;
  batch.id = ids_.next("b");
  batch.model_id = id;
  batch.experiment = who.experiment;
  batch.participant = who.participant;
  batch.model = entry.model;
  if (!body.contains("seed")) {
    config.seed = mix_key({registry_.get(who.experiment).seed, fnv1a64(batch.id)});
  }
  batch.config = config;
  if (body.contains("target")) batch.target = require_string(body, "target");
  batch.spec = sim::compile(entry.model);
  if (batch.target && !batch.spec.index_of(*batch.target)) {
    fail(ErrorCode::kNotFound, "unknown target component '" + *batch.target + "'");
  }
  const bool async = static_cast<std::size_t>(config.runs) * static_cast<std::size_t>(config.steps) >
                     config_.sync_simulation_limit;
  if (!async) {
    batch.series = sim::run_batch(batch.spec, config);
    batch.status = "done";
  } else {
    batch.status = "pending";
  }
  std::uint64_t seq = 0;
  {
    std::lock_guard capture(capture_mu_);
    seq = record_event(who, id, events::ActionKind::kS,
                       {{"batch", batch.id}, {"runs", config.runs}, {"steps", config.steps}});
    history_.mark_simulated(id);
    std::lock_guard lock(batches_mu_);
    batches_[batch.id] = batch;
  }
  persist_batch(batch);
  if (async) {
    std::lock_guard lock(batches_mu_);
    jobs_.emplace_back([this, bid = batch.id] { run_batch_job(bid); });
    json out = {{"batch", batch.id}, {"status", "pending"}, {"event", seq}};
    return json_response(202, out);
  }
  json out = batch_json(batch);
  out["event"] = seq;
  return json_response(201, out);
}

void Service::run_batch_job(const std::string& batch_id) {
  BatchEntry copy;
  {
    std::lock_guard lock(batches_mu_);
    copy = batches_.at(batch_id);
  }
  try {
    copy.series = sim::run_batch(copy.spec, copy.config);
    copy.status = "done";
  } catch (const std::exception& e) {
    copy.status = "failed";
    copy.error = e.what();
  }
  {
    std::lock_guard lock(batches_mu_);
    batches_[batch_id] = copy;
  }
  try {
    persist_batch(copy);
  } catch (const std::exception&) {
    // The batch stays readable from memory.
  }
}

json Service::batch_json(const BatchEntry& batch) const {
  json out = {{"batch", batch.id},
              {"model", batch.model_id},
              {"status", batch.status},
              {"config", sim::config_to_json(batch.config)}};
  if (batch.status == "failed") out["error"] = batch.error;
  if (batch.status != "done") return out;
  json aggs = json::array();
  bool capped = false;
  for (const auto& s : batch.series) capped = capped || s.capped;
  for (const auto& v : batch.spec.vars) {
    if (batch.target) {
      if (*batch.spec.index_of(*batch.target) != *batch.spec.index_of(v.id)) continue;
    } else if (v.kind != cmp::ComponentKind::kBiotic) {
      continue;
    }
    aggs.push_back(sim::aggregate_json(
        sim::aggregate(batch.spec, batch.series, v.id, batch.config.histogram_bins)));
  }
  out["aggregates"] = aggs;
  out["capped"] = capped;
  return out;
}

std::map<std::string, std::string> Service::batch_files(const BatchEntry& batch) const {
  std::map<std::string, std::string> files;
  if (batch.status != "done") return files;
  files[batch.id + "/series.csv"] = sim::batch_csv(batch.spec, batch.series);
  for (const auto& v : batch.spec.vars) {
    if (v.kind != cmp::ComponentKind::kBiotic) continue;
    files[batch.id + "/" + v.id + ".csv"] =
        sim::aggregate_csv(sim::aggregate(batch.spec, batch.series, v.id, batch.config.histogram_bins));
  }
  return files;
}

Response Service::simulation_route(const Request& request, const std::string& batch_id) {
  const Principal who = authenticate(request);
  BatchEntry batch;
  {
    std::lock_guard lock(batches_mu_);
    auto it = batches_.find(batch_id);
    if (it == batches_.end()) fail(ErrorCode::kNotFound, "unknown batch '" + batch_id + "'");
    batch = it->second;
  }
  if (who.role == Principal::Role::kParticipant && batch.participant != who.participant) {
    fail(ErrorCode::kUnauthorized, "batch '" + batch_id + "' belongs to another participant");
  }
  json out = batch_json(batch);
  if (batch.status == "done" && request.query.count("series") != 0) {
    json series = json::array();
    for (const auto& s : batch.series) {
      json values = json::object();
      for (std::size_t i = 0; i < batch.spec.vars.size(); ++i) {
        values[batch.spec.vars[i].name] = s.values[i];
      }
      series.push_back({{"run", s.run_index}, {"capped", s.capped}, {"values", values}});
    }
    out["series"] = series;
  }
  return json_response(200, out);
}

// ---------------------------------------------------------------- export

std::vector<events::ActionEvent> Service::experiment_events(std::string_view experiment_id) const {
  return log_->snapshot(experiment_id);
}

bundle::ExportBundle Service::export_bundle(std::string_view experiment_id) {
  bundle::ExportBundle b;
  b.experiment = registry_.to_json(experiment_id);
  {
    std::lock_guard lock(models_mu_);
    for (const auto& [id, entry] : models_) {
      if (entry.experiment == experiment_id) b.models.push_back(entry.model);
    }
  }
  b.events = log_->snapshot(experiment_id);
  {
    std::lock_guard lock(batches_mu_);
    for (const auto& [id, batch] : batches_) {
      if (batch.experiment != experiment_id) continue;
      for (auto& [path, bytes] : batch_files(batch)) b.simulations[path] = std::move(bytes);
    }
  }
  b.analytics = bundle::compute_analytics(b);
  return b;
}

std::string Service::analytics_json(std::string_view experiment_id) {
  return bundle::dump_analytics(export_bundle(experiment_id).analytics);
}

// ---------------------------------------------------------------- persistence

void Service::persist_experiment(const std::string& id) {
  if (!config_.data_dir) return;
  const fs::path dir = *config_.data_dir / "experiments" / id;
  write_file(dir / "experiment.json", registry_.to_json(id).dump(2) + "\n");
  const exp::Experiment e = registry_.get(id);
  for (const auto& [doc, name] : {std::pair{&e.welcome_doc, "welcome"}, std::pair{&e.exit_doc, "exit"}}) {
    if (!*doc) continue;
    write_file(dir / "docs" / (std::string(name) + ".bin"), (*doc)->bytes);
    write_file(dir / "docs" / (std::string(name) + ".type"), (*doc)->media_type);
  }
}

void Service::persist_model(const ModelEntry& entry) {
  if (!config_.data_dir) return;
  const json doc = {{"experiment", entry.experiment},
                    {"group", entry.group},
                    {"participant", entry.participant},
                    {"model", cmp::model_to_json(entry.model)}};
  write_file(*config_.data_dir / "models" / (entry.model.id + ".json"), doc.dump(2) + "\n");
}

void Service::persist_batch(const BatchEntry& batch) {
  if (!config_.data_dir) return;
  json doc = {{"id", batch.id},
              {"model_id", batch.model_id},
              {"experiment", batch.experiment},
              {"participant", batch.participant},
              {"config", sim::config_to_json(batch.config)},
              {"target", batch.target ? json(*batch.target) : json()},
              {"model", cmp::model_to_json(batch.model)}};
  write_file(*config_.data_dir / "simulations" / (batch.id + ".json"), doc.dump(2) + "\n");
}

void Service::load_state() {
  const fs::path root = *config_.data_dir;
  if (fs::is_directory(root / "experiments")) {
    for (const auto& dir : fs::directory_iterator(root / "experiments")) {
      if (!fs::exists(dir.path() / "experiment.json")) continue;
      json doc = json::parse(read_file(dir.path() / "experiment.json"), nullptr, false);
      if (doc.is_discarded()) fail(ErrorCode::kValidation, "corrupt " + dir.path().string());
      registry_.restore(doc);
      for (const auto& a : doc.value("assignments", json::array())) {
        ids_.observe(a.value("participant", ""));
      }
      for (const char* which : {"welcome", "exit"}) {
        const fs::path bin = dir.path() / "docs" / (std::string(which) + ".bin");
        if (!fs::exists(bin)) continue;
        exp::Document d;
        d.bytes = read_file(bin);
        const fs::path type = dir.path() / "docs" / (std::string(which) + ".type");
        if (fs::exists(type)) d.media_type = read_file(type);
        registry_.attach_document(doc.at("id").get<std::string>(), std::string(which) == "welcome",
                                  std::move(d));
      }
    }
  }
  if (fs::is_directory(root / "models")) {
    for (const auto& file : fs::directory_iterator(root / "models")) {
      if (file.path().extension() != ".json") continue;
      json doc = json::parse(read_file(file.path()), nullptr, false);
      if (doc.is_discarded()) fail(ErrorCode::kValidation, "corrupt " + file.path().string());
      ModelEntry entry{cmp::model_from_json(doc.at("model")), doc.at("experiment").get<std::string>(),
                       doc.at("group").get<std::string>(), doc.at("participant").get<std::string>()};
      ids_.observe(entry.model.id);
      for (const auto& c : entry.model.components) ids_.observe(c.id);
      for (const auto& r : entry.model.relationships) ids_.observe(r.id);
      models_[entry.model.id] = std::move(entry);
    }
  }
  log_ = std::make_unique<events::EventLog>(root / "events.jsonl");
  for (const auto& e : log_->snapshot()) {
    if (e.action == events::ActionKind::kS) history_.mark_simulated(e.model);
  }
  if (fs::is_directory(root / "simulations")) {
    for (const auto& file : fs::directory_iterator(root / "simulations")) {
      if (file.path().extension() != ".json") continue;
      json doc = json::parse(read_file(file.path()), nullptr, false);
      if (doc.is_discarded()) fail(ErrorCode::kValidation, "corrupt " + file.path().string());
      BatchEntry b;
      b.id = doc.at("id").get<std::string>();
      b.model_id = doc.at("model_id").get<std::string>();
      b.experiment = doc.at("experiment").get<std::string>();
      b.participant = doc.value("participant", "");
      b.config = sim::config_from_json(doc.at("config"));
      if (doc.contains("target") && doc["target"].is_string()) b.target = doc["target"].get<std::string>();
      b.model = cmp::model_from_json(doc.at("model"));
      // Series are a pure function of (model, config) and are recomputed.
      b.spec = sim::compile(b.model);
      b.series = sim::run_batch(b.spec, b.config);
      b.status = "done";
      ids_.observe(b.id);
      batches_[b.id] = std::move(b);
    }
  }
}

}  // namespace vera::service
