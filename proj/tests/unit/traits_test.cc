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

#include <atomic>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "vera/error.h"
#include "vera/model_json.h"
#include "vera/traits.h"

namespace vera::traits {
namespace {

using namespace std::chrono_literals;

const Timestamp kT0 = parse_rfc3339("2022-01-10T09:00:00Z");

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected vera::Error";
  return ErrorCode::kIo;
}

// Counts calls and can be told to stall, to observe caching from outside.
class CountingProvider final : public TraitProvider {
 public:
  std::optional<TraitRecord> fetch(std::string_view name, std::chrono::milliseconds t) override {
    ++calls;
    if (delay.count() > 0) std::this_thread::sleep_for(delay);
    return inner->fetch(name, t);
  }
  std::shared_ptr<LocalTraitProvider> inner = LocalTraitProvider::bundled();
  std::atomic<int> calls{0};
  std::chrono::milliseconds delay{0};
};

TEST(Local, BundledLookup) {
  auto provider = LocalTraitProvider::bundled();
  auto rec = provider->fetch("canis LUPUS", 1s);
  ASSERT_TRUE(rec);
  EXPECT_EQ(rec->canonical_name, "Canis lupus");
  EXPECT_EQ(rec->params.at(cmp::ParameterName::kLifespan), 96);
  EXPECT_FALSE(rec->remote_url);
  EXPECT_FALSE(provider->fetch("Canis", 1s));
  EXPECT_GE(provider->records().size(), 10u);
}

TEST(Records, JsonValidation) {
  const auto rec = record_from_json({{"canonical_name", "x"}, {"params", {{"lifespan", 12}}}});
  EXPECT_EQ(record_from_json(record_to_json(rec)), rec);
  EXPECT_EQ(code_of([] { record_from_json({{"params", nlohmann::json::object()}}); }),
            ErrorCode::kValidation);
  EXPECT_EQ(code_of([] { record_from_json({{"canonical_name", "x"}, {"params", {{"amount", 3}}}}); }),
            ErrorCode::kValidation);
  EXPECT_EQ(code_of([] { record_from_json({{"canonical_name", "x"}, {"params", {{"lifespan", 0}}}}); }),
            ErrorCode::kValidation);
  EXPECT_EQ(code_of([] { LocalTraitProvider::from_file("/nonexistent/traits.json"); }), ErrorCode::kIo);
}

TEST(Cache, HitsWithinTtlAndRefetchesAfter) {
  auto provider = std::make_shared<CountingProvider>();
  auto clock = std::make_shared<ManualClock>(kT0);
  TraitCache cache(provider, clock, 1h);
  EXPECT_EQ(cache.lookup("Canis lupus").canonical_name, "Canis lupus");
  EXPECT_EQ(cache.lookup("canis lupus").retrieved_at, kT0);
  EXPECT_EQ(provider->calls, 1);
  clock->advance(59min);
  cache.lookup("Canis lupus");
  EXPECT_EQ(provider->calls, 1);
  clock->advance(2min);
  EXPECT_EQ(cache.lookup("Canis lupus").retrieved_at, kT0 + 61min);
  EXPECT_EQ(provider->calls, 2);
  EXPECT_EQ(cache.provider_calls(), 2u);
}

TEST(Cache, ErrorsAndMissesAreNotCached) {
  auto provider = std::make_shared<CountingProvider>();
  TraitCache cache(provider, std::make_shared<ManualClock>(kT0));
  EXPECT_EQ(code_of([&] { cache.lookup("Unicornis"); }), ErrorCode::kNotFound);
  EXPECT_EQ(code_of([&] { cache.lookup("Unicornis"); }), ErrorCode::kNotFound);
  EXPECT_EQ(provider->calls, 2);
  EXPECT_EQ(code_of([&] { cache.lookup(""); }), ErrorCode::kValidation);
  EXPECT_EQ(code_of([&] { TraitCache(provider, std::make_shared<ManualClock>(kT0), Seconds(0)); }),
            ErrorCode::kValidation);
}

TEST(Cache, ConcurrentMissesShareOneCall) {
  auto provider = std::make_shared<CountingProvider>();
  provider->delay = 100ms;
  TraitCache cache(provider, std::make_shared<ManualClock>(kT0));
  std::atomic<int> ok{0};
  {
    std::vector<std::jthread> threads;
    for (int i = 0; i < 8; ++i) {
      threads.emplace_back([&] {
        if (cache.lookup("Ovis aries").canonical_name == "Ovis aries") ++ok;
      });
    }
  }
  EXPECT_EQ(ok, 8);
  EXPECT_EQ(provider->calls, 1);
}

TEST(Apply, OverwritesPresentParametersOnly) {
  IdSource ids;
  cmp::Model m = cmp::new_model("m", "u", ids, kT0);
  const std::string wolf = cmp::add_component(m, "wolf", cmp::ComponentKind::kBiotic, {}, ids, kT0).id;
  const std::string air = cmp::add_component(m, "air", cmp::ComponentKind::kAbiotic, {}, ids, kT0).id;
  const auto rec = *LocalTraitProvider::bundled()->fetch("Canis lupus", 1s);
  const auto changes = apply_traits(m, wolf, rec, kT0);
  EXPECT_EQ(changes.size(), 5u);
  EXPECT_EQ(m.find_component(wolf)->param(cmp::ParameterName::kLifespan), 96);
  EXPECT_EQ(m.find_component(wolf)->param(cmp::ParameterName::kStartingPopulation), 100);
  const cmp::Model after = m;
  EXPECT_TRUE(apply_traits(m, wolf, rec, kT0).empty());
  EXPECT_EQ(m, after);
  EXPECT_EQ(code_of([&] { apply_traits(m, air, rec, kT0); }), ErrorCode::kValidation);
  EXPECT_EQ(code_of([&] { apply_traits(m, "c-nope", rec, kT0); }), ErrorCode::kNotFound);
}

class RemoteTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Get("/traits", [](const httplib::Request& req, httplib::Response& res) {
      const std::string name = req.get_param_value("name");
      if (name == "slow") {
        std::this_thread::sleep_for(1500ms);
      }
      if (name == "Canis lupus") {
        res.set_content(R"({"canonical_name":"Canis lupus","params":{"lifespan":100}})",
                        "application/json");
        return;
      }
      if (name == "broken") {
        res.status = 500;
        return;
      }
      res.status = 404;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::jthread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override { server_.stop(); }

  std::string base() const { return "http://127.0.0.1:" + std::to_string(port_); }

  httplib::Server server_;
  int port_ = 0;
  std::jthread thread_;
};

TEST_F(RemoteTest, FetchesAndMaps) {
  RemoteTraitProvider remote(base());
  auto rec = remote.fetch("Canis lupus", 2s);
  ASSERT_TRUE(rec);
  EXPECT_EQ(rec->params.at(cmp::ParameterName::kLifespan), 100);
  EXPECT_EQ(rec->remote_url, base() + "/traits?name=Canis%20lupus");
  EXPECT_FALSE(remote.fetch("Nobody", 2s));
  EXPECT_EQ(code_of([&] { remote.fetch("broken", 2s); }), ErrorCode::kIo);
}

TEST_F(RemoteTest, TimeoutIsAnIoError) {
  ProviderConfig cfg;
  cfg.remote_base_url = base();
  TraitCache cache(make_provider(cfg), std::make_shared<ManualClock>(kT0), 1h, 200ms);
  EXPECT_EQ(code_of([&] { cache.lookup("slow"); }), ErrorCode::kIo);
  EXPECT_EQ(cache.lookup("Canis lupus").canonical_name, "Canis lupus");
}

TEST(Remote, UnreachableIsAnIoError) {
  RemoteTraitProvider remote("http://127.0.0.1:1");
  EXPECT_EQ(code_of([&] { remote.fetch("Canis lupus", 500ms); }), ErrorCode::kIo);
}

}  // namespace
}  // namespace vera::traits
