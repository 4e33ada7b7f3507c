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

#include <atomic>
#include <cstdint>
#include <string>
#include <string_view>

namespace vera {

// Hands out sequential, zero-padded ids ("m-000001") so that lexical order
// matches creation order. One source per store keeps runs reproducible.
class IdSource {
 public:
  explicit IdSource(std::uint64_t start = 1) : next_(start) {}

  std::string next(std::string_view prefix);

  // Moves the counter past any id already handed out (used after reloading
  // persisted state).
  void observe(std::string_view id);

 private:
  std::atomic<std::uint64_t> next_;
};

// Process-wide source for callers that do not care about reproducibility.
IdSource& default_ids();

}  // namespace vera
