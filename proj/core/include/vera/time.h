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
#include <chrono>
#include <string>
#include <string_view>

namespace vera {

using Timestamp = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;

// "2022-01-10T09:00:00Z". Always UTC with a trailing Z.
std::string format_rfc3339(Timestamp ts);

// Accepts "YYYY-MM-DDTHH:MM:SS" followed by optional fractional seconds and
// either "Z" or a "+HH:MM"/"-HH:MM" offset. Fractions are truncated.
// Throws vera::Error(kValidation) on malformed input.
Timestamp parse_rfc3339(std::string_view text);

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() const = 0;
};

class SystemClock final : public Clock {
 public:
  Timestamp now() const override {
    return std::chrono::time_point_cast<Seconds>(std::chrono::system_clock::now());
  }
};

// Settable clock for scenario runs and tests.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(Timestamp start) : now_(start.time_since_epoch().count()) {}

  Timestamp now() const override { return Timestamp(Seconds(now_.load())); }
  void set(Timestamp ts) { now_.store(ts.time_since_epoch().count()); }
  void advance(Seconds by) { now_.fetch_add(by.count()); }

 private:
  std::atomic<long long> now_;
};

}  // namespace vera
