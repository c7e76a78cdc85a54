/*
 * Copyright 2026 The DMKCM Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmkcm/pipeline/model.hpp"

namespace dmkcm::api {

/// Failure with an HTTP status and a stable machine-readable code.
class ApiError : public std::runtime_error {
 public:
  ApiError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status_(status), code_(std::move(code)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }

 private:
  int status_;
  std::string code_;
};

using Clock = std::chrono::steady_clock;

struct SessionSnapshot {
  std::string id;
  std::size_t turn_count = 0;
  std::vector<std::string> history;  // alternating user / system turns
  std::vector<std::size_t> memory_turns;
  double idle_seconds = 0;
};

struct TurnReply {
  std::string session_id;
  std::size_t turn_count;
  pipeline::TurnResult result;
};

/// In-memory chat sessions over one shared read-only model. Each session
/// is processed by at most one request at a time.
class SessionManager {
 public:
  SessionManager(std::shared_ptr<const pipeline::DialogueModel> model,
                 pipeline::DecodeSettings settings = {},
                 std::chrono::seconds idle_limit = std::chrono::minutes(30),
                 std::function<Clock::time_point()> now = Clock::now);

  bool model_loaded() const { return static_cast<bool>(model_); }
  std::string create();
  TurnReply post_utterance(const std::string& id, const std::string& text);
  SessionSnapshot get(const std::string& id) const;
  /// Drops sessions idle longer than the limit; returns how many.
  std::size_t evict_idle();
  std::size_t size() const;

 private:
  struct Session {
    std::string id;
    std::vector<std::string> history;
    fusion::MemoryBank bank;
    std::size_t turn_count = 0;
    Clock::time_point created;
    Clock::time_point last_active;
    mutable std::mutex mutex;
  };

  std::shared_ptr<Session> find(const std::string& id) const;

  std::shared_ptr<const pipeline::DialogueModel> model_;
  pipeline::DecodeSettings settings_;
  std::chrono::seconds idle_limit_;
  std::function<Clock::time_point()> now_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::size_t next_id_ = 1;
};

}  // namespace dmkcm::api
