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

#include "dmkcm/api/session.hpp"

#include <cstdio>

namespace dmkcm::api {

namespace {

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

}  // namespace

SessionManager::SessionManager(std::shared_ptr<const pipeline::DialogueModel> model,
                               pipeline::DecodeSettings settings, std::chrono::seconds idle_limit,
                               std::function<Clock::time_point()> now)
    : model_(std::move(model)),
      settings_(settings),
      idle_limit_(idle_limit),
      now_(std::move(now)) {}

std::string SessionManager::create() {
  if (!model_) throw ApiError(503, "model_unavailable", "no model is loaded");
  std::lock_guard lock(mutex_);
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%06zu", next_id_++);
  auto s = std::make_shared<Session>();
  s->id = buf;
  s->bank = fusion::MemoryBank(s->id, model_->config().memory_window);
  s->created = s->last_active = now_();
  sessions_.emplace(s->id, s);
  return s->id;
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ApiError(404, "session_not_found", "unknown session " + id);
  return it->second;
}

TurnReply SessionManager::post_utterance(const std::string& id, const std::string& text) {
  if (!model_) throw ApiError(503, "model_unavailable", "no model is loaded");
  auto session = find(id);
  if (blank(text) || corpus::tokenize(text).empty()) {
    throw ApiError(400, "empty_utterance", "utterance text must not be empty");
  }
  std::lock_guard lock(session->mutex);
  pipeline::TurnRequest request;
  request.turn_index = session->turn_count + 1;
  const std::size_t window = model_->config().context_window;
  const std::size_t first = session->history.size() > window ? session->history.size() - window : 0;
  request.context_turns.assign(session->history.begin() + static_cast<std::ptrdiff_t>(first),
                               session->history.end());
  request.user_utterance = text;
  auto result = model_->respond(request, session->bank, settings_);
  session->history.push_back(text);
  session->history.push_back(result.response);
  ++session->turn_count;
  session->last_active = now_();
  return TurnReply{session->id, session->turn_count, std::move(result)};
}

SessionSnapshot SessionManager::get(const std::string& id) const {
  auto session = find(id);
  std::lock_guard lock(session->mutex);
  SessionSnapshot s;
  s.id = session->id;
  s.turn_count = session->turn_count;
  s.history = session->history;
  s.memory_turns = session->bank.turns();
  s.idle_seconds = std::chrono::duration<double>(now_() - session->last_active).count();
  return s;
}

std::size_t SessionManager::evict_idle() {
  const auto now = now_();
  std::lock_guard lock(mutex_);
  std::size_t removed = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    std::unique_lock session_lock(it->second->mutex, std::try_to_lock);
    if (session_lock.owns_lock() && now - it->second->last_active > idle_limit_) {
      session_lock.unlock();
      it = sessions_.erase(it);
      ++removed;
    } else {
      ++it;
    }
  }
  return removed;
}

std::size_t SessionManager::size() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

}  // namespace dmkcm::api
