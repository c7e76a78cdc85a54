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

#include "dmkcm/api/service.hpp"

#include <httplib.h>

#include <regex>

namespace dmkcm::api {

namespace {

const std::regex kSessionPath(R"(^/v1/sessions/([A-Za-z0-9_-]+)$)");
const std::regex kUtterancePath(R"(^/v1/sessions/([A-Za-z0-9_-]+)/utterances$)");

HttpResponse error(int status, const std::string& code, const std::string& message) {
  return HttpResponse{status, error_body(code, message)};
}

}  // namespace

nlohmann::json error_body(const std::string& code, const std::string& message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

HttpResponse Service::handle(const std::string& method, const std::string& path,
                             const std::string& body) const {
  try {
    std::smatch m;
    if (path == "/v1/healthz") {
      if (method != "GET") return error(405, "method_not_allowed", method + " " + path);
      return HttpResponse{200, {{"status", "ok"},
                                {"model_loaded", sessions_.model_loaded()},
                                {"sessions", sessions_.size()}}};
    }
    if (path == "/v1/sessions") {
      if (method != "POST") return error(405, "method_not_allowed", method + " " + path);
      sessions_.evict_idle();
      auto id = sessions_.create();
      return HttpResponse{201, {{"session_id", id}, {"turn_count", 0}}};
    }
    if (std::regex_match(path, m, kUtterancePath)) {
      if (method != "POST") return error(405, "method_not_allowed", method + " " + path);
      auto json = nlohmann::json::parse(body, nullptr, false);
      if (json.is_discarded() || !json.is_object()) {
        return error(400, "invalid_json", "request body must be a JSON object");
      }
      if (!json.contains("text") || !json["text"].is_string()) {
        return error(400, "missing_text", "request body needs a string field \"text\"");
      }
      auto reply = sessions_.post_utterance(m[1].str(), json["text"].get<std::string>());
      auto trace = pipeline::to_json(reply.result.trace);
      return HttpResponse{200, {{"session_id", reply.session_id},
                                {"turn_count", reply.turn_count},
                                {"response", reply.result.response},
                                {"trace", trace}}};
    }
    if (std::regex_match(path, m, kSessionPath)) {
      if (method != "GET") return error(405, "method_not_allowed", method + " " + path);
      auto s = sessions_.get(m[1].str());
      return HttpResponse{200, {{"session_id", s.id},
                                {"turn_count", s.turn_count},
                                {"history", s.history},
                                {"memory_turns", s.memory_turns},
                                {"idle_seconds", s.idle_seconds}}};
    }
    return error(404, "not_found", "no route for " + path);
  } catch (const ApiError& e) {
    return error(e.status(), e.code(), e.what());
  } catch (const std::exception& e) {
    return error(500, "internal", e.what());
  }
}

void Service::mount(httplib::Server& server) const {
  auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    auto out = handle(req.method, req.path, req.body);
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  };
  server.Get(R"(/v1/.*)", forward);
  server.Post(R"(/v1/.*)", forward);
  server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.body.empty()) {
      res.set_content(error_body("not_found", "no route for " + req.path).dump(),
                      "application/json");
    }
  });
}

}  // namespace dmkcm::api
