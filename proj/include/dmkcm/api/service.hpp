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

#include <string>

#include <json.hpp>

#include "dmkcm/api/session.hpp"

namespace httplib {
class Server;
}

namespace dmkcm::api {

struct HttpResponse {
  int status = 200;
  nlohmann::json body;
};

/// JSON routes under /v1:
///   GET  /v1/healthz
///   POST /v1/sessions
///   POST /v1/sessions/{id}/utterances   {"text": "..."}
///   GET  /v1/sessions/{id}
/// Errors are {"error": {"code": str, "message": str}}.
class Service {
 public:
  explicit Service(SessionManager& sessions) : sessions_(sessions) {}

  /// Routing without sockets; the HTTP server forwards here.
  HttpResponse handle(const std::string& method, const std::string& path,
                      const std::string& body) const;

  /// Registers the routes on an httplib server.
  void mount(httplib::Server& server) const;

 private:
  SessionManager& sessions_;
};

nlohmann::json error_body(const std::string& code, const std::string& message);

}  // namespace dmkcm::api
