// Copyright 2026 The Afford Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Relation provider backed by an OpenAI-style chat-completion endpoint over
// plain HTTP. Each question is sent as one user message carrying the option
// list; the reply text goes through the normal option matching.

#pragma once

#include <cstdlib>

// relations.hpp pulls in Eigen, which must precede <resolv.h> (via httplib).
#include "afford/relations.hpp"

#include <httplib.h>

namespace afford {

struct HttpProviderConfig {
  std::string url = "http://127.0.0.1:8080/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  std::string api_key_env = "AFFORD_API_KEY";
  double timeout_seconds = 30.0;
};

class HttpChatProvider : public RelationProvider {
 public:
  explicit HttpChatProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)) {
    const std::string prefix = "http://";
    if (cfg_.url.rfind(prefix, 0) != 0)
      fail(ErrorKind::provider, "http provider: only http:// URLs are supported, got '" + cfg_.url + "'");
    const std::string rest = cfg_.url.substr(prefix.size());
    const auto slash = rest.find('/');
    host_ = rest.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : rest.substr(slash);
  }

  static std::string render(const Question& q) {
    std::string msg = q.text + "\nOptions: ";
    for (std::size_t i = 0; i < q.options.size(); ++i) msg += (i ? ", " : "") + q.options[i];
    msg += q.multi_select ? "\nReply with one or more options, comma separated, and nothing else."
                          : "\nReply with exactly one option and nothing else.";
    if (q.attempt > 0) msg += "\nYour previous reply was not one of the options. Use the option text verbatim.";
    return msg;
  }

  std::string ask(const Question& q) override {
    httplib::Client cli("http://" + host_);
    const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
    cli.set_connection_timeout(secs, 0);
    cli.set_read_timeout(secs, 0);
    httplib::Headers headers;
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()))
      headers.emplace("Authorization", std::string("Bearer ") + key);
    const nlohmann::json body{
        {"model", cfg_.model},
        {"temperature", 0},
        {"messages",
         {{{"role", "system"},
           {"content", "You select answers about human-object interactions from fixed option lists."}},
          {{"role", "user"}, {"content", render(q)}}}}};
    auto res = cli.Post(path_, headers, body.dump(), "application/json");
    if (!res)
      fail(ErrorKind::provider, "http provider: " + cfg_.url + " unreachable (" +
                                    httplib::to_string(res.error()) + ")");
    if (res->status != 200)
      fail(ErrorKind::provider, "http provider: status " + std::to_string(res->status));
    try {
      const auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::provider, std::string("http provider: malformed response: ") + e.what());
    }
  }

 private:
  HttpProviderConfig cfg_;
  std::string host_;
  std::string path_;
};

}  // namespace afford
