#pragma once

#include <cstdlib>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cogs/cognition.hpp"

namespace cogs {

inline Completion HttpChatProvider::complete_impl(const std::string& prompt) {
    nlohmann::json body;
    body["model"] = cfg_.model;
    body["temperature"] = cfg_.temperature;
    body["max_tokens"] = cfg_.max_output_tokens;
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});

    httplib::Client client(base_);
    const auto timeout_s = static_cast<time_t>(cfg_.timeout_seconds);
    const auto timeout_us =
        static_cast<time_t>((cfg_.timeout_seconds - static_cast<double>(timeout_s)) * 1e6);
    client.set_connection_timeout(timeout_s, timeout_us);
    client.set_read_timeout(timeout_s, timeout_us);
    client.set_write_timeout(timeout_s, timeout_us);

    httplib::Headers headers;
    if (!cfg_.api_key_env.empty()) {
        if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res)
        return {false, "", "http request failed: " + httplib::to_string(res.error()), true};
    if (res->status == 429 || res->status >= 500)
        return {false, "", "http status " + std::to_string(res->status), true};
    if (res->status != 200)
        return {false, "", "http status " + std::to_string(res->status) + ": " + res->body, false};

    try {
        auto j = nlohmann::json::parse(res->body);
        return {true, j.at("choices").at(0).at("message").at("content").get<std::string>(), "",
                false};
    } catch (const nlohmann::json::exception& e) {
        return {false, "", std::string("unexpected chat-completions response: ") + e.what(), false};
    }
}

}  // namespace cogs
