#pragma once

// HTTP transport for the chat connector. Kept apart from llm.hpp so that
// nothing else pulls in a network client.

#include <cstdlib>
#include <string>

#include <httplib.h>

#include "ealg/llm.hpp"

namespace ealg {

class HttpTransport : public Transport {
public:
    explicit HttpTransport(ConnectorConfig cfg) : cfg_(std::move(cfg))
    {
        const std::size_t scheme = cfg_.endpoint.find("://");
        if (scheme == std::string::npos) throw ParseError("endpoint must start with http:// or https://");
        const std::size_t path = cfg_.endpoint.find('/', scheme + 3);
        origin_ = cfg_.endpoint.substr(0, path);
        path_ = path == std::string::npos ? "/" : cfg_.endpoint.substr(path);
    }

    std::string post(const std::string& body) override
    {
        httplib::Client client(origin_);
        const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
        client.set_connection_timeout(secs, 0);
        client.set_read_timeout(secs, 0);
        client.set_write_timeout(secs, 0);
        httplib::Headers headers;
        // the key is read at call time and never stored
        if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);
        auto res = client.Post(path_, headers, body, "application/json");
        if (!res) throw TransportError("request to " + origin_ + " failed: " + httplib::to_string(res.error()));
        if (res->status < 200 || res->status >= 300) throw TransportError("endpoint returned HTTP " + std::to_string(res->status));
        return res->body;
    }

private:
    ConnectorConfig cfg_;
    std::string origin_;
    std::string path_;
};

} // namespace ealg
