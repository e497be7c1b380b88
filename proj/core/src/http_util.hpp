#pragma once

#include <string>

#include <json.hpp>

namespace propspace::detail {

struct HttpPostConfig {
  std::string endpoint;        // full URL, e.g. http://host:port/v1/...
  std::string credential_env;  // env var with the bearer token, optional
  int max_attempts = 3;
  int retry_base_delay_ms = 1000;
  int timeout_s = 60;
};

// POSTs `body` as application/json and returns the parsed JSON response.
// Retries transient failures (transport errors, non-2xx statuses, unparsable
// bodies) with exponential backoff, then throws Error(service_error).
nlohmann::json post_json(const HttpPostConfig& config,
                         const nlohmann::json& body);

}  // namespace propspace::detail
