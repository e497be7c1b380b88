#include "http_util.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "propspace/error.hpp"

namespace propspace::detail {

namespace {

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // /rest, at least "/"
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    fail(errc::precondition, "endpoint must be an absolute URL: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    return {url, "/"};
  }
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string excerpt(const std::string& body) {
  constexpr std::size_t kMax = 200;
  if (body.size() <= kMax) return body;
  return body.substr(0, kMax) + "...";
}

}  // namespace

nlohmann::json post_json(const HttpPostConfig& config,
                         const nlohmann::json& body) {
  const SplitUrl url = split_url(config.endpoint);

  httplib::Headers headers;
  if (!config.credential_env.empty()) {
    const char* token = std::getenv(config.credential_env.c_str());
    if (token == nullptr || *token == '\0') {
      fail(errc::service_error, "credential environment variable " +
                                    config.credential_env + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  const std::string payload = body.dump();
  std::string last_failure = "no attempt made";

  for (int attempt = 1; attempt <= config.max_attempts; ++attempt) {
    httplib::Client client(url.base);
    client.set_connection_timeout(config.timeout_s, 0);
    client.set_read_timeout(config.timeout_s, 0);
    client.set_write_timeout(config.timeout_s, 0);

    auto res = client.Post(url.path, headers, payload, "application/json");
    if (res && res->status >= 200 && res->status < 300) {
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        last_failure =
            std::string("unparsable response body: ") + excerpt(res->body);
      }
    } else if (res) {
      last_failure = "status " + std::to_string(res->status) + ", body: " +
                     excerpt(res->body);
    } else {
      last_failure =
          std::string("transport error: ") + httplib::to_string(res.error());
    }

    if (attempt < config.max_attempts) {
      const auto delay = std::chrono::milliseconds(
          static_cast<long long>(config.retry_base_delay_ms) << (attempt - 1));
      std::this_thread::sleep_for(delay);
    }
  }

  fail(errc::service_error, "POST " + config.endpoint + " failed after " +
                                std::to_string(config.max_attempts) +
                                " attempts; last: " + last_failure);
}

}  // namespace propspace::detail
