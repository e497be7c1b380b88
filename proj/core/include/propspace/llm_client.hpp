#pragma once

#include <string>
#include <vector>

#include "propspace/corpus.hpp"

namespace propspace {

struct LlmClientConfig {
  std::string endpoint;        // chat/completions URL
  std::string model = "gpt-3.5-turbo";
  std::string credential_env;  // env var holding the API key; empty = no auth
  std::string cache_path = "descriptions_cache.jsonl";
  int max_attempts = 3;
  int retry_base_delay_ms = 1000;
  int concurrency = 4;
  int timeout_s = 60;
};

// One CategoryEntry per requested category, in request order. Every raw
// response and its parse outcome is appended to the JSONL cache keyed by
// (category, prompt hash); a warm cache answers without any network call.
DescriptionCorpus fetch_descriptions(const LlmClientConfig& config,
                                     const std::vector<std::string>& categories,
                                     const PromptTemplate& tmpl);

}  // namespace propspace
