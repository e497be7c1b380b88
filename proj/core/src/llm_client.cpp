#include "propspace/llm_client.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <optional>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "http_util.hpp"
#include "propspace/binio.hpp"

namespace propspace {

namespace {

using nlohmann::json;

std::string cache_key(const std::string& category, std::uint64_t prompt_hash) {
  return category + "\x1f" + binio::hex64(prompt_hash);
}

struct CacheRecord {
  bool parse_ok = false;
  std::vector<std::string> descriptions;
};

// Later records win; unparsable lines (e.g. a torn tail after a crash) are
// skipped. Failed parses are kept for audit but never reused.
std::unordered_map<std::string, CacheRecord> load_cache(const std::string& path) {
  std::unordered_map<std::string, CacheRecord> cache;
  std::ifstream in(path);
  if (!in) return cache;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception&) {
      continue;
    }
    if (!record.contains("category") || !record.contains("prompt_hash") ||
        !record.contains("parse_ok")) {
      continue;
    }
    CacheRecord entry;
    entry.parse_ok = record["parse_ok"].get<bool>();
    if (entry.parse_ok && record.contains("descriptions")) {
      for (const auto& d : record["descriptions"]) {
        entry.descriptions.push_back(d.get<std::string>());
      }
    }
    const auto key =
        cache_key(record["category"].get<std::string>(),
                  std::stoull(record["prompt_hash"].get<std::string>(), nullptr, 16));
    cache[key] = std::move(entry);
  }
  return cache;
}

std::string extract_completion_text(const json& res) {
  if (res.contains("choices") && res["choices"].is_array() &&
      !res["choices"].empty()) {
    const auto& choice = res["choices"][0];
    if (choice.contains("message") && choice["message"].contains("content") &&
        choice["message"]["content"].is_string()) {
      return choice["message"]["content"].get<std::string>();
    }
    if (choice.contains("text") && choice["text"].is_string()) {
      return choice["text"].get<std::string>();
    }
  }
  if (res.contains("completion") && res["completion"].is_string()) {
    return res["completion"].get<std::string>();
  }
  if (res.contains("content") && res["content"].is_string()) {
    return res["content"].get<std::string>();
  }
  fail(errc::service_error,
       "completion response has no recognizable text field");
}

}  // namespace

DescriptionCorpus fetch_descriptions(const LlmClientConfig& config,
                                     const std::vector<std::string>& categories,
                                     const PromptTemplate& tmpl) {
  if (categories.empty()) fail(errc::empty_corpus, "no categories requested");

  auto cache = load_cache(config.cache_path);

  std::ofstream cache_out(config.cache_path, std::ios::app);
  std::mutex cache_mutex;
  const auto append_cache = [&](const std::string& category,
                                std::uint64_t prompt_hash, const std::string& raw,
                                bool parse_ok,
                                const std::vector<std::string>* descriptions) {
    if (!cache_out) return;
    json record;
    record["category"] = category;
    record["prompt_hash"] = binio::hex64(prompt_hash);
    record["model"] = config.model;
    record["response"] = raw;
    record["parse_ok"] = parse_ok;
    if (descriptions != nullptr) record["descriptions"] = *descriptions;
    std::lock_guard<std::mutex> lock(cache_mutex);
    cache_out << record.dump() << "\n";
    cache_out.flush();
  };

  detail::HttpPostConfig post;
  post.endpoint = config.endpoint;
  post.credential_env = config.credential_env;
  post.max_attempts = config.max_attempts;
  post.retry_base_delay_ms = config.retry_base_delay_ms;
  post.timeout_s = config.timeout_s;

  struct Failure {
    errc code;
    std::string message;
  };
  std::vector<std::optional<Failure>> failures(categories.size());
  std::vector<std::vector<std::string>> results(categories.size());

  const auto fetch_one = [&](std::size_t index) {
    const std::string& category = categories[index];
    const std::string prompt = render_prompt(tmpl, category);
    const std::uint64_t prompt_hash = binio::fnv1a64(prompt);

    if (const auto hit = cache.find(cache_key(category, prompt_hash));
        hit != cache.end() && hit->second.parse_ok) {
      results[index] = hit->second.descriptions;
      return;
    }

    json body;
    body["model"] = config.model;
    body["messages"] = json::array(
        {json{{"role", "user"}, {"content", prompt}}});
    const json res = detail::post_json(post, body);
    const std::string text = extract_completion_text(res);
    try {
      auto descriptions = parse_description_list(text);
      append_cache(category, prompt_hash, text, true, &descriptions);
      results[index] = std::move(descriptions);
    } catch (const Error& e) {
      append_cache(category, prompt_hash, text, false, nullptr);
      throw Error(e.code(),
                  "category \"" + category + "\": " + std::string(e.what()));
    }
  };

  const std::size_t workers = std::min<std::size_t>(
      categories.size(),
      static_cast<std::size_t>(std::max(1, config.concurrency)));

  if (workers <= 1) {
    for (std::size_t i = 0; i < categories.size(); ++i) fetch_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        while (true) {
          const std::size_t index = next.fetch_add(1);
          if (index >= categories.size()) break;
          try {
            fetch_one(index);
          } catch (const Error& e) {
            failures[index] = Failure{e.code(), e.what()};
          } catch (const std::exception& e) {
            failures[index] = Failure{errc::service_error, e.what()};
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& failure : failures) {
      if (failure.has_value()) {
        // Strip the errc prefix Error::what() added; fail() re-adds it.
        std::string message = failure->message;
        const std::string prefix = std::string(errc_name(failure->code)) + ": ";
        if (message.rfind(prefix, 0) == 0) message = message.substr(prefix.size());
        fail(failure->code, message);
      }
    }
  }

  DescriptionCorpus corpus;
  corpus.entries.reserve(categories.size());
  for (std::size_t i = 0; i < categories.size(); ++i) {
    corpus.entries.push_back(CategoryEntry{categories[i], std::move(results[i])});
  }
  validate_corpus(corpus);
  return corpus;
}

}  // namespace propspace
