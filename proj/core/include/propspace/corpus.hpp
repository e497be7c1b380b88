#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "propspace/error.hpp"

namespace propspace {

std::string trim(std::string_view text);

struct CategoryEntry {
  std::string name;
  std::vector<std::string> descriptions;

  bool operator==(const CategoryEntry&) const = default;
};

// Ordered category -> description lists. Categories are indexed by position;
// descriptions carry an additional global index that runs over the whole
// corpus in (category, local) order.
struct DescriptionCorpus {
  std::vector<CategoryEntry> entries;

  std::size_t category_count() const { return entries.size(); }
  std::size_t description_count() const;

  struct Location {
    std::size_t category = 0;
    std::size_t local = 0;
  };

  Location locate(std::size_t global_index) const;
  std::size_t global_index(std::size_t category, std::size_t local) const;
  const std::string& description(std::size_t global_index) const;

  bool operator==(const DescriptionCorpus&) const = default;
};

// Offsets[i] = global index of category i's first description; back() = D.
std::vector<std::size_t> category_offsets(const DescriptionCorpus& corpus);

struct CorpusSummary {
  std::size_t categories = 0;
  std::size_t descriptions = 0;
  std::vector<std::string> warnings;
};

// Trims names and descriptions, drops exact duplicate descriptions within a
// category (warning each), rejects duplicate category names and empty input.
// Idempotent: a second pass reports no new warnings.
CorpusSummary validate_corpus(DescriptionCorpus& corpus);

struct PromptTemplate {
  // Attribute axes the model is asked to cover, in order.
  std::vector<std::string> axes;
  // Must contain "{category}" exactly once; "{axes}" marks where the axis
  // list goes (appended as a final sentence when absent).
  std::string framing;

  static PromptTemplate defaults();
};

std::string render_prompt(const PromptTemplate& tmpl, std::string_view category);

// Strict parser for the bracketed quoted-string list format the LLM is asked
// to produce: ["a", "b"]. Supports \" and \\ escapes, nothing else. Rejects
// trailing content and empty lists.
std::vector<std::string> parse_description_list(std::string_view text);
std::string serialize_description_list(std::span<const std::string> items);

// Corpus file format: JSON array of {"name": ..., "descriptions": [...]}.
DescriptionCorpus corpus_from_json_text(std::string_view text);
std::string corpus_to_json_text(const DescriptionCorpus& corpus);
DescriptionCorpus load_corpus_json(const std::string& path);
void save_corpus_json(const std::string& path, const DescriptionCorpus& corpus);

}  // namespace propspace
