#include "propspace/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "propspace/binio.hpp"

namespace propspace {

std::string trim(std::string_view text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) {
    ++begin;
  }
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) {
    --end;
  }
  return std::string(text.substr(begin, end - begin));
}

std::size_t DescriptionCorpus::description_count() const {
  std::size_t total = 0;
  for (const auto& entry : entries) total += entry.descriptions.size();
  return total;
}

DescriptionCorpus::Location DescriptionCorpus::locate(std::size_t global_index) const {
  std::size_t remaining = global_index;
  for (std::size_t c = 0; c < entries.size(); ++c) {
    if (remaining < entries[c].descriptions.size()) {
      return {c, remaining};
    }
    remaining -= entries[c].descriptions.size();
  }
  fail(errc::index_out_of_range,
       "description index " + std::to_string(global_index) + " out of range");
}

std::size_t DescriptionCorpus::global_index(std::size_t category,
                                            std::size_t local) const {
  if (category >= entries.size() ||
      local >= entries[category].descriptions.size()) {
    fail(errc::index_out_of_range, "no description (" + std::to_string(category) +
                                       ", " + std::to_string(local) + ")");
  }
  std::size_t base = 0;
  for (std::size_t c = 0; c < category; ++c) base += entries[c].descriptions.size();
  return base + local;
}

const std::string& DescriptionCorpus::description(std::size_t global_index) const {
  const Location loc = locate(global_index);
  return entries[loc.category].descriptions[loc.local];
}

std::vector<std::size_t> category_offsets(const DescriptionCorpus& corpus) {
  std::vector<std::size_t> offsets;
  offsets.reserve(corpus.entries.size() + 1);
  std::size_t total = 0;
  for (const auto& entry : corpus.entries) {
    offsets.push_back(total);
    total += entry.descriptions.size();
  }
  offsets.push_back(total);
  return offsets;
}

CorpusSummary validate_corpus(DescriptionCorpus& corpus) {
  if (corpus.entries.empty()) fail(errc::empty_corpus, "corpus has no categories");

  CorpusSummary summary;
  std::unordered_set<std::string> seen_names;
  for (auto& entry : corpus.entries) {
    entry.name = trim(entry.name);
    if (entry.name.empty()) {
      fail(errc::empty_category_name, "category name is empty");
    }
    if (!seen_names.insert(entry.name).second) {
      fail(errc::duplicate_category, entry.name);
    }
    std::vector<std::string> kept;
    std::unordered_set<std::string> seen_desc;
    for (const auto& raw : entry.descriptions) {
      std::string text = trim(raw);
      if (text.empty()) {
        fail(errc::precondition,
             "category \"" + entry.name + "\" has an empty description");
      }
      if (!seen_desc.insert(text).second) {
        summary.warnings.push_back("category \"" + entry.name +
                                   "\": removed duplicate description \"" +
                                   text + "\"");
        continue;
      }
      kept.push_back(std::move(text));
    }
    if (kept.empty()) {
      fail(errc::precondition,
           "category \"" + entry.name + "\" has no descriptions");
    }
    entry.descriptions = std::move(kept);
  }
  summary.categories = corpus.category_count();
  summary.descriptions = corpus.description_count();
  return summary;
}

PromptTemplate PromptTemplate::defaults() {
  PromptTemplate tmpl;
  tmpl.axes = {"shape",   "orientation",           "material",
               "texture", "characteristic colors", "common associated elements"};
  tmpl.framing =
      "You are labeling visual categories for a semantic segmentation "
      "dataset. List the distinctive visual properties of \"{category}\" as "
      "short standalone phrases, covering these attributes: {axes}. Answer "
      "with only a bracketed list of double-quoted phrases, for example "
      "[\"slender body\", \"covered in fur\"], and no other text.";
  return tmpl;
}

namespace {

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t count = 0;
  std::size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string_view::npos) {
    ++count;
    pos += needle.size();
  }
  return count;
}

void replace_first(std::string& text, std::string_view needle,
                   std::string_view value) {
  const std::size_t pos = text.find(needle);
  if (pos != std::string::npos) {
    text.replace(pos, needle.size(), value);
  }
}

}  // namespace

std::string render_prompt(const PromptTemplate& tmpl, std::string_view category) {
  const std::string name = trim(category);
  if (name.empty()) fail(errc::empty_category_name, "category is empty");
  if (tmpl.axes.empty()) {
    fail(errc::precondition, "prompt template has no attribute axes");
  }
  if (count_occurrences(tmpl.framing, "{category}") != 1) {
    fail(errc::precondition,
         "prompt template must contain {category} exactly once");
  }
  if (count_occurrences(tmpl.framing, "{axes}") > 1) {
    fail(errc::precondition,
         "prompt template may contain {axes} at most once");
  }

  std::string joined;
  for (std::size_t i = 0; i < tmpl.axes.size(); ++i) {
    if (i > 0) joined += "; ";
    joined += tmpl.axes[i];
  }

  std::string out = tmpl.framing;
  replace_first(out, "{category}", name);
  if (out.find("{axes}") != std::string::npos) {
    replace_first(out, "{axes}", joined);
  } else {
    out += " Cover these attributes: " + joined + ".";
  }
  return out;
}

namespace {

[[noreturn]] void parse_fail(std::size_t pos, const std::string& reason) {
  fail(errc::parse_error, "at byte " + std::to_string(pos) + ": " + reason);
}

}  // namespace

std::vector<std::string> parse_description_list(std::string_view text) {
  std::size_t pos = 0;
  const auto skip_ws = [&] {
    while (pos < text.size() &&
           std::isspace(static_cast<unsigned char>(text[pos]))) {
      ++pos;
    }
  };

  skip_ws();
  if (pos >= text.size() || text[pos] != '[') {
    parse_fail(pos, "expected '['");
  }
  ++pos;

  std::vector<std::string> items;
  skip_ws();
  if (pos < text.size() && text[pos] == ']') {
    ++pos;
  } else {
    while (true) {
      skip_ws();
      if (pos >= text.size() || text[pos] != '"') {
        parse_fail(pos, "expected '\"' to start a string");
      }
      ++pos;
      std::string item;
      while (true) {
        if (pos >= text.size()) parse_fail(pos, "unterminated string");
        const char c = text[pos];
        if (c == '"') {
          ++pos;
          break;
        }
        if (c == '\\') {
          ++pos;
          if (pos >= text.size()) parse_fail(pos, "dangling escape");
          const char esc = text[pos];
          if (esc != '"' && esc != '\\') {
            parse_fail(pos, std::string("unsupported escape '\\") + esc + "'");
          }
          item.push_back(esc);
          ++pos;
          continue;
        }
        item.push_back(c);
        ++pos;
      }
      items.push_back(std::move(item));
      skip_ws();
      if (pos >= text.size()) parse_fail(pos, "expected ',' or ']'");
      if (text[pos] == ',') {
        ++pos;
        continue;
      }
      if (text[pos] == ']') {
        ++pos;
        break;
      }
      parse_fail(pos, "expected ',' or ']'");
    }
  }
  skip_ws();
  if (pos != text.size()) parse_fail(pos, "trailing content after ']'");
  if (items.empty()) fail(errc::empty_list, "list has no items");
  return items;
}

std::string serialize_description_list(std::span<const std::string> items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ", ";
    out += '"';
    for (char c : items[i]) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    out += '"';
  }
  out += ']';
  return out;
}

DescriptionCorpus corpus_from_json_text(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(errc::parse_error, std::string("corpus json: ") + e.what());
  }
  if (!doc.is_array()) fail(errc::parse_error, "corpus json: expected an array");

  DescriptionCorpus corpus;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("name") ||
        !item.contains("descriptions") || !item["name"].is_string() ||
        !item["descriptions"].is_array()) {
      fail(errc::parse_error,
           "corpus json: entries must be {\"name\", \"descriptions\"}");
    }
    CategoryEntry entry;
    entry.name = item["name"].get<std::string>();
    for (const auto& d : item["descriptions"]) {
      if (!d.is_string()) {
        fail(errc::parse_error, "corpus json: descriptions must be strings");
      }
      entry.descriptions.push_back(d.get<std::string>());
    }
    corpus.entries.push_back(std::move(entry));
  }
  return corpus;
}

std::string corpus_to_json_text(const DescriptionCorpus& corpus) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& entry : corpus.entries) {
    nlohmann::json item;
    item["name"] = entry.name;
    item["descriptions"] = entry.descriptions;
    doc.push_back(std::move(item));
  }
  return doc.dump(2) + "\n";
}

DescriptionCorpus load_corpus_json(const std::string& path) {
  const auto bytes = binio::read_file(path);
  return corpus_from_json_text(
      std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void save_corpus_json(const std::string& path, const DescriptionCorpus& corpus) {
  const std::string text = corpus_to_json_text(corpus);
  binio::write_file(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()),
                              text.size()));
}

}  // namespace propspace
