#include "propspace/space.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "propspace/binio.hpp"

namespace propspace {

namespace {

double sq_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return sum;
}

void quantize_f32(std::span<double> v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

void check_space(const PropertySpace& space) {
  const std::size_t n = space.category_count();
  const std::size_t m = space.property_count();
  if (n == 0 || m == 0) fail(errc::format_error, "space has no categories or properties");
  if (space.labels.size() != n || space.bank.rows != m ||
      space.centroids.rows != m || space.exemplar.size() != m ||
      space.bank.cols != space.meta.dim ||
      space.centroids.cols != space.meta.dim) {
    fail(errc::format_error, "space fields have inconsistent shapes");
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (space.labels[j].size() != m) {
      fail(errc::format_error, "label row has wrong length");
    }
  }

  // Y[j][p] must hold exactly when a description of category j sits in
  // property p's membership list.
  std::vector<std::vector<std::uint8_t>> expected(n, std::vector<std::uint8_t>(m, 0));
  for (std::size_t p = 0; p < m; ++p) {
    if (space.membership[p].empty()) {
      fail(errc::format_error, "property " + std::to_string(p) + " has no members");
    }
    if (space.exemplar[p] >= space.membership[p].size()) {
      fail(errc::format_error, "exemplar index out of range");
    }
    for (const auto& member : space.membership[p]) {
      if (member.category >= n) {
        fail(errc::format_error, "membership names an unknown category");
      }
      expected[member.category][p] = 1;
    }
    const double norm = l2_norm(space.bank.row(p));
    if (std::abs(norm - 1.0) > 1e-6) {
      fail(errc::format_error, "bank row " + std::to_string(p) +
                                   " is not unit norm");
    }
  }
  if (expected != space.labels) {
    fail(errc::format_error, "label matrix disagrees with membership");
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (std::find(space.labels[j].begin(), space.labels[j].end(), 1) ==
        space.labels[j].end()) {
      fail(errc::format_error,
           "category \"" + space.category_names[j] + "\" has no properties");
    }
  }
}

}  // namespace

PropertySpace build_space(const DescriptionCorpus& corpus,
                          const EmbeddingMatrix& embeddings,
                          const Clustering& clustering) {
  const std::size_t total = corpus.description_count();
  const std::size_t n = corpus.category_count();
  const std::size_t m = clustering.centroids.rows;
  if (embeddings.count() != total) {
    fail(errc::shape_mismatch, "embeddings have " +
                                   std::to_string(embeddings.count()) +
                                   " rows, corpus has " + std::to_string(total) +
                                   " descriptions");
  }
  if (clustering.assignments.size() != total) {
    fail(errc::shape_mismatch, "clustering has " +
                                   std::to_string(clustering.assignments.size()) +
                                   " assignments, corpus has " +
                                   std::to_string(total) + " descriptions");
  }
  if (clustering.centroids.cols != embeddings.dim()) {
    fail(errc::shape_mismatch, "centroid dim differs from embedding dim");
  }

  PropertySpace space;
  space.category_names.reserve(n);
  for (const auto& entry : corpus.entries) space.category_names.push_back(entry.name);

  space.membership.assign(m, {});
  std::size_t global = 0;
  for (std::size_t c = 0; c < n; ++c) {
    for (const auto& text : corpus.entries[c].descriptions) {
      const std::uint32_t cluster = clustering.assignments[global];
      if (cluster >= m) fail(errc::shape_mismatch, "assignment index out of range");
      space.membership[cluster].push_back(PropertyMember{
          static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(global), text});
      ++global;
    }
  }
  for (std::size_t p = 0; p < m; ++p) {
    if (space.membership[p].empty()) {
      fail(errc::shape_mismatch,
           "cluster " + std::to_string(p) + " has no assigned descriptions");
    }
  }

  space.labels.assign(n, std::vector<std::uint8_t>(m, 0));
  for (std::size_t p = 0; p < m; ++p) {
    for (const auto& member : space.membership[p]) {
      space.labels[member.category][p] = 1;
    }
  }

  // Raw centroids keep the exact cluster geometry (for extension and
  // exemplars); the bank is their unit-norm version (for logits). Both are
  // float32-quantized so the on-disk artifact reproduces them bit-exactly.
  space.centroids = clustering.centroids;
  for (std::size_t p = 0; p < m; ++p) quantize_f32(space.centroids.row(p));
  space.bank = Matrix(m, clustering.centroids.cols);
  for (std::size_t p = 0; p < m; ++p) {
    const auto unit = l2_normalize(clustering.centroids.row(p));
    auto dst = space.bank.row(p);
    std::copy(unit.begin(), unit.end(), dst.begin());
    quantize_f32(dst);
  }

  space.exemplar.assign(m, 0);
  for (std::size_t p = 0; p < m; ++p) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < space.membership[p].size(); ++i) {
      const auto& member = space.membership[p][i];
      const double d = sq_distance(embeddings.values.row(member.global_index),
                                   space.centroids.row(p));
      if (d < best) {
        best = d;
        space.exemplar[p] = static_cast<std::uint32_t>(i);
      }
    }
  }

  space.meta.embedder_id = embeddings.provenance;
  space.meta.cluster_count = m;
  space.meta.dim = embeddings.dim();
  return space;
}

std::vector<SimilarPair> similar_pairs(const PropertySpace& space,
                                       double threshold) {
  if (threshold < 0.0 || threshold > 1.0) {
    fail(errc::precondition, "threshold must be in [0, 1]");
  }
  const std::size_t n = space.category_count();
  const std::size_t m = space.property_count();

  std::vector<double> norms(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t ones = 0;
    for (std::uint8_t v : space.labels[j]) ones += v;
    norms[j] = std::sqrt(static_cast<double>(ones));
  }

  std::vector<SimilarPair> pairs;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      SimilarPair pair;
      pair.a = static_cast<std::uint32_t>(a);
      pair.b = static_cast<std::uint32_t>(b);
      std::size_t inter = 0;
      for (std::size_t p = 0; p < m; ++p) {
        const bool in_a = space.labels[a][p] != 0;
        const bool in_b = space.labels[b][p] != 0;
        if (in_a && in_b) {
          ++inter;
          pair.shared.push_back(static_cast<std::uint32_t>(p));
        } else if (in_a) {
          pair.a_only.push_back(static_cast<std::uint32_t>(p));
        } else if (in_b) {
          pair.b_only.push_back(static_cast<std::uint32_t>(p));
        }
      }
      pair.similarity = static_cast<double>(inter) / (norms[a] * norms[b]);
      if (pair.similarity > threshold) {
        pairs.push_back(std::move(pair));
      }
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const SimilarPair& x, const SimilarPair& y) {
    if (x.similarity != y.similarity) return x.similarity > y.similarity;
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });
  return pairs;
}

std::vector<std::uint8_t> extend_category(const PropertySpace& space,
                                          const std::string& name,
                                          const Matrix& description_embeddings,
                                          double max_distance) {
  if (description_embeddings.rows == 0) {
    fail(errc::empty_descriptions,
         "category \"" + name + "\" has no description embeddings");
  }
  if (description_embeddings.cols != space.meta.dim) {
    fail(errc::dimension_mismatch,
         "description embeddings have dim " +
             std::to_string(description_embeddings.cols) + ", space has dim " +
             std::to_string(space.meta.dim));
  }
  std::vector<std::uint8_t> row(space.property_count(), 0);
  for (std::size_t i = 0; i < description_embeddings.rows; ++i) {
    const auto v = description_embeddings.row(i);
    const std::size_t p = assign_nearest(space.centroids, v);
    if (max_distance > 0.0 &&
        std::sqrt(sq_distance(v, space.centroids.row(p))) > max_distance) {
      continue;
    }
    row[p] = 1;
  }
  return row;
}

PropertyReport property_report(const PropertySpace& space, std::size_t property) {
  if (property >= space.property_count()) {
    fail(errc::index_out_of_range, "property " + std::to_string(property) +
                                       " out of range (M = " +
                                       std::to_string(space.property_count()) + ")");
  }
  PropertyReport report;
  report.property = property;
  report.exemplar = space.membership[property][space.exemplar[property]].description;
  std::vector<bool> seen(space.category_count(), false);
  for (const auto& member : space.membership[property]) {
    if (!seen[member.category]) {
      seen[member.category] = true;
      report.categories.push_back(space.category_names[member.category]);
    }
  }
  return report;
}

std::vector<std::string> duplicate_label_warnings(const PropertySpace& space) {
  std::vector<std::string> warnings;
  std::map<std::vector<std::uint8_t>, std::size_t> first;
  for (std::size_t j = 0; j < space.category_count(); ++j) {
    const auto [it, inserted] = first.emplace(space.labels[j], j);
    if (!inserted) {
      warnings.push_back("categories \"" + space.category_names[it->second] +
                         "\" and \"" + space.category_names[j] +
                         "\" share an identical label row");
    }
  }
  return warnings;
}

void save_space(const std::string& path, const PropertySpace& space) {
  const std::size_t n = space.category_count();
  const std::size_t m = space.property_count();

  nlohmann::json header;
  header["names"] = space.category_names;
  header["meta"] = {
      {"embedder", space.meta.embedder_id}, {"seed", space.meta.seed},
      {"k", space.meta.cluster_count},      {"dim", space.meta.dim},
      {"built", space.meta.build_unix_time}};
  nlohmann::json membership = nlohmann::json::array();
  for (const auto& members : space.membership) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& member : members) {
      list.push_back(nlohmann::json::array(
          {member.category, member.global_index, member.description}));
    }
    membership.push_back(std::move(list));
  }
  header["membership"] = std::move(membership);
  header["exemplar"] = space.exemplar;
  const std::string header_text = header.dump();

  std::vector<std::uint8_t> buf;
  binio::put_bytes(buf, "PLSP", 4);
  binio::put_u32(buf, 1);
  binio::put_u64(buf, header_text.size());
  binio::put_bytes(buf, header_text.data(), header_text.size());

  const std::size_t row_bytes = (m + 7) / 8;
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<std::uint8_t> packed(row_bytes, 0);
    for (std::size_t p = 0; p < m; ++p) {
      if (space.labels[j][p]) packed[p / 8] |= static_cast<std::uint8_t>(1u << (p % 8));
    }
    binio::put_bytes(buf, packed.data(), packed.size());
  }
  for (double x : space.bank.data) binio::put_f32(buf, static_cast<float>(x));
  for (double x : space.centroids.data) binio::put_f32(buf, static_cast<float>(x));

  binio::put_u64(buf, binio::fnv1a64(buf));
  binio::write_file(path, buf);
}

PropertySpace load_space(const std::string& path) {
  const auto bytes = binio::read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "PLSP", 4) != 0) {
    fail(errc::format_error, path + " is not a PLSP space artifact");
  }
  if (bytes.size() < 4 + 4 + 8 + 8) {
    fail(errc::corrupt_payload, path + " is truncated");
  }
  {
    const std::span<const std::uint8_t> body(bytes.data(), bytes.size() - 8);
    binio::Reader tail(
        std::span<const std::uint8_t>(bytes.data() + bytes.size() - 8, 8));
    if (binio::fnv1a64(body) != tail.u64()) {
      fail(errc::corrupt_payload, path + " fails its checksum");
    }
  }

  binio::Reader reader(std::span<const std::uint8_t>(bytes.data(), bytes.size() - 8));
  reader.bytes(4);
  const std::uint32_t version = reader.u32();
  if (version != 1) {
    fail(errc::format_error, "unsupported PLSP version " + std::to_string(version));
  }
  const std::uint64_t header_len = reader.u64();
  if (header_len > reader.remaining()) {
    fail(errc::corrupt_payload, "header length exceeds file size");
  }
  nlohmann::json header;
  try {
    const auto header_bytes = reader.bytes(header_len);
    header = nlohmann::json::parse(std::string_view(
        reinterpret_cast<const char*>(header_bytes.data()), header_bytes.size()));
  } catch (const nlohmann::json::exception&) {
    fail(errc::corrupt_payload, "space header is not valid JSON");
  }

  PropertySpace space;
  try {
    space.category_names = header.at("names").get<std::vector<std::string>>();
    const auto& meta = header.at("meta");
    space.meta.embedder_id = meta.at("embedder").get<std::string>();
    space.meta.seed = meta.at("seed").get<std::uint64_t>();
    space.meta.cluster_count = meta.at("k").get<std::size_t>();
    space.meta.dim = meta.at("dim").get<std::size_t>();
    space.meta.build_unix_time = meta.at("built").get<std::int64_t>();
    for (const auto& list : header.at("membership")) {
      std::vector<PropertyMember> members;
      for (const auto& item : list) {
        members.push_back(PropertyMember{item.at(0).get<std::uint32_t>(),
                                         item.at(1).get<std::uint32_t>(),
                                         item.at(2).get<std::string>()});
      }
      space.membership.push_back(std::move(members));
    }
    space.exemplar = header.at("exemplar").get<std::vector<std::uint32_t>>();
  } catch (const nlohmann::json::exception& e) {
    fail(errc::corrupt_payload, std::string("space header is incomplete: ") + e.what());
  }

  const std::size_t n = space.category_names.size();
  const std::size_t m = space.membership.size();
  const std::size_t d = space.meta.dim;
  const std::size_t row_bytes = (m + 7) / 8;
  const std::size_t expected = n * row_bytes + 2 * m * d * 4;
  if (reader.remaining() != expected) {
    fail(errc::corrupt_payload, "space payload has unexpected size");
  }

  space.labels.assign(n, std::vector<std::uint8_t>(m, 0));
  for (std::size_t j = 0; j < n; ++j) {
    const auto packed = reader.bytes(row_bytes);
    for (std::size_t p = 0; p < m; ++p) {
      space.labels[j][p] = (packed[p / 8] >> (p % 8)) & 1u;
    }
  }
  space.bank = Matrix(m, d);
  for (double& x : space.bank.data) x = static_cast<double>(reader.f32());
  space.centroids = Matrix(m, d);
  for (double& x : space.centroids.data) x = static_cast<double>(reader.f32());

  check_space(space);
  return space;
}

namespace {

std::string md_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    if (c == '|') out += "\\|";
    else if (c == '\n') out += ' ';
    else out += c;
  }
  return out;
}

std::string format_similarity(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", value);
  return buf;
}

std::string property_list(const PropertySpace& space,
                          std::span<const std::uint32_t> properties) {
  std::string out;
  for (std::size_t i = 0; i < properties.size(); ++i) {
    if (i > 0) out += "; ";
    const auto p = properties[i];
    out += md_escape(space.membership[p][space.exemplar[p]].description);
  }
  return out.empty() ? "-" : out;
}

}  // namespace

std::string render_pairs_markdown(const PropertySpace& space,
                                  std::span<const SimilarPair> pairs,
                                  double threshold) {
  std::ostringstream out;
  out << "# Similar category pairs (label cosine > "
      << format_similarity(threshold) << ")\n\n";
  if (pairs.empty()) {
    out << "No pairs above the threshold.\n";
    return out.str();
  }
  out << "| Category A | Category B | Similarity | Shared properties | A only | B only |\n";
  out << "|---|---|---|---|---|---|\n";
  for (const auto& pair : pairs) {
    out << "| " << md_escape(space.category_names[pair.a]) << " | "
        << md_escape(space.category_names[pair.b]) << " | "
        << format_similarity(pair.similarity) << " | "
        << property_list(space, pair.shared) << " | "
        << property_list(space, pair.a_only) << " | "
        << property_list(space, pair.b_only) << " |\n";
  }
  return out.str();
}

std::string render_property_table_markdown(const PropertySpace& space) {
  std::ostringstream out;
  out << "# Descriptive properties (" << space.property_count() << ")\n\n";
  out << "| # | Descriptive property | Categories with this property |\n";
  out << "|---|---|---|\n";
  for (std::size_t p = 0; p < space.property_count(); ++p) {
    const auto report = property_report(space, p);
    out << "| " << p << " | " << md_escape(report.exemplar) << " | ";
    for (std::size_t i = 0; i < report.categories.size(); ++i) {
      if (i > 0) out << ", ";
      out << md_escape(report.categories[i]);
    }
    out << " |\n";
  }
  return out.str();
}

}  // namespace propspace
