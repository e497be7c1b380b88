#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "propspace/cluster.hpp"
#include "propspace/corpus.hpp"
#include "propspace/embed.hpp"
#include "propspace/matrix.hpp"

namespace propspace {

struct SpaceMeta {
  std::string embedder_id;
  std::uint64_t seed = 0;
  std::size_t cluster_count = 0;  // M
  std::size_t dim = 0;            // d
  // 0 means "unset"; the CLI leaves it 0 so rebuilt artifacts stay
  // byte-identical.
  std::int64_t build_unix_time = 0;

  bool operator==(const SpaceMeta&) const = default;
};

struct PropertyMember {
  std::uint32_t category = 0;
  std::uint32_t global_index = 0;  // description index in corpus order
  std::string description;

  bool operator==(const PropertyMember&) const = default;
};

// The built label-space artifact: multi-hot labels Y (one row per category,
// one column per property), the normalized property embedding bank E, the
// raw cluster centroids the assignments came from, and full membership
// provenance.
struct PropertySpace {
  std::vector<std::string> category_names;               // N
  std::vector<std::vector<std::uint8_t>> labels;         // Y, N rows of M 0/1
  Matrix bank;                                           // M x d, unit rows
  Matrix centroids;                                      // M x d, raw
  std::vector<std::vector<PropertyMember>> membership;   // per property
  std::vector<std::uint32_t> exemplar;  // per property: index into membership
  SpaceMeta meta;

  std::size_t category_count() const { return category_names.size(); }
  std::size_t property_count() const { return membership.size(); }

  bool operator==(const PropertySpace&) const = default;
};

PropertySpace build_space(const DescriptionCorpus& corpus,
                          const EmbeddingMatrix& embeddings,
                          const Clustering& clustering);

struct SimilarPair {
  std::uint32_t a = 0;
  std::uint32_t b = 0;       // a < b
  double similarity = 0.0;   // cosine of the two binary label rows
  std::vector<std::uint32_t> shared;
  std::vector<std::uint32_t> a_only;
  std::vector<std::uint32_t> b_only;
};

// All unordered category pairs whose label-row cosine is strictly greater
// than the threshold, sorted by descending similarity then (a, b).
std::vector<SimilarPair> similar_pairs(const PropertySpace& space,
                                       double threshold = 0.5);

// Multi-hot row for a category unseen at build time: each description
// embedding lands in its nearest cluster. max_distance <= 0 disables the
// cutoff. Does not mutate the space.
std::vector<std::uint8_t> extend_category(const PropertySpace& space,
                                          const std::string& name,
                                          const Matrix& description_embeddings,
                                          double max_distance = 0.0);

struct PropertyReport {
  std::size_t property = 0;
  std::string exemplar;  // member description nearest the cluster centroid
  std::vector<std::string> categories;  // unique, corpus order
};

PropertyReport property_report(const PropertySpace& space, std::size_t property);

// Categories sharing an identical label row are legal but make
// classification between them ambiguous; surface them.
std::vector<std::string> duplicate_label_warnings(const PropertySpace& space);

// PLSP container: "PLSP" | u32 version | u64 header length | JSON header
// (names, meta, membership, exemplar) | Y packed bits row-major | bank E
// float32 | raw centroids float32 | trailing fnv1a64 checksum of everything
// before it. Round-trips bit-exactly.
void save_space(const std::string& path, const PropertySpace& space);
PropertySpace load_space(const std::string& path);

std::string render_pairs_markdown(const PropertySpace& space,
                                  std::span<const SimilarPair> pairs,
                                  double threshold);
std::string render_property_table_markdown(const PropertySpace& space);

}  // namespace propspace
