#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "propspace/corpus.hpp"
#include "propspace/matrix.hpp"

namespace propspace {

// Embedding dimensions of the supported off-the-shelf sentence embedding
// model families (small/base variants).
inline constexpr std::array<std::size_t, 2> kStandardEmbeddingDims{384, 768};

double l2_norm(std::span<const double> v);

// Unit-direction copy of v. Throws ZeroVector when the norm is zero.
std::vector<double> l2_normalize(std::span<const double> v);

// (u.v)/(|u||v|), clamped to [-1, 1] to absorb rounding.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

// Deterministic offline embedder: signed feature hashing of character
// 3-grams, L2-normalized. Exists so the whole pipeline runs with no network
// or model weights; never meant for real label spaces.
std::vector<double> hash_embed(std::string_view text, std::size_t dim,
                               std::uint64_t seed);

struct EmbeddingMatrix {
  Matrix values;  // D x d, one row per description in corpus order
  bool normalized = false;
  std::string provenance;
  std::vector<std::uint64_t> row_hashes;  // fnv1a64 of each source text

  std::size_t count() const { return values.rows; }
  std::size_t dim() const { return values.cols; }

  bool operator==(const EmbeddingMatrix&) const = default;
};

enum class EmbedderKind { service, cache_only, hash };

struct EmbedderConfig {
  EmbedderKind kind = EmbedderKind::hash;
  std::size_t dim = 384;
  std::uint64_t seed = 0;   // hash embedder only
  std::string store_path;   // on-disk PLEM cache; required for cache_only

  // Service settings (OpenAI-style embeddings endpoint).
  std::string endpoint;
  std::string model;
  std::string credential_env;  // name of the env var holding the key
  std::size_t batch_size = 64;
  int max_attempts = 3;
  int retry_base_delay_ms = 1000;
  int timeout_s = 60;

  std::string provenance_id() const;
};

// One row per corpus description, in global-index order. Rows are
// L2-normalized and quantized to float32 so a cache round trip reproduces
// the exact same matrix. Cached rows are keyed by content hash of the text;
// a warm cache needs zero service calls.
EmbeddingMatrix embed_corpus(const EmbedderConfig& config,
                             const DescriptionCorpus& corpus);

// PLEM container: "PLEM" | u32 version | u32 dim | u64 rows |
// rows*dim float32 | JSON footer {provenance, normalized, row_hashes}.
void save_embeddings(const std::string& path, const EmbeddingMatrix& matrix);
EmbeddingMatrix load_embeddings(const std::string& path);

}  // namespace propspace
