#include "propspace/embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <unordered_map>

#include <json.hpp>

#include "http_util.hpp"
#include "propspace/binio.hpp"
#include "propspace/rng.hpp"

namespace propspace {

double l2_norm(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

std::vector<double> l2_normalize(std::span<const double> v) {
  const double norm = l2_norm(v);
  if (norm == 0.0) fail(errc::zero_vector, "cannot normalize a zero vector");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= norm;
  return out;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    fail(errc::dimension_mismatch, "vectors have lengths " +
                                       std::to_string(u.size()) + " and " +
                                       std::to_string(v.size()));
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) {
    fail(errc::zero_vector, "cosine similarity needs nonzero vectors");
  }
  const double value = dot / (std::sqrt(nu) * std::sqrt(nv));
  return std::clamp(value, -1.0, 1.0);
}

std::vector<double> hash_embed(std::string_view text, std::size_t dim,
                               std::uint64_t seed) {
  if (dim < 8) fail(errc::precondition, "hash embedder requires dim >= 8");

  // Signed 3-gram feature hashing. In the rare event every bucket cancels,
  // bump the salt and rehash; the result stays a pure function of
  // (text, dim, seed).
  for (std::uint64_t salt = 0;; ++salt) {
    const std::uint64_t state = binio::kFnvOffset ^ mix_seed(seed, salt);
    std::vector<double> v(dim, 0.0);
    const auto add_gram = [&](std::string_view gram) {
      const std::uint64_t h = binio::fnv1a64(gram, state);
      const std::size_t bucket = static_cast<std::size_t>(h % dim);
      v[bucket] += (h >> 63) ? 1.0 : -1.0;
    };
    if (text.size() < 3) {
      add_gram(text);
    } else {
      for (std::size_t i = 0; i + 3 <= text.size(); ++i) {
        add_gram(text.substr(i, 3));
      }
    }
    const double norm = l2_norm(v);
    if (norm > 0.0) {
      for (double& x : v) x /= norm;
      return v;
    }
  }
}

std::string EmbedderConfig::provenance_id() const {
  switch (kind) {
    case EmbedderKind::hash:
      return "hash3gram:d=" + std::to_string(dim) +
             ":seed=" + std::to_string(seed);
    case EmbedderKind::service:
      return "service:" + model + ":d=" + std::to_string(dim);
    case EmbedderKind::cache_only:
      return "cache:" + store_path;
  }
  return "unknown";
}

namespace {

void quantize_f32(std::span<double> v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

std::vector<std::vector<double>> fetch_service_embeddings(
    const EmbedderConfig& config, const std::vector<std::string>& texts) {
  detail::HttpPostConfig post;
  post.endpoint = config.endpoint;
  post.credential_env = config.credential_env;
  post.max_attempts = config.max_attempts;
  post.retry_base_delay_ms = config.retry_base_delay_ms;
  post.timeout_s = config.timeout_s;

  std::vector<std::vector<double>> out;
  out.reserve(texts.size());

  for (std::size_t begin = 0; begin < texts.size();
       begin += config.batch_size) {
    const std::size_t end = std::min(texts.size(), begin + config.batch_size);
    nlohmann::json body;
    body["model"] = config.model;
    body["input"] = std::vector<std::string>(texts.begin() + begin,
                                             texts.begin() + end);
    const nlohmann::json res = detail::post_json(post, body);

    nlohmann::json vectors = nlohmann::json::array();
    if (res.contains("data") && res["data"].is_array()) {
      for (const auto& item : res["data"]) {
        if (!item.contains("embedding")) {
          fail(errc::service_error, "embedding response item lacks 'embedding'");
        }
        vectors.push_back(item["embedding"]);
      }
    } else if (res.contains("embeddings") && res["embeddings"].is_array()) {
      vectors = res["embeddings"];
    } else {
      fail(errc::service_error, "unrecognized embedding response shape");
    }
    if (vectors.size() != end - begin) {
      fail(errc::service_error,
           "embedding response has " + std::to_string(vectors.size()) +
               " vectors for " + std::to_string(end - begin) + " inputs");
    }
    for (const auto& vec : vectors) {
      if (!vec.is_array() || vec.size() != config.dim) {
        fail(errc::dimension_mismatch,
             "service returned a " + std::to_string(vec.size()) +
                 "-dim vector, expected " + std::to_string(config.dim));
      }
      std::vector<double> row;
      row.reserve(config.dim);
      for (const auto& x : vec) {
        if (!x.is_number()) {
          fail(errc::service_error, "embedding vector has a non-numeric entry");
        }
        row.push_back(x.get<double>());
      }
      for (double x : row) {
        if (!std::isfinite(x)) {
          fail(errc::service_error, "embedding vector has a non-finite entry");
        }
      }
      out.push_back(std::move(row));
    }
  }
  return out;
}

}  // namespace

EmbeddingMatrix embed_corpus(const EmbedderConfig& config,
                             const DescriptionCorpus& corpus) {
  const std::size_t total = corpus.description_count();
  if (total == 0) fail(errc::empty_corpus, "corpus has no descriptions");
  if (config.dim == 0) fail(errc::precondition, "embedding dim must be positive");

  // Gather all descriptions in global-index order with their content hashes.
  std::vector<std::string> texts;
  std::vector<std::uint64_t> hashes;
  texts.reserve(total);
  hashes.reserve(total);
  for (const auto& entry : corpus.entries) {
    for (const auto& d : entry.descriptions) {
      texts.push_back(d);
      hashes.push_back(binio::fnv1a64(d));
    }
  }

  // Load the store when present; it doubles as the service cache.
  EmbeddingMatrix store;
  bool have_store = false;
  if (!config.store_path.empty() &&
      std::filesystem::exists(config.store_path)) {
    store = load_embeddings(config.store_path);
    have_store = true;
    if (store.dim() != config.dim) {
      fail(errc::dimension_mismatch,
           "embedding store " + config.store_path + " has dim " +
               std::to_string(store.dim()) + ", expected " +
               std::to_string(config.dim));
    }
    if (!store.normalized) {
      fail(errc::precondition, "embedding store rows are not normalized");
    }
    if (config.kind != EmbedderKind::cache_only &&
        store.provenance != config.provenance_id()) {
      fail(errc::precondition, "embedding store was built by \"" +
                                   store.provenance + "\", expected \"" +
                                   config.provenance_id() + "\"");
    }
  } else if (config.kind == EmbedderKind::cache_only) {
    fail(errc::io_error, "cache-only embedder needs an existing store at \"" +
                             config.store_path + "\"");
  }

  std::unordered_map<std::uint64_t, std::size_t> row_of_hash;
  for (std::size_t i = 0; i < store.row_hashes.size(); ++i) {
    row_of_hash.emplace(store.row_hashes[i], i);
  }

  // Unique texts not covered by the store, in first-appearance order.
  std::vector<std::size_t> missing;  // indices into texts
  {
    std::unordered_map<std::uint64_t, bool> queued;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (row_of_hash.count(hashes[i]) || queued.count(hashes[i])) continue;
      queued.emplace(hashes[i], true);
      missing.push_back(i);
    }
  }

  bool store_grew = false;
  if (!missing.empty()) {
    std::vector<std::vector<double>> fresh;
    switch (config.kind) {
      case EmbedderKind::hash: {
        fresh.reserve(missing.size());
        for (std::size_t idx : missing) {
          fresh.push_back(hash_embed(texts[idx], config.dim, config.seed));
        }
        break;
      }
      case EmbedderKind::service: {
        std::vector<std::string> wanted;
        wanted.reserve(missing.size());
        for (std::size_t idx : missing) wanted.push_back(texts[idx]);
        fresh = fetch_service_embeddings(config, wanted);
        break;
      }
      case EmbedderKind::cache_only: {
        fail(errc::io_error,
             "embedding store is missing " + std::to_string(missing.size()) +
                 " descriptions and the embedder is cache-only");
      }
    }

    if (store.values.cols == 0) {
      store.values.cols = config.dim;
      store.normalized = true;
      store.provenance = config.provenance_id();
    }
    for (std::size_t j = 0; j < missing.size(); ++j) {
      std::vector<double> row = l2_normalize(fresh[j]);
      quantize_f32(row);
      row_of_hash.emplace(hashes[missing[j]], store.values.rows);
      store.values.data.insert(store.values.data.end(), row.begin(), row.end());
      store.values.rows += 1;
      store.row_hashes.push_back(hashes[missing[j]]);
    }
    store_grew = true;
  }

  if (!config.store_path.empty() && (store_grew || !have_store)) {
    save_embeddings(config.store_path, store);
  }

  EmbeddingMatrix out;
  out.values = Matrix(total, config.dim);
  out.normalized = true;
  out.provenance = (config.kind == EmbedderKind::cache_only)
                       ? store.provenance
                       : config.provenance_id();
  out.row_hashes = hashes;
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t src = row_of_hash.at(hashes[i]);
    auto dst = out.values.row(i);
    auto from = store.values.row(src);
    std::copy(from.begin(), from.end(), dst.begin());
  }
  return out;
}

void save_embeddings(const std::string& path, const EmbeddingMatrix& matrix) {
  std::vector<std::uint8_t> buf;
  binio::put_bytes(buf, "PLEM", 4);
  binio::put_u32(buf, 1);
  binio::put_u32(buf, static_cast<std::uint32_t>(matrix.dim()));
  binio::put_u64(buf, matrix.count());
  for (double x : matrix.values.data) {
    binio::put_f32(buf, static_cast<float>(x));
  }

  nlohmann::json footer;
  footer["normalized"] = matrix.normalized;
  footer["provenance"] = matrix.provenance;
  nlohmann::json hashes = nlohmann::json::array();
  for (std::uint64_t h : matrix.row_hashes) hashes.push_back(binio::hex64(h));
  footer["row_hashes"] = std::move(hashes);
  const std::string footer_text = footer.dump();
  binio::put_bytes(buf, footer_text.data(), footer_text.size());

  binio::write_file(path, buf);
}

EmbeddingMatrix load_embeddings(const std::string& path) {
  const auto bytes = binio::read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "PLEM", 4) != 0) {
    fail(errc::format_error, path + " is not a PLEM embedding store");
  }
  binio::Reader reader(bytes);
  reader.bytes(4);
  const std::uint32_t version = reader.u32();
  if (version != 1) {
    fail(errc::format_error,
         "unsupported PLEM version " + std::to_string(version));
  }
  const std::uint32_t dim = reader.u32();
  const std::uint64_t rows = reader.u64();
  if (dim == 0) fail(errc::format_error, "PLEM store has zero dim");
  const std::uint64_t payload = rows * static_cast<std::uint64_t>(dim) * 4;
  if (reader.remaining() < payload) {
    fail(errc::corrupt_payload, "PLEM store is truncated");
  }

  EmbeddingMatrix out;
  out.values = Matrix(rows, dim);
  for (double& x : out.values.data) {
    x = static_cast<double>(reader.f32());
    if (!std::isfinite(x)) {
      fail(errc::corrupt_payload, "PLEM store has non-finite values");
    }
  }

  nlohmann::json footer;
  try {
    const auto rest = reader.bytes(reader.remaining());
    footer = nlohmann::json::parse(
        std::string_view(reinterpret_cast<const char*>(rest.data()), rest.size()));
  } catch (const nlohmann::json::exception&) {
    fail(errc::corrupt_payload, "PLEM store footer is not valid JSON");
  }
  if (!footer.contains("normalized") || !footer.contains("provenance") ||
      !footer.contains("row_hashes") || !footer["row_hashes"].is_array() ||
      footer["row_hashes"].size() != rows) {
    fail(errc::corrupt_payload, "PLEM store footer is incomplete");
  }
  out.normalized = footer["normalized"].get<bool>();
  out.provenance = footer["provenance"].get<std::string>();
  out.row_hashes.reserve(rows);
  for (const auto& h : footer["row_hashes"]) {
    out.row_hashes.push_back(
        std::stoull(h.get<std::string>(), nullptr, 16));
  }
  return out;
}

}  // namespace propspace
