#include "propspace/infer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace propspace {

const char* loss_variant_name(LossVariant variant) {
  switch (variant) {
    case LossVariant::cosine_with_sigmoid: return "cos-sig";
    case LossVariant::cosine_without_sigmoid: return "cos";
    case LossVariant::binary_cross_entropy: return "bce";
  }
  return "?";
}

LossVariant loss_variant_from_name(std::string_view name) {
  if (name == "cos-sig") return LossVariant::cosine_with_sigmoid;
  if (name == "cos") return LossVariant::cosine_without_sigmoid;
  if (name == "bce") return LossVariant::binary_cross_entropy;
  fail(errc::precondition,
       "unknown loss variant \"" + std::string(name) + "\" (cos-sig|cos|bce)");
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

PropertyLogits property_logits(std::span<const double> pixel_embedding,
                               const Matrix& bank, const LogitConfig& config) {
  if (config.temperature <= 0.0) {
    fail(errc::non_positive_temperature,
         "temperature must be positive, got " + std::to_string(config.temperature));
  }
  if (pixel_embedding.size() != bank.cols) {
    fail(errc::dimension_mismatch,
         "pixel embedding has dim " + std::to_string(pixel_embedding.size()) +
             ", bank has dim " + std::to_string(bank.cols));
  }
  const std::vector<double> unit = l2_normalize(pixel_embedding);

  PropertyLogits out;
  out.values.resize(bank.rows);
  const bool use_sigmoid =
      config.loss_variant != LossVariant::cosine_without_sigmoid;
  for (std::size_t m = 0; m < bank.rows; ++m) {
    const auto row = bank.row(m);
    double dot = 0.0;
    for (std::size_t j = 0; j < unit.size(); ++j) dot += unit[j] * row[j];
    const double raw = std::clamp(dot, -1.0, 1.0) / config.temperature;
    out.values[m] = use_sigmoid ? sigmoid(raw) : raw;
  }
  out.activated = use_sigmoid;
  return out;
}

std::size_t classify(const PropertyLogits& logits, const PropertySpace& space) {
  const std::size_t n = space.category_count();
  const std::size_t m = space.property_count();
  if (logits.values.size() != m) {
    fail(errc::dimension_mismatch,
         "logits have " + std::to_string(logits.values.size()) +
             " values, space has " + std::to_string(m) + " properties");
  }
  double z_norm_sq = 0.0;
  for (double v : logits.values) z_norm_sq += v * v;
  if (z_norm_sq == 0.0) fail(errc::zero_logits, "all property logits are zero");

  // cos(y_j, z) = sum_{m in y_j} z_m / (sqrt(|y_j|) * |z|); |z| is shared and
  // drops out of the argmax.
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    double dot = 0.0;
    std::size_t ones = 0;
    for (std::size_t p = 0; p < m; ++p) {
      if (space.labels[j][p]) {
        dot += logits.values[p];
        ++ones;
      }
    }
    const double score = dot / std::sqrt(static_cast<double>(ones));
    if (score > best_score) {
      best_score = score;
      best = j;
    }
  }
  return best;
}

double loss(const PropertyLogits& logits, std::span<const std::uint8_t> label_row,
            const LogitConfig& config) {
  const std::size_t m = label_row.size();
  if (logits.values.size() != m) {
    fail(errc::dimension_mismatch,
         "logits have " + std::to_string(logits.values.size()) +
             " values, label row has " + std::to_string(m));
  }
  std::size_t ones = 0;
  for (std::uint8_t y : label_row) ones += (y != 0);
  if (ones == 0) fail(errc::empty_label, "label row has no active properties");

  switch (config.loss_variant) {
    case LossVariant::cosine_with_sigmoid:
    case LossVariant::cosine_without_sigmoid: {
      double dot = 0.0, z_norm_sq = 0.0;
      for (std::size_t p = 0; p < m; ++p) {
        z_norm_sq += logits.values[p] * logits.values[p];
        if (label_row[p]) dot += logits.values[p];
      }
      if (z_norm_sq == 0.0) fail(errc::zero_logits, "all property logits are zero");
      const double cosine =
          std::clamp(dot / (std::sqrt(static_cast<double>(ones)) *
                            std::sqrt(z_norm_sq)),
                     -1.0, 1.0);
      return 1.0 - cosine;
    }
    case LossVariant::binary_cross_entropy: {
      if (!logits.activated) {
        fail(errc::variant_mismatch,
             "binary cross-entropy needs sigmoid-activated logits");
      }
      const double eps = config.bce_epsilon;
      if (!(eps > 0.0 && eps < 0.5)) {
        fail(errc::precondition, "bce_epsilon must be in (0, 0.5)");
      }
      double total = 0.0;
      for (std::size_t p = 0; p < m; ++p) {
        const double c = std::clamp(logits.values[p], eps, 1.0 - eps);
        total += label_row[p] ? -std::log(c) : -std::log(1.0 - c);
      }
      return total / static_cast<double>(m);
    }
  }
  fail(errc::precondition, "unknown loss variant");
}

LabelMap classify_map(const LogitMap& map, const PropertySpace& space,
                      const LabelMap* ignore_mask) {
  if (map.channels != space.property_count()) {
    fail(errc::shape_mismatch,
         "logit map has " + std::to_string(map.channels) +
             " channels, space has " + std::to_string(space.property_count()) +
             " properties");
  }
  if (ignore_mask != nullptr && (ignore_mask->height != map.height ||
                                 ignore_mask->width != map.width)) {
    fail(errc::shape_mismatch, "ignore mask shape differs from logit map");
  }

  LabelMap out(map.height, map.width, 0);
  PropertyLogits pixel;
  pixel.activated = map.activated;
  for (std::size_t y = 0; y < map.height; ++y) {
    for (std::size_t x = 0; x < map.width; ++x) {
      if (ignore_mask != nullptr && ignore_mask->at(y, x) == kIgnoreLabel) {
        out.at(y, x) = kIgnoreLabel;
        continue;
      }
      const auto values = map.pixel(y, x);
      pixel.values.assign(values.begin(), values.end());
      try {
        out.at(y, x) = static_cast<std::uint16_t>(classify(pixel, space));
      } catch (const Error& e) {
        fail(e.code(), "pixel (" + std::to_string(y) + ", " + std::to_string(x) +
                           "): " + e.what());
      }
    }
  }
  return out;
}

}  // namespace propspace
