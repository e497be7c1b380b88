#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "propspace/maps.hpp"
#include "propspace/matrix.hpp"
#include "propspace/space.hpp"

namespace propspace {

enum class LossVariant {
  cosine_with_sigmoid,     // default; best in practice
  cosine_without_sigmoid,  // raw cosine/temperature logits
  binary_cross_entropy,
};

const char* loss_variant_name(LossVariant variant);
LossVariant loss_variant_from_name(std::string_view name);  // cos-sig|cos|bce

struct LogitConfig {
  double temperature = 0.04;
  LossVariant loss_variant = LossVariant::cosine_with_sigmoid;
  double bce_epsilon = 1e-7;
};

// Per-pixel property activations z. For sigmoid variants each value is
// sigmoid(cos/temperature) in (0,1); the raw variant keeps cos/temperature.
struct PropertyLogits {
  std::vector<double> values;
  bool activated = false;
};

// z_m = activation(cos(e, E_m) / temperature). The pixel embedding is
// normalized here so callers cannot break the cosine semantics.
PropertyLogits property_logits(std::span<const double> pixel_embedding,
                               const Matrix& bank, const LogitConfig& config);

// Category whose multi-hot label row has the highest cosine similarity with
// z; ties break to the lowest category index.
std::size_t classify(const PropertyLogits& logits, const PropertySpace& space);

// cosine variants: 1 - cos(y, z). BCE: mean over properties of
// -[y log c + (1-y) log(1-c)] with c = clamp(z, eps, 1-eps).
double loss(const PropertyLogits& logits, std::span<const std::uint8_t> label_row,
            const LogitConfig& config);

// Per-pixel classify over an H x W x M logit map. Pixels whose mask value is
// the ignore label stay ignore in the output.
LabelMap classify_map(const LogitMap& map, const PropertySpace& space,
                      const LabelMap* ignore_mask = nullptr);

}  // namespace propspace
