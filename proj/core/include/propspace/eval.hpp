#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "propspace/maps.hpp"

namespace propspace {

// Pixel counts indexed (ground truth, prediction). Pixels whose ground-truth
// value equals the ignore label are never counted.
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::uint16_t ignore_label = kIgnoreLabel;
  std::vector<std::uint64_t> counts;  // classes x classes, row-major by gt

  explicit ConfusionMatrix(std::size_t n, std::uint16_t ignore = kIgnoreLabel)
      : classes(n), ignore_label(ignore), counts(n * n, 0) {}

  std::uint64_t& at(std::size_t gt, std::size_t pred) {
    return counts[gt * classes + pred];
  }
  std::uint64_t at(std::size_t gt, std::size_t pred) const {
    return counts[gt * classes + pred];
  }
  std::uint64_t total() const;
};

void update(ConfusionMatrix& cm, const LabelMap& gt, const LabelMap& pred);

// Element-wise addition of per-shard matrices; associative and commutative.
void merge(ConfusionMatrix& cm, const ConfusionMatrix& other);

struct MetricsReport {
  double miou = 0.0;
  // nullopt for classes with zero union (excluded from the mean).
  std::vector<std::optional<double>> per_class_iou;
  double pixel_accuracy = 0.0;
  std::uint64_t counted_pixels = 0;
};

MetricsReport miou(const ConfusionMatrix& cm);

// {"miou", "per_class": [{"name", "iou"}], "pixel_accuracy",
//  "counted_pixels"}; class names default to "class_<i>".
std::string metrics_to_json(const MetricsReport& report,
                            std::span<const std::string> names = {});

}  // namespace propspace
