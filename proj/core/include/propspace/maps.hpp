#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace propspace {

// Segmentation-dataset convention for "not annotated / do not score".
inline constexpr std::uint16_t kIgnoreLabel = 255;

// Per-pixel property logits, row-major (y, x, channel).
struct LogitMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;  // M
  std::vector<double> values;
  bool activated = false;  // true when values went through the sigmoid

  std::span<const double> pixel(std::size_t y, std::size_t x) const {
    return {values.data() + (y * width + x) * channels, channels};
  }
  std::span<double> pixel(std::size_t y, std::size_t x) {
    return {values.data() + (y * width + x) * channels, channels};
  }
};

struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint16_t> labels;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::uint16_t fill = 0)
      : height(h), width(w), labels(h * w, fill) {}

  std::uint16_t at(std::size_t y, std::size_t x) const {
    return labels[y * width + x];
  }
  std::uint16_t& at(std::size_t y, std::size_t x) {
    return labels[y * width + x];
  }

  bool operator==(const LabelMap&) const = default;
};

// PLLG container: "PLLG" | u32 version | u32 H | u32 W | u32 M |
// H*W*M float32 | JSON footer {activated, provenance}.
void save_logit_map(const std::string& path, const LogitMap& map,
                    const std::string& provenance = "");
LogitMap load_logit_map(const std::string& path);

// Label images travel as binary PGM (P5, maxval 255); the 255 ignore label
// fits the 8-bit payload, so class counts must stay below 255.
void save_label_map_pgm(const std::string& path, const LabelMap& map);
LabelMap load_label_map_pgm(const std::string& path);

}  // namespace propspace
