#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "propspace/infer.hpp"
#include "propspace/maps.hpp"
#include "propspace/matrix.hpp"
#include "propspace/space.hpp"

namespace propspace {

// Synthetic per-pixel segmentation task: the image splits into vertical
// strips, one category per strip; pixel features are the category mean plus
// Gaussian noise. Stands in for real images, which are out of scope here.
struct SyntheticSegTask {
  std::size_t feature_dim = 4;
  std::size_t categories = 8;
  Matrix means;  // categories x feature_dim, pairwise distinct
  double noise_scale = 0.05;
  std::size_t height = 32;
  std::size_t width = 32;
  std::uint64_t seed = 0;

  // Hypercube-corner means: categories <= 2^feature_dim, pairwise distance
  // >= 2. Cleanly separable for small noise.
  static SyntheticSegTask make(std::size_t feature_dim, std::size_t categories,
                               std::size_t height, std::size_t width,
                               double noise_scale, std::uint64_t seed);
};

void validate_task(const SyntheticSegTask& task);

struct TaskSample {
  Matrix features;  // (height*width) x feature_dim, row-major pixels
  LabelMap labels;
};

// Deterministic per (task, image_index); an endless stream of samples.
TaskSample generate_image(const SyntheticSegTask& task, std::uint64_t image_index);

// e = normalize(W x + b): the minimal model exercising the full supervision
// math (normalization is part of the differentiated graph).
struct LinearEmbedder {
  Matrix weight;  // out_dim x in_dim
  std::vector<double> bias;

  std::vector<double> forward(std::span<const double> x) const;

  static LinearEmbedder init(std::size_t out_dim, std::size_t in_dim,
                             std::uint64_t seed);
};

struct PixelBatch {
  Matrix features;  // B x in_dim
  std::vector<std::uint32_t> categories;
};

struct Gradients {
  Matrix weight;
  std::vector<double> bias;
  double loss = 0.0;
};

// Mean loss over the batch plus exact analytic gradients through
// normalization, cosine scoring, temperature scaling, the activation and the
// configured loss.
Gradients loss_and_grad(const LinearEmbedder& embedder, const PixelBatch& batch,
                        const PropertySpace& space, const LogitConfig& config);

struct TrainConfig {
  double learning_rate = 2.0;
  std::size_t steps = 2000;
  std::size_t batch_pixels = 128;
  std::uint64_t seed = 0;
  LogitConfig logit;
  std::size_t eval_every = 0;  // 0 = never evaluate during training
};

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double accuracy = -1.0;  // < 0 when not evaluated at this step
};

struct TrainResult {
  LinearEmbedder embedder;
  std::vector<StepRecord> curve;
};

// Plain SGD over streamed batches. Deterministic per seed. Throws
// DivergenceError when the loss or the parameters stop being finite.
TrainResult train(const SyntheticSegTask& task, const PropertySpace& space,
                  const TrainConfig& config);

// Property logits for every pixel of a sample.
LogitMap predict_logits(const LinearEmbedder& embedder, const TaskSample& sample,
                        const PropertySpace& space, const LogitConfig& config);

double pixel_accuracy(const LabelMap& gt, const LabelMap& pred);

struct ProbeConfig {
  double learning_rate = 0.5;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  std::size_t holdout_every = 5;  // row i held out when i % holdout_every ==
                                  // holdout_every - 1; 0 disables the split
};

struct ProbeResult {
  Matrix weight;  // classes x M
  std::vector<double> bias;
  double accuracy = 0.0;  // held-out (training accuracy if no holdout)
};

// Single fully-connected layer on frozen property logits, trained with
// softmax cross-entropy by SGD.
ProbeResult linear_probe(const Matrix& logits,
                         const std::vector<std::uint32_t>& labels,
                         std::size_t classes, const ProbeConfig& config = {});

void write_curve_csv(const std::string& path, std::span<const StepRecord> curve);

// PLWT container: "PLWT" | u32 version | u32 out_dim | u32 in_dim |
// weight float32 | bias float32 | JSON footer.
void save_embedder(const std::string& path, const LinearEmbedder& embedder);
LinearEmbedder load_embedder(const std::string& path);

}  // namespace propspace
