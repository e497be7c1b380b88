#include "propspace/toytrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "propspace/binio.hpp"
#include "propspace/rng.hpp"

namespace propspace {

SyntheticSegTask SyntheticSegTask::make(std::size_t feature_dim,
                                        std::size_t categories,
                                        std::size_t height, std::size_t width,
                                        double noise_scale, std::uint64_t seed) {
  if (feature_dim >= 64 || categories > (1ull << feature_dim)) {
    fail(errc::invalid_spec,
         "hypercube means need categories <= 2^feature_dim");
  }
  SyntheticSegTask task;
  task.feature_dim = feature_dim;
  task.categories = categories;
  task.height = height;
  task.width = width;
  task.noise_scale = noise_scale;
  task.seed = seed;
  task.means = Matrix(categories, feature_dim);
  for (std::size_t c = 0; c < categories; ++c) {
    for (std::size_t j = 0; j < feature_dim; ++j) {
      task.means.at(c, j) = ((c >> j) & 1ull) ? 1.0 : -1.0;
    }
  }
  validate_task(task);
  return task;
}

void validate_task(const SyntheticSegTask& task) {
  if (task.categories < 2) fail(errc::invalid_spec, "need at least 2 categories");
  if (task.feature_dim == 0) fail(errc::invalid_spec, "feature_dim must be positive");
  if (task.noise_scale < 0.0) fail(errc::invalid_spec, "noise_scale must be >= 0");
  if (task.means.rows != task.categories || task.means.cols != task.feature_dim) {
    fail(errc::invalid_spec, "means must be categories x feature_dim");
  }
  if (task.width < task.categories) {
    fail(errc::invalid_spec,
         "width must be >= categories so every strip has pixels");
  }
  if (task.height == 0) fail(errc::invalid_spec, "height must be positive");
  for (std::size_t a = 0; a < task.categories; ++a) {
    for (std::size_t b = a + 1; b < task.categories; ++b) {
      if (std::equal(task.means.row(a).begin(), task.means.row(a).end(),
                     task.means.row(b).begin())) {
        fail(errc::invalid_spec, "category means must be pairwise distinct");
      }
    }
  }
}

TaskSample generate_image(const SyntheticSegTask& task, std::uint64_t image_index) {
  validate_task(task);
  std::mt19937_64 rng(mix_seed(task.seed, image_index));

  TaskSample sample;
  sample.features = Matrix(task.height * task.width, task.feature_dim);
  sample.labels = LabelMap(task.height, task.width, 0);
  for (std::size_t y = 0; y < task.height; ++y) {
    for (std::size_t x = 0; x < task.width; ++x) {
      const auto category =
          static_cast<std::uint16_t>((x * task.categories) / task.width);
      sample.labels.at(y, x) = category;
      auto row = sample.features.row(y * task.width + x);
      const auto mean = task.means.row(category);
      for (std::size_t j = 0; j < task.feature_dim; ++j) {
        row[j] = mean[j] + task.noise_scale * gaussian(rng);
      }
    }
  }
  return sample;
}

std::vector<double> LinearEmbedder::forward(std::span<const double> x) const {
  if (x.size() != weight.cols) {
    fail(errc::dimension_mismatch,
         "input has dim " + std::to_string(x.size()) + ", embedder expects " +
             std::to_string(weight.cols));
  }
  std::vector<double> u(weight.rows, 0.0);
  for (std::size_t i = 0; i < weight.rows; ++i) {
    const auto row = weight.row(i);
    double sum = bias[i];
    for (std::size_t j = 0; j < x.size(); ++j) sum += row[j] * x[j];
    u[i] = sum;
  }
  return l2_normalize(u);
}

LinearEmbedder LinearEmbedder::init(std::size_t out_dim, std::size_t in_dim,
                                    std::uint64_t seed) {
  LinearEmbedder embedder;
  embedder.weight = Matrix(out_dim, in_dim);
  embedder.bias.assign(out_dim, 0.0);
  std::mt19937_64 rng(mix_seed(seed, 0xe1bed));
  const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (double& w : embedder.weight.data) w = scale * gaussian(rng);
  return embedder;
}

Gradients loss_and_grad(const LinearEmbedder& embedder, const PixelBatch& batch,
                        const PropertySpace& space, const LogitConfig& config) {
  const std::size_t batch_size = batch.features.rows;
  if (batch_size == 0) fail(errc::precondition, "batch is empty");
  if (batch.categories.size() != batch_size) {
    fail(errc::shape_mismatch, "batch features and categories disagree");
  }
  const std::size_t d = embedder.weight.rows;
  const std::size_t f = embedder.weight.cols;
  const std::size_t m = space.property_count();
  if (space.bank.cols != d) {
    fail(errc::dimension_mismatch, "embedder output dim " + std::to_string(d) +
                                       " differs from bank dim " +
                                       std::to_string(space.bank.cols));
  }
  if (config.temperature <= 0.0) {
    fail(errc::non_positive_temperature, "temperature must be positive");
  }

  Gradients grads;
  grads.weight = Matrix(d, f);
  grads.bias.assign(d, 0.0);

  const bool use_sigmoid =
      config.loss_variant != LossVariant::cosine_without_sigmoid;

  std::vector<double> u(d), e(d), z(m), dl_dz(m), g_e(d), g_u(d);

  for (std::size_t item = 0; item < batch_size; ++item) {
    const std::uint32_t category = batch.categories[item];
    if (category >= space.category_count()) {
      fail(errc::label_out_of_range,
           "category " + std::to_string(category) + " not in the space");
    }
    const auto& label_row = space.labels[category];
    const auto x = batch.features.row(item);

    // u = W x + b, e = u / |u|
    for (std::size_t i = 0; i < d; ++i) {
      const auto row = embedder.weight.row(i);
      double sum = embedder.bias[i];
      for (std::size_t j = 0; j < f; ++j) sum += row[j] * x[j];
      u[i] = sum;
    }
    double u_norm_sq = 0.0;
    for (double v : u) u_norm_sq += v * v;
    const double u_norm = std::sqrt(u_norm_sq);
    if (u_norm == 0.0) {
      fail(errc::zero_vector, "embedder output collapsed to zero");
    }
    for (std::size_t i = 0; i < d; ++i) e[i] = u[i] / u_norm;

    // z_m = act(cos_m / tau) with cos_m = e . E_m (bank rows are unit)
    for (std::size_t p = 0; p < m; ++p) {
      const auto bank_row = space.bank.row(p);
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += e[i] * bank_row[i];
      const double raw = dot / config.temperature;
      z[p] = use_sigmoid ? 1.0 / (1.0 + std::exp(-raw)) : raw;
    }

    // Loss and dL/dz per variant.
    double item_loss;
    std::size_t ones = 0;
    for (std::uint8_t y : label_row) ones += (y != 0);
    if (ones == 0) fail(errc::empty_label, "label row has no active properties");

    if (config.loss_variant == LossVariant::binary_cross_entropy) {
      const double eps = config.bce_epsilon;
      if (!(eps > 0.0 && eps < 0.5)) {
        fail(errc::precondition, "bce_epsilon must be in (0, 0.5)");
      }
      double total = 0.0;
      for (std::size_t p = 0; p < m; ++p) {
        const double c = std::clamp(z[p], eps, 1.0 - eps);
        const bool clamped = z[p] < eps || z[p] > 1.0 - eps;
        total += label_row[p] ? -std::log(c) : -std::log(1.0 - c);
        dl_dz[p] = clamped ? 0.0
                           : (label_row[p] ? -1.0 / c : 1.0 / (1.0 - c)) /
                                 static_cast<double>(m);
      }
      item_loss = total / static_cast<double>(m);
    } else {
      const double ny = std::sqrt(static_cast<double>(ones));
      double dot = 0.0, z_norm_sq = 0.0;
      for (std::size_t p = 0; p < m; ++p) {
        z_norm_sq += z[p] * z[p];
        if (label_row[p]) dot += z[p];
      }
      if (z_norm_sq == 0.0) fail(errc::zero_logits, "all property logits are zero");
      const double nz = std::sqrt(z_norm_sq);
      const double cosine = dot / (ny * nz);
      item_loss = 1.0 - cosine;
      // d(1 - cos)/dz_p = (dot * z_p / |z|^2 - y_p) / (ny * |z|)
      for (std::size_t p = 0; p < m; ++p) {
        const double y = label_row[p] ? 1.0 : 0.0;
        dl_dz[p] = (dot * z[p] / z_norm_sq - y) / (ny * nz);
      }
    }

    // Chain back: dz/draw, draw/dcos = 1/tau, dcos/de = E_m, de/du.
    std::fill(g_e.begin(), g_e.end(), 0.0);
    for (std::size_t p = 0; p < m; ++p) {
      if (dl_dz[p] == 0.0) continue;
      const double dz_draw = use_sigmoid ? z[p] * (1.0 - z[p]) : 1.0;
      const double g_raw = dl_dz[p] * dz_draw / config.temperature;
      const auto bank_row = space.bank.row(p);
      for (std::size_t i = 0; i < d; ++i) g_e[i] += g_raw * bank_row[i];
    }
    double ge_dot_e = 0.0;
    for (std::size_t i = 0; i < d; ++i) ge_dot_e += g_e[i] * e[i];
    for (std::size_t i = 0; i < d; ++i) {
      g_u[i] = (g_e[i] - ge_dot_e * e[i]) / u_norm;
    }

    for (std::size_t i = 0; i < d; ++i) {
      auto grad_row = grads.weight.row(i);
      for (std::size_t j = 0; j < f; ++j) grad_row[j] += g_u[i] * x[j];
      grads.bias[i] += g_u[i];
    }
    grads.loss += item_loss;
  }

  const double inv = 1.0 / static_cast<double>(batch_size);
  grads.loss *= inv;
  for (double& g : grads.weight.data) g *= inv;
  for (double& g : grads.bias) g *= inv;
  return grads;
}

namespace {

double map_accuracy(const LabelMap& gt, const LabelMap& pred) {
  std::size_t correct = 0, counted = 0;
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    if (gt.labels[i] == kIgnoreLabel) continue;
    ++counted;
    if (gt.labels[i] == pred.labels[i]) ++correct;
  }
  return counted == 0 ? 0.0
                      : static_cast<double>(correct) / static_cast<double>(counted);
}

}  // namespace

double pixel_accuracy(const LabelMap& gt, const LabelMap& pred) {
  if (gt.height != pred.height || gt.width != pred.width) {
    fail(errc::shape_mismatch, "label map shapes differ");
  }
  return map_accuracy(gt, pred);
}

LogitMap predict_logits(const LinearEmbedder& embedder, const TaskSample& sample,
                        const PropertySpace& space, const LogitConfig& config) {
  LogitMap map;
  map.height = sample.labels.height;
  map.width = sample.labels.width;
  map.channels = space.property_count();
  map.activated = config.loss_variant != LossVariant::cosine_without_sigmoid;
  map.values.resize(map.height * map.width * map.channels);
  for (std::size_t pix = 0; pix < sample.features.rows; ++pix) {
    const auto e = embedder.forward(sample.features.row(pix));
    const auto logits = property_logits(e, space.bank, config);
    std::copy(logits.values.begin(), logits.values.end(),
              map.values.begin() + pix * map.channels);
  }
  return map;
}

TrainResult train(const SyntheticSegTask& task, const PropertySpace& space,
                  const TrainConfig& config) {
  validate_task(task);
  if (config.learning_rate <= 0.0) {
    fail(errc::precondition, "learning rate must be positive");
  }
  if (config.steps == 0) fail(errc::precondition, "steps must be >= 1");
  if (config.batch_pixels == 0) fail(errc::precondition, "batch_pixels must be >= 1");
  if (space.category_count() < task.categories) {
    fail(errc::precondition, "space has fewer categories than the task");
  }

  TrainResult result;
  result.embedder =
      LinearEmbedder::init(space.meta.dim, task.feature_dim, config.seed);
  result.curve.reserve(config.steps);

  // Held-out sample for accuracy probes, far outside the training stream.
  const std::uint64_t eval_index = 0xe7a1u;
  TaskSample eval_sample;
  if (config.eval_every > 0) eval_sample = generate_image(task, eval_index);

  const std::size_t pixels = task.height * task.width;
  PixelBatch batch;
  batch.features = Matrix(config.batch_pixels, task.feature_dim);
  batch.categories.assign(config.batch_pixels, 0);

  for (std::size_t step = 0; step < config.steps; ++step) {
    const TaskSample sample = generate_image(task, step);
    std::mt19937_64 rng(mix_seed(config.seed, 0xba7c4 + step));
    for (std::size_t b = 0; b < config.batch_pixels; ++b) {
      const auto pix = static_cast<std::size_t>(uniform_index(rng, pixels));
      const auto src = sample.features.row(pix);
      auto dst = batch.features.row(b);
      std::copy(src.begin(), src.end(), dst.begin());
      batch.categories[b] = sample.labels.labels[pix];
    }

    Gradients grads;
    try {
      grads = loss_and_grad(result.embedder, batch, space, config.logit);
    } catch (const Error& e) {
      if (e.code() == errc::zero_vector || e.code() == errc::zero_logits) {
        fail(errc::divergence,
             "training degenerated at step " + std::to_string(step) + ": " +
                 e.what());
      }
      throw;
    }
    if (!std::isfinite(grads.loss)) {
      fail(errc::divergence,
           "loss became non-finite at step " + std::to_string(step));
    }

    for (std::size_t i = 0; i < result.embedder.weight.data.size(); ++i) {
      result.embedder.weight.data[i] -= config.learning_rate * grads.weight.data[i];
    }
    for (std::size_t i = 0; i < result.embedder.bias.size(); ++i) {
      result.embedder.bias[i] -= config.learning_rate * grads.bias[i];
    }
    for (double w : result.embedder.weight.data) {
      if (!std::isfinite(w)) {
        fail(errc::divergence,
             "weights became non-finite at step " + std::to_string(step));
      }
    }

    StepRecord record;
    record.step = step;
    record.loss = grads.loss;
    if (config.eval_every > 0 && (step + 1) % config.eval_every == 0) {
      const LogitMap logits =
          predict_logits(result.embedder, eval_sample, space, config.logit);
      const LabelMap pred = classify_map(logits, space);
      record.accuracy = map_accuracy(eval_sample.labels, pred);
    }
    result.curve.push_back(record);
  }
  return result;
}

ProbeResult linear_probe(const Matrix& logits,
                         const std::vector<std::uint32_t>& labels,
                         std::size_t classes, const ProbeConfig& config) {
  const std::size_t rows = logits.rows;
  const std::size_t m = logits.cols;
  if (rows == 0) fail(errc::precondition, "probe dataset is empty");
  if (labels.size() != rows) {
    fail(errc::shape_mismatch, "probe labels and logits disagree");
  }
  if (classes == 0) fail(errc::precondition, "classes must be >= 1");
  for (std::uint32_t label : labels) {
    if (label >= classes) {
      fail(errc::label_out_of_range,
           "probe label " + std::to_string(label) + " >= " +
               std::to_string(classes));
    }
  }

  std::vector<std::size_t> train_idx, holdout_idx;
  for (std::size_t i = 0; i < rows; ++i) {
    if (config.holdout_every > 0 &&
        i % config.holdout_every == config.holdout_every - 1) {
      holdout_idx.push_back(i);
    } else {
      train_idx.push_back(i);
    }
  }
  if (train_idx.empty()) fail(errc::precondition, "probe training split is empty");

  ProbeResult probe;
  probe.weight = Matrix(classes, m);
  probe.bias.assign(classes, 0.0);

  std::mt19937_64 rng(mix_seed(config.seed, 0x96b0be));
  std::vector<double> scores(classes);
  const auto predict = [&](std::size_t row_index) {
    const auto x = logits.row(row_index);
    for (std::size_t c = 0; c < classes; ++c) {
      const auto w = probe.weight.row(c);
      double sum = probe.bias[c];
      for (std::size_t j = 0; j < m; ++j) sum += w[j] * x[j];
      scores[c] = sum;
    }
  };

  std::vector<std::size_t> order = train_idx;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates with the portable engine keeps runs reproducible.
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(rng, i));
      std::swap(order[i - 1], order[j]);
    }
    for (const std::size_t row_index : order) {
      predict(row_index);
      double max_score = *std::max_element(scores.begin(), scores.end());
      double total = 0.0;
      for (std::size_t c = 0; c < classes; ++c) {
        scores[c] = std::exp(scores[c] - max_score);
        total += scores[c];
      }
      const auto x = logits.row(row_index);
      for (std::size_t c = 0; c < classes; ++c) {
        const double p = scores[c] / total;
        const double g = p - (labels[row_index] == c ? 1.0 : 0.0);
        auto w = probe.weight.row(c);
        for (std::size_t j = 0; j < m; ++j) {
          w[j] -= config.learning_rate * g * x[j];
        }
        probe.bias[c] -= config.learning_rate * g;
      }
    }
  }

  const auto& eval_idx = holdout_idx.empty() ? train_idx : holdout_idx;
  std::size_t correct = 0;
  for (const std::size_t row_index : eval_idx) {
    predict(row_index);
    const std::size_t pred = static_cast<std::size_t>(
        std::max_element(scores.begin(), scores.end()) - scores.begin());
    if (pred == labels[row_index]) ++correct;
  }
  probe.accuracy = static_cast<double>(correct) / static_cast<double>(eval_idx.size());
  return probe;
}

void write_curve_csv(const std::string& path, std::span<const StepRecord> curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(errc::io_error, "cannot open " + path + " for writing");
  out << "step,loss,accuracy\n";
  char buf[64];
  for (const auto& record : curve) {
    std::snprintf(buf, sizeof(buf), "%.17g", record.loss);
    out << record.step << "," << buf << ",";
    if (record.accuracy >= 0.0) {
      std::snprintf(buf, sizeof(buf), "%.17g", record.accuracy);
      out << buf;
    }
    out << "\n";
  }
  if (!out) fail(errc::io_error, "write failed for " + path);
}

void save_embedder(const std::string& path, const LinearEmbedder& embedder) {
  std::vector<std::uint8_t> buf;
  binio::put_bytes(buf, "PLWT", 4);
  binio::put_u32(buf, 1);
  binio::put_u32(buf, static_cast<std::uint32_t>(embedder.weight.rows));
  binio::put_u32(buf, static_cast<std::uint32_t>(embedder.weight.cols));
  for (double w : embedder.weight.data) binio::put_f32(buf, static_cast<float>(w));
  for (double b : embedder.bias) binio::put_f32(buf, static_cast<float>(b));
  const std::string footer = nlohmann::json{{"kind", "linear"}}.dump();
  binio::put_bytes(buf, footer.data(), footer.size());
  binio::write_file(path, buf);
}

LinearEmbedder load_embedder(const std::string& path) {
  const auto bytes = binio::read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "PLWT", 4) != 0) {
    fail(errc::format_error, path + " is not a PLWT weight container");
  }
  binio::Reader reader(bytes);
  reader.bytes(4);
  if (reader.u32() != 1) fail(errc::format_error, "unsupported PLWT version");
  const std::uint32_t out_dim = reader.u32();
  const std::uint32_t in_dim = reader.u32();
  if (reader.remaining() < (static_cast<std::size_t>(out_dim) * in_dim + out_dim) * 4) {
    fail(errc::corrupt_payload, path + " is truncated");
  }
  LinearEmbedder embedder;
  embedder.weight = Matrix(out_dim, in_dim);
  for (double& w : embedder.weight.data) w = static_cast<double>(reader.f32());
  embedder.bias.resize(out_dim);
  for (double& b : embedder.bias) b = static_cast<double>(reader.f32());
  return embedder;
}

}  // namespace propspace
