#include "propspace/eval.hpp"

#include <json.hpp>

#include "propspace/error.hpp"

namespace propspace {

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t sum = 0;
  for (std::uint64_t c : counts) sum += c;
  return sum;
}

void update(ConfusionMatrix& cm, const LabelMap& gt, const LabelMap& pred) {
  if (gt.height != pred.height || gt.width != pred.width) {
    fail(errc::shape_mismatch, "ground truth and prediction shapes differ");
  }
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const std::uint16_t g = gt.labels[i];
    if (g == cm.ignore_label) continue;
    const std::uint16_t p = pred.labels[i];
    if (g >= cm.classes) {
      fail(errc::label_out_of_range,
           "ground-truth label " + std::to_string(g) + " >= " +
               std::to_string(cm.classes));
    }
    if (p >= cm.classes) {
      fail(errc::label_out_of_range, "predicted label " + std::to_string(p) +
                                         " >= " + std::to_string(cm.classes));
    }
    ++cm.at(g, p);
  }
}

void merge(ConfusionMatrix& cm, const ConfusionMatrix& other) {
  if (cm.classes != other.classes) {
    fail(errc::shape_mismatch, "cannot merge confusion matrices of different sizes");
  }
  for (std::size_t i = 0; i < cm.counts.size(); ++i) {
    cm.counts[i] += other.counts[i];
  }
}

MetricsReport miou(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) fail(errc::empty_matrix, "confusion matrix has no counted pixels");

  MetricsReport report;
  report.counted_pixels = total;
  report.per_class_iou.assign(cm.classes, std::nullopt);

  std::uint64_t diagonal = 0;
  double iou_sum = 0.0;
  std::size_t counted_classes = 0;
  for (std::size_t c = 0; c < cm.classes; ++c) {
    const std::uint64_t tp = cm.at(c, c);
    diagonal += tp;
    std::uint64_t fp = 0, fn = 0;
    for (std::size_t o = 0; o < cm.classes; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    const std::uint64_t uni = tp + fp + fn;
    if (uni == 0) continue;  // class absent from gt and pred: excluded
    const double iou = static_cast<double>(tp) / static_cast<double>(uni);
    report.per_class_iou[c] = iou;
    iou_sum += iou;
    ++counted_classes;
  }
  report.miou = iou_sum / static_cast<double>(counted_classes);
  report.pixel_accuracy = static_cast<double>(diagonal) / static_cast<double>(total);
  return report;
}

std::string metrics_to_json(const MetricsReport& report,
                            std::span<const std::string> names) {
  nlohmann::json doc;
  doc["miou"] = report.miou;
  doc["pixel_accuracy"] = report.pixel_accuracy;
  doc["counted_pixels"] = report.counted_pixels;
  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t c = 0; c < report.per_class_iou.size(); ++c) {
    nlohmann::json item;
    item["name"] = c < names.size() ? names[c] : "class_" + std::to_string(c);
    if (report.per_class_iou[c].has_value()) {
      item["iou"] = *report.per_class_iou[c];
    } else {
      item["iou"] = nullptr;
    }
    per_class.push_back(std::move(item));
  }
  doc["per_class"] = std::move(per_class);
  return doc.dump(2) + "\n";
}

}  // namespace propspace
