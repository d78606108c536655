// Copyright 2026 The usar Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "usar/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "usar/error.hpp"

namespace usar::metrics {
namespace {

void RequireSameShape(const Mask& pred, const Mask& gt) {
  if (!SameShape(pred, gt) || pred.labels.size() != gt.labels.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "prediction " + std::to_string(pred.width) + "x" +
                    std::to_string(pred.height) + " vs ground truth " +
                    std::to_string(gt.width) + "x" + std::to_string(gt.height));
  }
}

void RequirePairs(const std::vector<Mask>& preds,
                  const std::vector<Mask>& gts) {
  if (preds.empty() && gts.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "no images to evaluate");
  }
  if (preds.size() != gts.size()) {
    throw Error(ErrorCode::kShapeMismatch, "prediction/ground-truth count");
  }
  for (std::size_t i = 0; i < preds.size(); ++i) {
    RequireSameShape(preds[i], gts[i]);
  }
}

// iou >= pct/100, compared on integers so 0.70 is not subject to rounding.
bool MeetsThreshold(const ConfusionCounts& c, int pct) {
  const long denom = c.true_positive + c.false_positive + c.false_negative;
  return 100L * c.true_positive >= static_cast<long>(pct) * denom;
}

double Mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

ConfusionCounts Confusion(const Mask& pred, const Mask& gt,
                          std::uint8_t class_id) {
  RequireSameShape(pred, gt);
  ConfusionCounts c;
  const std::size_t n = gt.labels.size();
  for (std::size_t i = 0; i < n; ++i) {
    const bool p = pred.labels[i] == class_id;
    const bool g = gt.labels[i] == class_id;
    c.true_positive += (p && g);
    c.false_positive += (p && !g);
    c.false_negative += (!p && g);
  }
  return c;
}

double Dice(const ConfusionCounts& c) {
  if (c.Empty()) return 1.0;
  const double tp2 = 2.0 * static_cast<double>(c.true_positive);
  return tp2 / (tp2 + static_cast<double>(c.false_positive) +
                static_cast<double>(c.false_negative));
}

double Iou(const ConfusionCounts& c) {
  if (c.Empty()) return 1.0;
  const double tp = static_cast<double>(c.true_positive);
  return tp / (tp + static_cast<double>(c.false_positive) +
               static_cast<double>(c.false_negative));
}

double Dice(const Mask& pred, const Mask& gt, std::uint8_t class_id) {
  return Dice(Confusion(pred, gt, class_id));
}

double Iou(const Mask& pred, const Mask& gt, std::uint8_t class_id) {
  return Iou(Confusion(pred, gt, class_id));
}

namespace {

// Fills per_class[k].ap from precomputed counts[image][class].
void FillAveragePrecision(
    MetricReport& report,
    const std::vector<std::vector<ConfusionCounts>>& counts) {
  std::vector<double> aps;
  for (std::size_t k = 0; k < report.per_class.size(); ++k) {
    int scored = 0;
    int hits = 0;
    for (const auto& image : counts) {
      const ConfusionCounts& c = image[k];
      if (c.Empty()) continue;  // class absent from both masks
      ++scored;
      for (int pct : kIouThresholdsPct) hits += MeetsThreshold(c, pct);
    }
    auto& cls = report.per_class[k];
    cls.n_scored_images = scored;
    if (scored > 0) {
      constexpr int kThresholds = std::size(kIouThresholdsPct);
      cls.ap = static_cast<double>(hits) / (static_cast<double>(scored) *
                                            kThresholds);
      aps.push_back(*cls.ap);
    } else {
      cls.ap.reset();
    }
  }
  report.map = aps.empty() ? 1.0 : Mean(aps);
}

std::vector<std::vector<ConfusionCounts>> CountAll(
    const std::vector<Mask>& preds, const std::vector<Mask>& gts,
    const std::vector<std::uint8_t>& classes) {
  std::vector<std::vector<ConfusionCounts>> counts(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    counts[i].reserve(classes.size());
    for (std::uint8_t cls : classes) {
      counts[i].push_back(Confusion(preds[i], gts[i], cls));
    }
  }
  return counts;
}

MetricReport EmptyReport(const std::vector<std::uint8_t>& classes,
                         std::size_t n_images) {
  MetricReport r;
  r.n_images = static_cast<int>(n_images);
  for (std::uint8_t cls : classes) {
    ClassMetrics m;
    m.class_id = cls;
    r.per_class.push_back(m);
  }
  return r;
}

}  // namespace

MetricReport MeanAveragePrecision(const std::vector<Mask>& preds,
                                  const std::vector<Mask>& gts,
                                  const std::vector<std::uint8_t>& classes) {
  RequirePairs(preds, gts);
  MetricReport report = EmptyReport(classes, preds.size());
  FillAveragePrecision(report, CountAll(preds, gts, classes));
  return report;
}

MetricReport Evaluate(const std::vector<Mask>& preds,
                      const std::vector<Mask>& gts,
                      const std::vector<std::string>& names,
                      const std::vector<std::uint8_t>& classes) {
  RequirePairs(preds, gts);
  const auto counts = CountAll(preds, gts, classes);
  MetricReport report = EmptyReport(classes, preds.size());

  std::vector<std::vector<double>> dice(classes.size());
  std::vector<std::vector<double>> iou(classes.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    ImageMetrics im;
    im.name = i < names.size() ? names[i] : std::to_string(i);
    for (std::size_t k = 0; k < classes.size(); ++k) {
      im.dice.push_back(Dice(counts[i][k]));
      im.iou.push_back(Iou(counts[i][k]));
      dice[k].push_back(im.dice.back());
      iou[k].push_back(im.iou.back());
    }
    report.per_image.push_back(std::move(im));
  }

  std::vector<double> class_dice;
  std::vector<double> class_iou;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    report.per_class[k].dice = Mean(dice[k]);
    report.per_class[k].iou = Mean(iou[k]);
    class_dice.push_back(report.per_class[k].dice);
    class_iou.push_back(report.per_class[k].iou);
  }
  report.mean_dice = Mean(class_dice);
  report.mean_iou = Mean(class_iou);
  FillAveragePrecision(report, counts);
  return report;
}

std::string ToText(const MetricReport& report) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-16s %8s %8s %8s %22s\n", "Model",
                "mAP", "DICE", "IoU", "Inference time (ms)");
  os << line;
  std::string timing = "-";
  if (report.inference) {
    char t[64];
    std::snprintf(t, sizeof(t), "%.1f +- %.1f", report.inference->mean_ms,
                  report.inference->std_ms);
    timing = t;
  }
  std::snprintf(line, sizeof(line), "%-16s %8.1f %8.1f %8.1f %22s\n",
                report.model.c_str(), 100.0 * report.map,
                100.0 * report.mean_dice, 100.0 * report.mean_iou,
                timing.c_str());
  os << line;
  for (const auto& cls : report.per_class) {
    char ap[16] = "-";
    if (cls.ap) std::snprintf(ap, sizeof(ap), "%.1f", 100.0 * *cls.ap);
    std::snprintf(line, sizeof(line), "  class %-8d %8s %8.1f %8.1f\n",
                  cls.class_id, ap, 100.0 * cls.dice, 100.0 * cls.iou);
    os << line;
  }
  os << "n_images=" << report.n_images << " map_protocol=" << report.map_protocol
     << "\n";
  return os.str();
}

nlohmann::json ToJson(const MetricReport& report) {
  nlohmann::json j;
  j["kind"] = "segmentation";
  j["model"] = report.model;
  j["n_images"] = report.n_images;
  j["map_protocol"] = report.map_protocol;
  j["mean"] = {{"map", report.map},
               {"dice", report.mean_dice},
               {"iou", report.mean_iou}};
  auto& classes = j["per_class"] = nlohmann::json::array();
  for (const auto& cls : report.per_class) {
    nlohmann::json c{{"class_id", cls.class_id},
                     {"dice", cls.dice},
                     {"iou", cls.iou},
                     {"n_scored_images", cls.n_scored_images}};
    c["ap"] = cls.ap ? nlohmann::json(*cls.ap) : nlohmann::json(nullptr);
    classes.push_back(std::move(c));
  }
  auto& images = j["per_image"] = nlohmann::json::array();
  for (const auto& im : report.per_image) {
    images.push_back({{"name", im.name}, {"dice", im.dice}, {"iou", im.iou}});
  }
  if (report.inference) {
    j["inference_ms"] = {{"mean", report.inference->mean_ms},
                         {"std", report.inference->std_ms},
                         {"count", report.inference->count}};
  }
  return j;
}

}  // namespace usar::metrics
