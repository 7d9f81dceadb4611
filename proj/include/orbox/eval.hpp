// Copyright 2026 The orbox Authors. All Rights Reserved.
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

// Oriented detection evaluation: center-in-ellipse and rotated-IoU hit
// criteria, greedy matching, 11-point AP and recall at fixed FPPI.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "orbox/geometry.hpp"
#include "orbox/nms.hpp"

namespace orbox {

struct GroundTruth {
  RotatedBox box;
  int class_id = 0;
  std::string image_id;
  bool difficult = false;
};

/// Boundary slack of the ellipse test, in normalized radius squared.
inline constexpr double kEllipseSlack = 1e-12;

/// True iff `det_center` lies in the ellipse inscribed in `gt` (semi-axes
/// AB/2 and BC/2 along the box edges). Boundary points count as hits.
inline bool vedai_hit(Point det_center, const RotatedBox& gt) {
  const BoxDims d = box_dims(gt);
  const Point u{std::cos(gt.theta), std::sin(gt.theta)};
  const Point v{-u.y, u.x};
  const Point rel = det_center - box_center(gt);
  const double a = dot(rel, u) / (0.5 * d.width);
  const double b = dot(rel, v) / (0.5 * d.height);
  return a * a + b * b <= 1.0 + kEllipseSlack;
}

inline bool voc_hit(const RotatedBox& det, const RotatedBox& gt, double t) {
  return rotated_iou(det, gt) >= t;
}

/// Center-in-ellipse criterion. Among several hits the nearest gt center wins.
struct VedaiCriterion {
  std::optional<double> affinity(const RotatedBox& det, const RotatedBox& gt) const {
    const Point c = box_center(det);
    if (!vedai_hit(c, gt)) return std::nullopt;
    const Point r = c - box_center(gt);
    return -std::hypot(r.x, r.y);
  }
  std::string name() const { return "vedai"; }
};

/// Rotated IoU >= threshold. Among several hits the highest IoU wins.
struct VocCriterion {
  double threshold = 0.5;

  std::optional<double> affinity(const RotatedBox& det, const RotatedBox& gt) const {
    const double iou = rotated_iou(det, gt);
    if (iou >= threshold) return iou;
    return std::nullopt;
  }
  std::string name() const;
};

inline std::string VocCriterion::name() const {
  std::string t = std::to_string(threshold);
  while (t.size() > 1 && t.back() == '0') t.pop_back();
  if (!t.empty() && t.back() == '.') t.pop_back();
  return "voc@" + t;
}

enum class MatchLabel { kTruePositive, kFalsePositive, kIgnored };

struct DetectionMatch {
  MatchLabel label = MatchLabel::kFalsePositive;
  std::optional<std::size_t> gt_index;
};

/// Greedy VOC-style matching, one result per detection in input order.
///
/// Detections are visited by descending score (ties by ascending index).
/// Each takes the unclaimed, non-difficult ground truth of its class and
/// image that it hits with the best affinity (ties to the lower gt index)
/// and becomes a TP. Failing that, a hit on a difficult ground truth makes
/// it kIgnored; otherwise it is a FP.
template <typename Criterion>
std::vector<DetectionMatch> match_detections(std::span<const ScoredDetection> dets,
                                             std::span<const GroundTruth> gts,
                                             const Criterion& crit) {
  using Key = std::tuple<int, std::string>;
  std::map<Key, std::vector<std::size_t>> by_key;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    by_key[{gts[g].class_id, gts[g].image_id}].push_back(g);
  }
  std::vector<double> scores(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) scores[i] = dets[i].score;
  const std::vector<std::size_t> order = score_order(scores);

  std::vector<char> claimed(gts.size(), 0);
  std::vector<DetectionMatch> out(dets.size());
  for (std::size_t i : order) {
    const auto it = by_key.find({dets[i].class_id, dets[i].image_id});
    if (it == by_key.end()) continue;
    std::optional<std::size_t> best;
    double best_aff = 0.0;
    bool hits_difficult = false;
    for (std::size_t g : it->second) {
      if (claimed[g]) continue;
      const std::optional<double> aff = crit.affinity(dets[i].box, gts[g].box);
      if (!aff) continue;
      if (gts[g].difficult) {
        hits_difficult = true;
        continue;
      }
      if (!best || *aff > best_aff) {
        best = g;
        best_aff = *aff;
      }
    }
    if (best) {
      claimed[*best] = 1;
      out[i] = {MatchLabel::kTruePositive, best};
    } else if (hits_difficult) {
      out[i].label = MatchLabel::kIgnored;
    }
  }
  return out;
}

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  double threshold = 0.0;
};

/// Precision/recall after each detection in descending score order;
/// ignored detections are skipped.
inline std::vector<PrPoint> pr_curve(std::span<const double> scores,
                                     std::span<const MatchLabel> labels, std::size_t num_gt) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("pr_curve: scores and labels differ in length");
  }
  std::vector<PrPoint> curve;
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i : score_order(scores)) {
    if (labels[i] == MatchLabel::kIgnored) continue;
    (labels[i] == MatchLabel::kTruePositive ? tp : fp) += 1;
    const double recall =
        num_gt == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(num_gt);
    curve.push_back({recall, static_cast<double>(tp) / static_cast<double>(tp + fp), scores[i]});
  }
  return curve;
}

/// Pascal VOC 2007 11-point interpolated AP: the mean over
/// r in {0, 0.1, ..., 1} of the best precision reached at recall >= r.
inline double ap_11point(std::span<const double> scores, std::span<const MatchLabel> labels,
                         std::size_t num_gt) {
  if (num_gt == 0) return 0.0;
  const std::vector<PrPoint> curve = pr_curve(scores, labels, num_gt);
  double ap = 0.0;
  for (int i = 0; i <= 10; ++i) {
    const double r = i / 10.0;
    double p = 0.0;
    for (const PrPoint& pt : curve) {
      if (pt.recall >= r) p = std::max(p, pt.precision);
    }
    ap += p;
  }
  return ap / 11.0;
}

struct FppiRecall {
  double fppi = 0.0;
  double recall = 0.0;
};

/// For each level f, the highest recall over score cut points whose false
/// positives per image stay <= f. A cut keeps every detection scoring at
/// least the cut value, so equal scores are never split.
inline std::vector<FppiRecall> recall_at_fppi(std::span<const double> scores,
                                              std::span<const MatchLabel> labels,
                                              std::size_t num_gt, std::size_t num_images,
                                              std::span<const double> levels) {
  if (num_images == 0) throw std::invalid_argument("recall_at_fppi: num_images must be >= 1");
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("recall_at_fppi: scores and labels differ in length");
  }
  // (fp, tp) after each complete group of equal scores, starting from the
  // empty cut.
  std::vector<std::pair<std::size_t, std::size_t>> cuts{{0, 0}};
  const std::vector<std::size_t> order = score_order(scores);
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t i = order[k];
    if (labels[i] == MatchLabel::kTruePositive) ++tp;
    if (labels[i] == MatchLabel::kFalsePositive) ++fp;
    if (k + 1 == order.size() || scores[order[k + 1]] != scores[i]) cuts.push_back({fp, tp});
  }
  std::vector<FppiRecall> out;
  for (double f : levels) {
    std::size_t best_tp = 0;
    for (const auto& [cfp, ctp] : cuts) {
      if (static_cast<double>(cfp) / static_cast<double>(num_images) <= f) {
        best_tp = std::max(best_tp, ctp);
      }
    }
    out.push_back({f, num_gt == 0 ? 0.0
                                  : static_cast<double>(best_tp) / static_cast<double>(num_gt)});
  }
  return out;
}

enum class CriterionKind { kVedai, kVoc };

struct EvalConfig {
  CriterionKind criterion = CriterionKind::kVedai;
  double iou_threshold = 0.5;
  std::vector<double> fppi_levels{0.01, 0.1, 1.0};
  /// Defaults to the number of distinct image ids in gts and detections.
  std::optional<std::size_t> num_images;
};

struct ClassReport {
  int class_id = 0;
  std::size_t num_gt = 0;  // non-difficult
  std::size_t num_detections = 0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  double ap = 0.0;
  std::vector<PrPoint> pr_curve;
  std::vector<FppiRecall> recall_at_fppi;
};

struct EvalReport {
  std::string criterion;
  std::size_t num_images = 0;
  std::vector<ClassReport> classes;  // ascending class id
  double mean_ap = 0.0;
  std::vector<FppiRecall> mean_recall_at_fppi;
  std::size_t unknown_class_detections = 0;
  std::vector<std::string> diagnostics;
};

namespace detail {

template <typename Criterion>
EvalReport evaluate_with(std::span<const ScoredDetection> dets,
                         std::span<const GroundTruth> gts, const Criterion& crit,
                         const EvalConfig& config) {
  EvalReport rep;
  rep.criterion = crit.name();

  std::set<std::string> images;
  std::set<int> classes;
  for (const auto& g : gts) {
    box_dims(g.box);
    images.insert(g.image_id);
    classes.insert(g.class_id);
  }
  for (const auto& d : dets) images.insert(d.image_id);
  rep.num_images = config.num_images.value_or(std::max<std::size_t>(1, images.size()));
  if (rep.num_images == 0) throw std::invalid_argument("evaluate: num_images must be >= 1");

  for (const auto& d : dets) {
    if (!classes.count(d.class_id)) ++rep.unknown_class_detections;
  }
  if (rep.unknown_class_detections > 0) {
    rep.diagnostics.push_back(std::to_string(rep.unknown_class_detections) +
                              " detection(s) of classes absent from the ground truth "
                              "counted as false positives");
  }

  const std::vector<DetectionMatch> matches = match_detections(dets, gts, crit);

  rep.mean_recall_at_fppi.resize(config.fppi_levels.size());
  for (std::size_t l = 0; l < config.fppi_levels.size(); ++l) {
    rep.mean_recall_at_fppi[l].fppi = config.fppi_levels[l];
  }
  for (int cls : classes) {
    ClassReport cr;
    cr.class_id = cls;
    for (const auto& g : gts) {
      if (g.class_id == cls && !g.difficult) ++cr.num_gt;
    }
    std::vector<double> scores;
    std::vector<MatchLabel> labels;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (dets[i].class_id != cls) continue;
      scores.push_back(dets[i].score);
      labels.push_back(matches[i].label);
      if (matches[i].label == MatchLabel::kTruePositive) ++cr.true_positives;
      if (matches[i].label == MatchLabel::kFalsePositive) ++cr.false_positives;
    }
    cr.num_detections = scores.size();
    cr.ap = ap_11point(scores, labels, cr.num_gt);
    cr.pr_curve = pr_curve(scores, labels, cr.num_gt);
    cr.recall_at_fppi =
        recall_at_fppi(scores, labels, cr.num_gt, rep.num_images, config.fppi_levels);
    rep.classes.push_back(std::move(cr));
  }
  if (!rep.classes.empty()) {
    const double n = static_cast<double>(rep.classes.size());
    for (const auto& cr : rep.classes) {
      rep.mean_ap += cr.ap;
      for (std::size_t l = 0; l < cr.recall_at_fppi.size(); ++l) {
        rep.mean_recall_at_fppi[l].recall += cr.recall_at_fppi[l].recall;
      }
    }
    rep.mean_ap /= n;
    for (auto& fr : rep.mean_recall_at_fppi) fr.recall /= n;
  }
  return rep;
}

}  // namespace detail

/// Per-class matching, AP and recall@FPPI; mean AP over the classes present
/// in the ground truth.
inline EvalReport evaluate(std::span<const ScoredDetection> dets,
                           std::span<const GroundTruth> gts, const EvalConfig& config) {
  if (config.criterion == CriterionKind::kVedai) {
    return detail::evaluate_with(dets, gts, VedaiCriterion{}, config);
  }
  if (!(config.iou_threshold > 0.0 && config.iou_threshold <= 1.0)) {
    throw std::invalid_argument("evaluate: IoU threshold must be in (0, 1]");
  }
  return detail::evaluate_with(dets, gts, VocCriterion{config.iou_threshold}, config);
}

}  // namespace orbox
