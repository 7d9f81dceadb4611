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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "orbox/geometry.hpp"
#include "orbox/parallel.hpp"

namespace orbox {

struct AnchorGridSpec {
  double image_width = 0.0;
  double image_height = 0.0;
  double stride = 16.0;
  std::vector<double> sizes;
  std::vector<double> aspect_ratios;  // BC / AB
  int num_angles = 1;

  void validate() const {
    if (!(stride > 0.0)) throw std::invalid_argument("anchor spec: stride must be > 0");
    if (!(image_width > 0.0) || !(image_height > 0.0)) {
      throw std::invalid_argument("anchor spec: image size must be positive");
    }
    if (sizes.empty() || aspect_ratios.empty()) {
      throw std::invalid_argument("anchor spec: sizes and ratios must be non-empty");
    }
    for (double s : sizes) {
      if (!(s > 0.0)) throw std::invalid_argument("anchor spec: sizes must be > 0");
    }
    for (double r : aspect_ratios) {
      if (!(r > 0.0)) throw std::invalid_argument("anchor spec: ratios must be > 0");
    }
    if (num_angles < 1) throw std::invalid_argument("anchor spec: num_angles must be >= 1");
  }

  std::size_t grid_cols() const {
    return static_cast<std::size_t>(std::ceil(image_width / stride));
  }
  std::size_t grid_rows() const {
    return static_cast<std::size_t>(std::ceil(image_height / stride));
  }
  std::size_t anchors_per_cell() const {
    return sizes.size() * aspect_ratios.size() * static_cast<std::size_t>(num_angles);
  }
};

/// Anchors for every grid cell, ordered (row, col, size, ratio, angle).
/// Cell (r, c) is centered on ((c + 0.5) * stride, (r + 0.5) * stride).
/// A size s and ratio r give AB = s / sqrt(r), BC = s * sqrt(r), so the
/// area is s^2; angle k is k * pi / num_angles. Anchors crossing the image
/// border are kept.
inline std::vector<RotatedBox> generate_anchors(const AnchorGridSpec& spec) {
  spec.validate();
  const std::size_t rows = spec.grid_rows();
  const std::size_t cols = spec.grid_cols();

  // One centered template per (size, ratio, angle), shifted per cell.
  struct Template {
    Point half;  // C - center; A = center - half
    double theta;
  };
  std::vector<Template> templates;
  templates.reserve(spec.anchors_per_cell());
  for (double s : spec.sizes) {
    for (double r : spec.aspect_ratios) {
      const double w = s / std::sqrt(r);
      const double h = s * std::sqrt(r);
      for (int k = 0; k < spec.num_angles; ++k) {
        const double theta = k * kPi / spec.num_angles;
        const RotatedBox b = box_from_center({0.0, 0.0}, w, h, theta);
        templates.push_back({{b.x_c, b.y_c}, b.theta});
      }
    }
  }

  std::vector<RotatedBox> out;
  out.reserve(rows * cols * templates.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double cy = (static_cast<double>(r) + 0.5) * spec.stride;
    for (std::size_t c = 0; c < cols; ++c) {
      const double cx = (static_cast<double>(c) + 0.5) * spec.stride;
      for (const Template& t : templates) {
        out.push_back({cx - t.half.x, cy - t.half.y, cx + t.half.x, cy + t.half.y, t.theta});
      }
    }
  }
  return out;
}

enum class AnchorLabel { kNegative, kIgnore, kPositive };

struct AnchorMatch {
  std::size_t anchor_index = 0;
  std::optional<std::size_t> gt_index;
  AnchorLabel label = AnchorLabel::kNegative;
  double iou = 0.0;  // best IoU over ground truths
};

/// Faster R-CNN style assignment:
///   - negative if the best IoU is below neg_thresh,
///   - positive if the best IoU is at least pos_thresh, or if the anchor
///     reaches the highest IoU (> 0) of some ground truth (all ties),
///   - ignore otherwise.
/// Positives carry the ground truth of their own best IoU (lowest index on
/// ties). No ground truths: every anchor is negative.
inline std::vector<AnchorMatch> match_anchors(std::span<const RotatedBox> anchors,
                                              std::span<const RotatedBox> gts,
                                              double pos_thresh = 0.7,
                                              double neg_thresh = 0.3,
                                              unsigned threads = 0) {
  if (pos_thresh < neg_thresh) {
    throw std::invalid_argument("match_anchors: pos_thresh must be >= neg_thresh");
  }
  std::vector<AnchorMatch> out(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) out[i].anchor_index = i;
  if (gts.empty()) {
    for (const RotatedBox& a : anchors) box_dims(a);
    return out;
  }
  const std::vector<double> iou = iou_matrix(anchors, gts, threads);
  const std::size_t g = gts.size();

  std::vector<double> gt_best(g, 0.0);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    for (std::size_t j = 0; j < g; ++j) gt_best[j] = std::max(gt_best[j], iou[i * g + j]);
  }

  for (std::size_t i = 0; i < anchors.size(); ++i) {
    AnchorMatch& m = out[i];
    std::size_t best = 0;
    for (std::size_t j = 1; j < g; ++j) {
      if (iou[i * g + j] > iou[i * g + best]) best = j;
    }
    m.iou = iou[i * g + best];
    bool forced = false;
    for (std::size_t j = 0; j < g; ++j) {
      if (gt_best[j] > 0.0 && iou[i * g + j] == gt_best[j]) {
        forced = true;
        break;
      }
    }
    if (m.iou >= pos_thresh || forced) {
      m.label = AnchorLabel::kPositive;
      m.gt_index = best;
    } else if (m.iou < neg_thresh) {
      m.label = AnchorLabel::kNegative;
    } else {
      m.label = AnchorLabel::kIgnore;
    }
  }
  return out;
}

struct AnchorShape {
  double width = 0.0;   // AB
  double height = 0.0;  // BC
};

struct KMeansResult {
  std::vector<AnchorShape> centroids;
  std::vector<std::size_t> assignment;
  /// Sum of min distances after seeding and after every Lloyd iteration.
  std::vector<double> objective;
  int iterations = 0;
};

/// 1 - IoU between two shapes once both are centered at the origin with
/// theta = 0.
inline double shape_distance(const AnchorShape& a, const AnchorShape& b) {
  const RotatedBox ba{-0.5 * a.width, -0.5 * a.height, 0.5 * a.width, 0.5 * a.height, 0.0};
  const RotatedBox bb{-0.5 * b.width, -0.5 * b.height, 0.5 * b.width, 0.5 * b.height, 0.0};
  return 1.0 - rotated_iou(ba, bb);
}

namespace detail {

// Uniform double in [0, 1) from 53 random bits; unlike
// std::uniform_real_distribution this is identical on every standard library.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

/// Anchor shapes by k-means++ under the 1 - IoU distance. Boxes are reduced
/// to their (AB, BC) shape first (angle normalized to 0, centered).
///
/// Seeding picks the first center uniformly and the next ones with
/// probability proportional to the squared distance. Lloyd iterations then
/// alternate nearest-centroid assignment (ties to the lower index) and a
/// mean (AB, BC) update. A cluster's mean is only accepted if it does not
/// raise that cluster's summed distance, so the objective never increases.
/// An empty cluster is re-seeded from the point farthest from its centroid.
inline KMeansResult kmeans_anchors(std::span<const RotatedBox> gts, std::size_t k,
                                   std::uint64_t seed, int max_iterations = 100) {
  if (k == 0) throw std::invalid_argument("kmeans_anchors: k must be >= 1");
  if (gts.size() < k) {
    throw std::invalid_argument("kmeans_anchors: need at least k = " + std::to_string(k) +
                                " boxes, got " + std::to_string(gts.size()));
  }
  std::vector<AnchorShape> pts;
  pts.reserve(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const BoxDims d = box_dims(gts[i], static_cast<std::ptrdiff_t>(i));
    pts.push_back({d.width, d.height});
  }
  const std::size_t n = pts.size();
  std::mt19937_64 rng(seed);

  KMeansResult res;
  auto& cent = res.centroids;
  cent.push_back(pts[static_cast<std::size_t>(detail::uniform01(rng) * n)]);
  std::vector<double> dmin(n);
  for (std::size_t i = 0; i < n; ++i) dmin[i] = shape_distance(pts[i], cent[0]);
  while (cent.size() < k) {
    double total = 0.0;
    for (double d : dmin) total += d * d;
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = detail::uniform01(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += dmin[i] * dmin[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(detail::uniform01(rng) * n);
    }
    cent.push_back(pts[pick]);
    for (std::size_t i = 0; i < n; ++i) {
      dmin[i] = std::min(dmin[i], shape_distance(pts[i], cent.back()));
    }
  }

  auto& assign = res.assignment;
  assign.assign(n, 0);
  std::vector<double> dist(n, 0.0);
  auto assign_all = [&] {
    bool changed = false;
    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = shape_distance(pts[i], cent[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = shape_distance(pts[i], cent[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (best != assign[i]) changed = true;
      assign[i] = best;
      dist[i] = bd;
      obj += bd;
    }
    return std::pair{changed, obj};
  };

  double obj = assign_all().second;
  res.objective.push_back(obj);
  for (int it = 0; it < max_iterations; ++it) {
    // Empty clusters take the point farthest from its own centroid.
    for (std::size_t c = 0; c < k; ++c) {
      if (std::find(assign.begin(), assign.end(), c) != assign.end()) continue;
      std::size_t far = 0;
      for (std::size_t i = 1; i < n; ++i) {
        if (dist[i] > dist[far]) far = i;
      }
      cent[c] = pts[far];
      assign[far] = c;
      dist[far] = 0.0;
    }
    for (std::size_t c = 0; c < k; ++c) {
      AnchorShape mean;
      double old_sum = 0.0;
      std::size_t count = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] != c) continue;
        mean.width += pts[i].width;
        mean.height += pts[i].height;
        old_sum += shape_distance(pts[i], cent[c]);
        ++count;
      }
      mean.width /= static_cast<double>(count);
      mean.height /= static_cast<double>(count);
      double new_sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] == c) new_sum += shape_distance(pts[i], mean);
      }
      if (new_sum <= old_sum) cent[c] = mean;
    }
    const auto [changed, new_obj] = assign_all();
    res.objective.push_back(new_obj);
    res.iterations = it + 1;
    if (!changed) break;
  }
  return res;
}

}  // namespace orbox
