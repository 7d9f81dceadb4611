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

// Brute-force reference implementations used by the unit and acceptance
// tests. They favour obviousness over speed and share no code paths with
// the library beyond rotated_iou where noted.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <tuple>
#include <vector>

#include "orbox/orbox.hpp"
#include "scene.hpp"

namespace orbox::oracle {

// Point-in-rectangle straight from the box fields: project onto the edge
// directions and compare with the side lengths.
inline bool inside_box(const RotatedBox& b, double px, double py) {
  const double cu = std::cos(b.theta);
  const double su = std::sin(b.theta);
  const double dx = b.x_c - b.x_a;
  const double dy = b.y_c - b.y_a;
  const double w = cu * dx + su * dy;
  const double h = -su * dx + cu * dy;
  const double qx = px - b.x_a;
  const double qy = py - b.y_a;
  const double s = cu * qx + su * qy;
  const double t = -su * qx + cu * qy;
  return s >= 0.0 && s <= w && t >= 0.0 && t <= h;
}

struct Bounds {
  double x0, y0, x1, y1;
};

inline Bounds bounds_of(std::initializer_list<RotatedBox> boxes) {
  Bounds r{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& b : boxes) {
    const BoxCorners k = box_corners(b);
    for (Point p : {k.a, k.b, k.c, k.d}) {
      r.x0 = std::min(r.x0, p.x);
      r.y0 = std::min(r.y0, p.y);
      r.x1 = std::max(r.x1, p.x);
      r.y1 = std::max(r.y1, p.y);
    }
  }
  return r;
}

/// IoU by jittered-grid sampling of the joint bounding rectangle with
/// `side` x `side` samples.
inline double monte_carlo_iou(const RotatedBox& a, const RotatedBox& b, std::size_t side,
                              std::mt19937_64& rng) {
  const Bounds r = bounds_of({a, b});
  const double sx = (r.x1 - r.x0) / static_cast<double>(side);
  const double sy = (r.y1 - r.y0) / static_cast<double>(side);
  std::size_t in_a = 0, in_b = 0, both = 0;
  for (std::size_t i = 0; i < side; ++i) {
    for (std::size_t j = 0; j < side; ++j) {
      const double px = r.x0 + (static_cast<double>(i) + detail::uniform01(rng)) * sx;
      const double py = r.y0 + (static_cast<double>(j) + detail::uniform01(rng)) * sy;
      const bool ia = inside_box(a, px, py);
      const bool ib = inside_box(b, px, py);
      in_a += ia;
      in_b += ib;
      both += ia && ib;
    }
  }
  const std::size_t uni = in_a + in_b - both;
  return uni == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(uni);
}

/// Area of a convex polygon by uniform sampling of its bounding rectangle.
inline double monte_carlo_area(const ConvexPolygon& poly, std::size_t samples,
                               std::mt19937_64& rng) {
  const auto v = poly.vertices();
  double x0 = v[0].x, x1 = v[0].x, y0 = v[0].y, y1 = v[0].y;
  for (Point p : v) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  const double sign = signed_area2(v) >= 0.0 ? 1.0 : -1.0;
  std::size_t hits = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    const Point p{scene::uniform(rng, x0, x1), scene::uniform(rng, y0, y1)};
    bool in = true;
    for (std::size_t i = 0; i < v.size() && in; ++i) {
      const Point e = v[(i + 1) % v.size()] - v[i];
      in = sign * cross(e, p - v[i]) >= 0.0;
    }
    hits += in;
  }
  return (x1 - x0) * (y1 - y0) * static_cast<double>(hits) / static_cast<double>(samples);
}

/// Closed-form IoU of two theta = 0 boxes.
inline double axis_aligned_iou(const RotatedBox& a, const RotatedBox& b) {
  const double iw = std::max(0.0, std::min(a.x_c, b.x_c) - std::max(a.x_a, b.x_a));
  const double ih = std::max(0.0, std::min(a.y_c, b.y_c) - std::max(a.y_a, b.y_a));
  const double inter = iw * ih;
  const double ua = (a.x_c - a.x_a) * (a.y_c - a.y_a) + (b.x_c - b.x_a) * (b.y_c - b.y_a) - inter;
  return ua > 0.0 ? inter / ua : 0.0;
}

/// Textbook greedy NMS: sort by (score desc, index asc), then for each
/// survivor suppress every later box overlapping it by more than `thr`.
/// Uses rotated_iou for overlaps.
inline std::vector<std::size_t> reference_nms(std::span<const RotatedBox> boxes,
                                              std::span<const double> scores, double thr) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  });
  std::vector<bool> dead(boxes.size(), false);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (dead[order[i]]) continue;
    keep.push_back(order[i]);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (rotated_iou(boxes[order[i]], boxes[order[j]]) > thr) dead[order[j]] = true;
    }
  }
  return keep;
}

/// Classic axis-aligned RoI max pooling of the integer rectangle
/// [x0, x0 + w) x [y0, y0 + h); bin (i, j) spans rows
/// [floor(i h / k), floor((i + 1) h / k)) and likewise for columns. Pixels
/// outside the map are skipped. Returns (k, k, C) values and argmax.
struct AxisPool {
  std::vector<double> output;
  std::vector<PixelCoord> argmax;
};

inline AxisPool axis_aligned_pool(const FeatureMap& f, long x0, long y0, long w, long h,
                                  long k) {
  AxisPool r;
  const std::size_t C = f.channels;
  r.output.assign(static_cast<std::size_t>(k * k) * C, -std::numeric_limits<double>::infinity());
  r.argmax.assign(static_cast<std::size_t>(k * k) * C, PixelCoord{-1, -1});
  for (long i = 0; i < k; ++i) {
    for (long j = 0; j < k; ++j) {
      const std::size_t cell = static_cast<std::size_t>(i * k + j);
      for (long y = y0 + (i * h) / k; y < y0 + ((i + 1) * h) / k; ++y) {
        for (long x = x0 + (j * w) / k; x < x0 + ((j + 1) * w) / k; ++x) {
          if (x < 0 || y < 0 || x >= static_cast<long>(f.width) ||
              y >= static_cast<long>(f.height)) {
            continue;
          }
          for (std::size_t c = 0; c < C; ++c) {
            const double v = f.data[(static_cast<std::size_t>(y) * f.width +
                                     static_cast<std::size_t>(x)) * C + c];
            if (v > r.output[cell * C + c]) {
              r.output[cell * C + c] = v;
              r.argmax[cell * C + c] = {static_cast<std::int32_t>(y), static_cast<std::int32_t>(x)};
            }
          }
        }
      }
    }
  }
  return r;
}

/// Detection labels by exhaustive search: among every one-to-one assignment
/// of detections to hit, non-difficult, same class/image ground truths,
/// pick the one whose per-detection sequence of (matched, affinity,
/// -gt index), taken in descending score order, is lexicographically
/// largest. Unmatched detections hitting a difficult gt are ignored.
template <typename Criterion>
std::vector<DetectionMatch> exhaustive_match(std::span<const ScoredDetection> dets,
                                             std::span<const GroundTruth> gts,
                                             const Criterion& crit) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score != dets[b].score ? dets[a].score > dets[b].score : a < b;
  });
  auto aff = [&](std::size_t d, std::size_t g) -> std::optional<double> {
    if (dets[d].class_id != gts[g].class_id || dets[d].image_id != gts[g].image_id) {
      return std::nullopt;
    }
    return crit.affinity(dets[d].box, gts[g].box);
  };

  using Key = std::vector<std::tuple<int, double, long>>;
  Key best_key;
  std::vector<std::optional<std::size_t>> best_assign;
  std::vector<std::optional<std::size_t>> cur(dets.size());
  std::vector<bool> used(gts.size(), false);
  std::function<void(std::size_t)> rec = [&](std::size_t pos) {
    if (pos == order.size()) {
      Key key;
      for (std::size_t d : order) {
        if (cur[d]) {
          key.emplace_back(1, *aff(d, *cur[d]), -static_cast<long>(*cur[d]));
        } else {
          key.emplace_back(0, 0.0, 0);
        }
      }
      if (best_assign.empty() || key > best_key) {
        best_key = key;
        best_assign = cur;
      }
      return;
    }
    const std::size_t d = order[pos];
    cur[d].reset();
    rec(pos + 1);
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].difficult || !aff(d, g)) continue;
      used[g] = true;
      cur[d] = g;
      rec(pos + 1);
      cur[d].reset();
      used[g] = false;
    }
  };
  rec(0);

  std::vector<DetectionMatch> out(dets.size());
  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (best_assign.size() == dets.size() && best_assign[d]) {
      out[d] = {MatchLabel::kTruePositive, best_assign[d]};
      continue;
    }
    bool difficult_hit = false;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].difficult && aff(d, g)) difficult_hit = true;
    }
    out[d].label = difficult_hit ? MatchLabel::kIgnored : MatchLabel::kFalsePositive;
  }
  return out;
}

/// Recall at each FPPI level by trying every distinct score as a cut.
inline std::vector<double> fppi_sweep(std::span<const double> scores,
                                      std::span<const MatchLabel> labels, std::size_t num_gt,
                                      std::size_t num_images, std::span<const double> levels) {
  std::vector<double> cuts(scores.begin(), scores.end());
  cuts.push_back(std::numeric_limits<double>::infinity());
  std::vector<double> out;
  for (double f : levels) {
    double best = 0.0;
    for (double cut : cuts) {
      std::size_t tp = 0, fp = 0;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] < cut) continue;
        tp += labels[i] == MatchLabel::kTruePositive;
        fp += labels[i] == MatchLabel::kFalsePositive;
      }
      if (static_cast<double>(fp) / static_cast<double>(num_images) <= f && num_gt > 0) {
        best = std::max(best, static_cast<double>(tp) / static_cast<double>(num_gt));
      }
    }
    out.push_back(best);
  }
  return out;
}

/// Best split of `pts` into two groups under the summed 1 - IoU distance
/// to each group's mean shape. Returns one group label per point, with
/// point 0 always in group 0.
inline std::vector<int> best_two_partition(std::span<const AnchorShape> pts) {
  const std::size_t n = pts.size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> best_labels;
  for (std::uint32_t mask = 0; mask < (1u << (n - 1)); ++mask) {
    std::vector<int> lab(n, 0);
    for (std::size_t i = 1; i < n; ++i) lab[i] = (mask >> (i - 1)) & 1u;
    double cost = 0.0;
    bool empty = false;
    for (int g = 0; g < 2; ++g) {
      AnchorShape m;
      std::size_t cnt = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (lab[i] != g) continue;
        m.width += pts[i].width;
        m.height += pts[i].height;
        ++cnt;
      }
      if (cnt == 0) {
        empty = true;
        break;
      }
      m.width /= static_cast<double>(cnt);
      m.height /= static_cast<double>(cnt);
      for (std::size_t i = 0; i < n; ++i) {
        if (lab[i] == g) cost += shape_distance(pts[i], m);
      }
    }
    if (!empty && cost < best) {
      best = cost;
      best_labels = lab;
    }
  }
  return best_labels;
}

/// Central difference of f at x along coordinate `i`.
template <typename F>
double central_difference(F&& f, std::vector<double> x, std::size_t i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double up = f(x);
  x[i] = x0 - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

/// ||a - b|| / max(||a||, ||b||), zero when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double den = std::sqrt(std::max(na, nb));
  return den == 0.0 ? 0.0 : std::sqrt(num) / den;
}

}  // namespace orbox::oracle
