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
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "orbox/geometry.hpp"
#include "orbox/parallel.hpp"

namespace orbox {

struct ScoredDetection {
  RotatedBox box;
  double score = 0.0;
  int class_id = 0;
  std::string image_id;
};

inline constexpr std::size_t kKeepAll = std::numeric_limits<std::size_t>::max();

/// Indices sorted by descending score; equal scores keep ascending index.
inline std::vector<std::size_t> score_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  return order;
}

/// Greedy rotated NMS. A box is suppressed iff its IoU with an already kept
/// box is strictly greater than `iou_threshold`. Returns kept indices in
/// descending score order, at most `max_keep` of them.
///
/// IoUs are evaluated lazily: after each keep, the remaining candidates of
/// that row are tested in parallel. Each candidate's suppression flag is
/// only written by the chunk owning it, so the keep set does not depend on
/// the thread count.
inline std::vector<std::size_t> rotated_nms(std::span<const RotatedBox> boxes,
                                            std::span<const double> scores,
                                            double iou_threshold,
                                            std::size_t max_keep = kKeepAll,
                                            unsigned threads = 0) {
  if (boxes.size() != scores.size()) {
    throw std::invalid_argument("rotated_nms: " + std::to_string(boxes.size()) +
                                " boxes but " + std::to_string(scores.size()) +
                                " scores");
  }
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) {
    throw std::invalid_argument("rotated_nms: iou_threshold must be in [0, 1], got " +
                                std::to_string(iou_threshold));
  }
  const std::size_t n = boxes.size();
  std::vector<detail::BoxGeom> geom(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(scores[i]) || scores[i] < 0.0 || scores[i] > 1.0) {
      throw std::invalid_argument("rotated_nms: score " + std::to_string(scores[i]) +
                                  " outside [0, 1] at index " + std::to_string(i));
    }
  }
  const std::vector<std::size_t> order = score_order(scores);
  for (std::size_t r = 0; r < n; ++r) {
    geom[r] = detail::make_geom(boxes[order[r]], static_cast<std::ptrdiff_t>(order[r]));
  }

  std::vector<char> suppressed(n, 0);
  std::vector<std::size_t> keep;
  if (max_keep == 0) return keep;
  for (std::size_t r = 0; r < n; ++r) {
    if (suppressed[r]) continue;
    keep.push_back(order[r]);
    if (keep.size() >= max_keep) break;
    const detail::BoxGeom& kept = geom[r];
    const std::size_t first = r + 1;
    parallel_for(n - first, 512, threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t k = first + b; k < first + e; ++k) {
        if (!suppressed[k] && detail::iou_geom(kept, geom[k]) > iou_threshold) {
          suppressed[k] = 1;
        }
      }
    });
  }
  return keep;
}

inline std::vector<std::size_t> rotated_nms(std::span<const ScoredDetection> dets,
                                            double iou_threshold,
                                            std::size_t max_keep = kKeepAll,
                                            unsigned threads = 0) {
  std::vector<RotatedBox> boxes;
  std::vector<double> scores;
  boxes.reserve(dets.size());
  scores.reserve(dets.size());
  for (const auto& d : dets) {
    boxes.push_back(d.box);
    scores.push_back(d.score);
  }
  return rotated_nms(boxes, scores, iou_threshold, max_keep, threads);
}

enum class NmsGroup { kClass, kImage, kClassAndImage };

/// Runs rotated_nms independently inside each group and merges the kept
/// indices by descending score (ties by ascending index).
inline std::vector<std::size_t> batched_nms(std::span<const ScoredDetection> dets,
                                            double iou_threshold, NmsGroup per,
                                            std::size_t max_keep_per_group = kKeepAll,
                                            unsigned threads = 0) {
  using Key = std::tuple<int, std::string>;
  std::map<Key, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto& d = dets[i];
    Key key{per == NmsGroup::kImage ? 0 : d.class_id,
            per == NmsGroup::kClass ? std::string() : d.image_id};
    groups[key].push_back(i);
  }
  std::vector<std::size_t> kept;
  for (const auto& [key, members] : groups) {
    std::vector<RotatedBox> boxes;
    std::vector<double> scores;
    for (std::size_t i : members) {
      boxes.push_back(dets[i].box);
      scores.push_back(dets[i].score);
    }
    std::vector<std::size_t> local;
    try {
      local = rotated_nms(boxes, scores, iou_threshold, max_keep_per_group, threads);
    } catch (const invalid_box& e) {
      const std::ptrdiff_t global =
          e.index() >= 0 ? static_cast<std::ptrdiff_t>(members[e.index()]) : -1;
      throw invalid_box(e.dimension(),
                        "batched_nms: invalid box at index " + std::to_string(global),
                        global);
    }
    for (std::size_t l : local) kept.push_back(members[l]);
  }
  std::sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return a < b;
  });
  return kept;
}

}  // namespace orbox
