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

// Seeded random boxes for benchmarks and tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "orbox/anchors.hpp"
#include "orbox/geometry.hpp"

namespace orbox::scene {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * detail::uniform01(rng);
}

inline RotatedBox random_box(std::mt19937_64& rng, double extent = 1000.0,
                             double min_side = 4.0, double max_side = 120.0) {
  const Point c{uniform(rng, 0.0, extent), uniform(rng, 0.0, extent)};
  return box_from_center(c, uniform(rng, min_side, max_side), uniform(rng, min_side, max_side),
                         uniform(rng, 0.0, kTwoPi));
}

/// Boxes jittered around a few cluster seeds, so most boxes overlap several
/// others, as detector proposals do.
inline std::vector<RotatedBox> clustered_boxes(std::mt19937_64& rng, std::size_t n,
                                               double extent = 1000.0,
                                               std::size_t per_cluster = 8) {
  std::vector<RotatedBox> out;
  out.reserve(n);
  const std::size_t clusters = std::max<std::size_t>(1, n / per_cluster);
  std::vector<RotatedBox> seeds;
  for (std::size_t i = 0; i < clusters; ++i) seeds.push_back(random_box(rng, extent, 10.0, 80.0));
  for (std::size_t i = 0; i < n; ++i) {
    const RotatedBox& s = seeds[static_cast<std::size_t>(detail::uniform01(rng) * clusters)];
    const BoxDims d = box_dims(s);
    const Point c = box_center(s);
    const double jitter = 0.25 * std::min(d.width, d.height);
    out.push_back(box_from_center(
        {c.x + uniform(rng, -jitter, jitter), c.y + uniform(rng, -jitter, jitter)},
        d.width * uniform(rng, 0.8, 1.25), d.height * uniform(rng, 0.8, 1.25),
        s.theta + uniform(rng, -0.3, 0.3)));
  }
  return out;
}

inline std::vector<double> random_scores(std::mt19937_64& rng, std::size_t n) {
  std::vector<double> s(n);
  for (double& v : s) v = detail::uniform01(rng);
  return s;
}

}  // namespace orbox::scene
