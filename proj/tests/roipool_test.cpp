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

#include "orbox/roipool.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "scene.hpp"

namespace orbox {
namespace {

FeatureMap random_map(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t c) {
  FeatureMap f;
  f.height = h;
  f.width = w;
  f.channels = c;
  f.data.resize(h * w * c);
  for (double& v : f.data) v = scene::uniform(rng, -1.0, 1.0);
  return f;
}

TEST(RoiPool, ConstantMap) {
  std::mt19937_64 rng(51);
  FeatureMap f;
  f.height = 20;
  f.width = 30;
  f.channels = 3;
  f.data.assign(20 * 30 * 3, 2.5);
  for (int i = 0; i < 50; ++i) {
    const RotatedBox roi = box_from_center({scene::uniform(rng, 0, 30), scene::uniform(rng, 0, 20)},
                                           scene::uniform(rng, 0.5, 25), scene::uniform(rng, 0.5, 25),
                                           scene::uniform(rng, 0, kTwoPi));
    const PoolResult r = rotated_roi_pool(f, roi, 1 + i % 7);
    for (double v : r.output) EXPECT_EQ(v, 2.5);
  }
}

TEST(RoiPool, AxisAlignedDivisibleMatchesClassicPooling) {
  std::mt19937_64 rng(52);
  for (int i = 0; i < 100; ++i) {
    const FeatureMap f = random_map(rng, 40, 48, 1 + i % 3);
    const long k = 1 + static_cast<long>(rng() % 7);
    const long w = k * (1 + static_cast<long>(rng() % 5));
    const long h = k * (1 + static_cast<long>(rng() % 5));
    const long x0 = static_cast<long>(rng() % static_cast<std::uint64_t>(48 - w + 1));
    const long y0 = static_cast<long>(rng() % static_cast<std::uint64_t>(40 - h + 1));
    const RotatedBox roi{double(x0), double(y0), double(x0 + w), double(y0 + h), 0.0};
    const PoolResult r = rotated_roi_pool(f, roi, static_cast<std::size_t>(k));
    const auto ref = oracle::axis_aligned_pool(f, x0, y0, w, h, k);
    EXPECT_EQ(r.output, ref.output);
    for (std::size_t j = 0; j < ref.argmax.size(); ++j) {
      EXPECT_EQ(r.argmax[j].y, ref.argmax[j].y);
      EXPECT_EQ(r.argmax[j].x, ref.argmax[j].x);
    }
    for (char m : r.fill_mask) EXPECT_EQ(m, 0);
  }
}

TEST(RoiPool, AxisAlignedAnyExtentMatchesFlooredBins) {
  std::mt19937_64 rng(53);
  for (int i = 0; i < 100; ++i) {
    const FeatureMap f = random_map(rng, 32, 32, 2);
    const long k = 1 + static_cast<long>(rng() % 7);
    const long w = k + static_cast<long>(rng() % 20);
    const long h = k + static_cast<long>(rng() % 20);
    const long x0 = static_cast<long>(rng() % static_cast<std::uint64_t>(32 - w + 1));
    const long y0 = static_cast<long>(rng() % static_cast<std::uint64_t>(32 - h + 1));
    // Fractional corners round to the same integer rectangle.
    const RotatedBox roi{x0 + 0.3, y0 - 0.2, x0 + w - 0.4, y0 + h + 0.1, 0.0};
    const PoolResult r = rotated_roi_pool(f, roi, static_cast<std::size_t>(k));
    EXPECT_EQ(r.output, oracle::axis_aligned_pool(f, x0, y0, w, h, k).output);
  }
}

TEST(RoiPool, StrideScalesRoi) {
  std::mt19937_64 rng(54);
  FeatureMap f = random_map(rng, 16, 16, 1);
  const PoolResult direct = rotated_roi_pool(f, {2, 3, 10, 11, 0}, 4);
  f.spatial_stride = 8;
  const PoolResult scaled = rotated_roi_pool(f, {16, 24, 80, 88, 0}, 4);
  EXPECT_EQ(direct.output, scaled.output);
}

TEST(RoiPool, TinyRoiFillsFromNearestPixel) {
  std::mt19937_64 rng(55);
  const FeatureMap f = random_map(rng, 10, 10, 2);
  const RotatedBox roi = box_from_center({4.2, 6.9}, 0.3, 0.3, 0.4);
  const PoolResult r = rotated_roi_pool(f, roi, 1);
  ASSERT_EQ(r.fill_mask.size(), 1u);
  EXPECT_EQ(r.fill_mask[0], 1);
  EXPECT_EQ(r.argmax[0].x, 4);
  EXPECT_EQ(r.argmax[0].y, 7);
  EXPECT_EQ(r.output[0], f.data[(7 * 10 + 4) * 2]);
  EXPECT_EQ(r.output[1], f.data[(7 * 10 + 4) * 2 + 1]);
}

TEST(RoiPool, ArgmaxInsideMapAndCell) {
  std::mt19937_64 rng(56);
  for (int i = 0; i < 100; ++i) {
    const FeatureMap f = random_map(rng, 24, 24, 2);
    const RotatedBox roi = box_from_center({scene::uniform(rng, 0, 24), scene::uniform(rng, 0, 24)},
                                           scene::uniform(rng, 1, 30), scene::uniform(rng, 1, 30),
                                           scene::uniform(rng, 0, kTwoPi));
    const std::size_t k = 1 + i % 7;
    const PoolResult r = rotated_roi_pool(f, roi, k);
    const auto cells = pooling_cells(roi, 1.0, k);
    for (std::size_t c = 0; c < k * k; ++c) {
      for (std::size_t ch = 0; ch < 2; ++ch) {
        const PixelCoord p = r.argmax[c * 2 + ch];
        ASSERT_GE(p.x, 0);
        ASSERT_GE(p.y, 0);
        ASSERT_LT(p.x, 24);
        ASSERT_LT(p.y, 24);
        EXPECT_EQ(r.output[c * 2 + ch], f.data[(std::size_t(p.y) * 24 + std::size_t(p.x)) * 2 + ch]);
        if (!r.fill_mask[c]) {
          EXPECT_TRUE(cell_contains(cells[c], {double(p.x), double(p.y)}));
        }
      }
    }
  }
}

TEST(RoiPool, CellsPartitionPixels) {
  std::mt19937_64 rng(57);
  for (int i = 0; i < 50; ++i) {
    const RotatedBox roi = box_from_center({30, 30}, scene::uniform(rng, 5, 30),
                                           scene::uniform(rng, 5, 30), scene::uniform(rng, 0, kTwoPi));
    const auto cells = pooling_cells(roi, 1.0, 5);
    for (int y = 0; y < 60; ++y) {
      for (int x = 0; x < 60; ++x) {
        int owners = 0;
        for (const auto& c : cells) owners += cell_contains(c, {double(x), double(y)});
        ASSERT_LE(owners, 1);
      }
    }
  }
}

TEST(RoiPool, TiesPickLowestIndex) {
  FeatureMap f;
  f.height = 4;
  f.width = 4;
  f.channels = 1;
  f.data.assign(16, 1.0);
  const PoolResult r = rotated_roi_pool(f, {0, 0, 4, 4, 0}, 1);
  EXPECT_EQ(r.argmax[0].x, 0);
  EXPECT_EQ(r.argmax[0].y, 0);
}

// Map g with g(ctr + R(t) (p - ctr)) = f(p).
FeatureMap rotate_map(const FeatureMap& f, Point ctr, double t, double outside) {
  FeatureMap g = f;
  for (std::size_t y = 0; y < f.height; ++y) {
    for (std::size_t x = 0; x < f.width; ++x) {
      const double dx = double(x) - ctr.x, dy = double(y) - ctr.y;
      const long sx = std::lround(std::cos(t) * dx + std::sin(t) * dy + ctr.x);
      const long sy = std::lround(-std::sin(t) * dx + std::cos(t) * dy + ctr.y);
      const bool in = sx >= 0 && sy >= 0 && sx < long(f.width) && sy < long(f.height);
      g.data[y * f.width + x] = in ? f.data[std::size_t(sy) * f.width + std::size_t(sx)] : outside;
    }
  }
  return g;
}

TEST(RoiPool, QuarterTurnsAreExact) {
  std::mt19937_64 rng(58);
  for (int i = 0; i < 40; ++i) {
    const FeatureMap f = random_map(rng, 64, 64, 1);
    const std::size_t k = 1 + i % 6;
    const double w = 2.0 * (1 + rng() % 12), h = 2.0 * (1 + rng() % 12);
    const Point ctr{32, 32};
    const RotatedBox axis{ctr.x - w / 2, ctr.y - h / 2, ctr.x + w / 2, ctr.y + h / 2, 0.0};
    const PoolResult a = rotated_roi_pool(f, axis, k);
    for (int q = 1; q < 4; ++q) {
      const double t = q * kPi / 2;
      const PoolResult b = rotated_roi_pool(rotate_map(f, ctr, t, -10.0), box_from_center(ctr, w, h, t), k);
      ASSERT_EQ(a.fill_mask, b.fill_mask);
      // Filled cells round a half-integer center, which has no rotation symmetry.
      for (std::size_t c = 0; c < k * k; ++c) {
        if (!a.fill_mask[c]) {
          EXPECT_EQ(a.output[c], b.output[c]) << "quarter turns " << q;
        }
      }
    }
  }
}

TEST(RoiPool, AnyRotationOfSmoothMapIsClose) {
  // On a smooth map the pooled maxima move by at most the Lipschitz
  // constant times the pixel-grid misalignment.
  std::mt19937_64 rng(64);
  const std::size_t n = 96;
  FeatureMap f(n, n, 1);
  const Point ctr{48, 48};
  auto field = [](double x, double y) { return std::sin(x / 7.0) + std::cos(y / 5.0); };
  for (int i = 0; i < 40; ++i) {
    const double t = scene::uniform(rng, 0, kTwoPi);
    FeatureMap g(n, n, 1);
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        f.at(y, x, 0) = field(double(x), double(y));
        const double dx = double(x) - ctr.x, dy = double(y) - ctr.y;
        g.at(y, x, 0) = field(std::cos(t) * dx + std::sin(t) * dy + ctr.x,
                              -std::sin(t) * dx + std::cos(t) * dy + ctr.y);
      }
    }
    const double w = 8.0 * (1 + rng() % 4), h = 8.0 * (1 + rng() % 4);
    const std::size_t k = 4;
    const RotatedBox axis{ctr.x - w / 2, ctr.y - h / 2, ctr.x + w / 2, ctr.y + h / 2, 0.0};
    const PoolResult a = rotated_roi_pool(f, axis, k);
    const PoolResult b = rotated_roi_pool(g, box_from_center(ctr, w, h, t), k);
    const double lipschitz = std::hypot(1.0 / 7.0, 1.0 / 5.0);
    for (std::size_t c = 0; c < k * k; ++c) {
      EXPECT_LE(std::abs(a.output[c] - b.output[c]), 2.0 * lipschitz) << "theta " << t;
    }
  }
}

TEST(RoiPool, OutsideMapThrows) {
  std::mt19937_64 rng(59);
  const FeatureMap f = random_map(rng, 8, 8, 1);
  EXPECT_THROW(rotated_roi_pool(f, {100, 100, 110, 110, 0}, 2), std::out_of_range);
  EXPECT_THROW(rotated_roi_pool(f, {0, 0, 4, 4, 0}, 0), std::invalid_argument);
  EXPECT_THROW(rotated_roi_pool(f, {0, 0, -4, 4, 0}, 2), invalid_box);
  FeatureMap bad = f;
  bad.data.pop_back();
  EXPECT_THROW(rotated_roi_pool(bad, {0, 0, 4, 4, 0}, 2), std::invalid_argument);
}

TEST(RoiPoolBackward, ZeroGradient) {
  std::mt19937_64 rng(60);
  const FeatureMap f = random_map(rng, 12, 12, 2);
  const PoolResult r = rotated_roi_pool(f, {1, 1, 9, 9, 0.3}, 3);
  const auto g = rotated_roi_pool_backward(std::vector<double>(18, 0.0), r, 12, 12, 2);
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(RoiPoolBackward, ScattersToArgmax) {
  std::mt19937_64 rng(61);
  const FeatureMap f = random_map(rng, 12, 12, 1);
  const PoolResult r = rotated_roi_pool(f, {0, 0, 12, 12, 0}, 3);
  std::vector<double> go(9);
  for (std::size_t i = 0; i < 9; ++i) go[i] = double(i + 1);
  const auto g = rotated_roi_pool_backward(go, r, 12, 12, 1);
  double total = 0.0;
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(g[std::size_t(r.argmax[i].y) * 12 + std::size_t(r.argmax[i].x)], go[i]);
    total += go[i];
  }
  double sum = 0.0;
  for (double v : g) sum += v;
  EXPECT_EQ(sum, total);
}

TEST(RoiPoolBackward, SharedArgmaxAccumulates) {
  FeatureMap f;
  f.height = 3;
  f.width = 3;
  f.channels = 1;
  f.data.assign(9, 0.0);
  f.data[4] = 5.0;
  // Tiny RoI around the center pixel: every cell falls back to pixel (1, 1).
  const PoolResult r = rotated_roi_pool(f, box_from_center({1, 1}, 0.2, 0.2, 0), 2);
  const auto g = rotated_roi_pool_backward(std::vector<double>{1, 2, 3, 4}, r, 3, 3, 1);
  EXPECT_EQ(g[4], 10.0);
}

TEST(RoiPoolBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(62);
  for (int rep = 0; rep < 20; ++rep) {
    FeatureMap f = random_map(rng, 12, 12, 1);
    const RotatedBox roi = box_from_center({scene::uniform(rng, 3, 9), scene::uniform(rng, 3, 9)},
                                           scene::uniform(rng, 3, 12), scene::uniform(rng, 3, 12),
                                           scene::uniform(rng, 0, kTwoPi));
    const std::size_t k = 1 + rep % 4;
    std::vector<double> go(k * k);
    for (double& v : go) v = scene::uniform(rng, -1, 1);
    const PoolResult base = rotated_roi_pool(f, roi, k);
    const auto analytic = rotated_roi_pool_backward(go, base, 12, 12, 1);

    auto loss = [&](const std::vector<double>& x, std::vector<PixelCoord>* arg) {
      FeatureMap m = f;
      m.data = x;
      const PoolResult r = rotated_roi_pool(m, roi, k);
      if (arg) *arg = r.argmax;
      double s = 0.0;
      for (std::size_t i = 0; i < go.size(); ++i) s += go[i] * r.output[i];
      return s;
    };
    const double h = 1e-6;
    std::vector<double> fd, an;
    for (std::size_t p = 0; p < f.data.size(); ++p) {
      std::vector<double> x = f.data;
      std::vector<PixelCoord> up_arg, down_arg;
      x[p] += h;
      const double up = loss(x, &up_arg);
      x[p] -= 2 * h;
      const double down = loss(x, &down_arg);
      bool tied = false;
      for (std::size_t i = 0; i < base.argmax.size(); ++i) {
        tied |= up_arg[i].x != base.argmax[i].x || up_arg[i].y != base.argmax[i].y ||
                down_arg[i].x != base.argmax[i].x || down_arg[i].y != base.argmax[i].y;
      }
      if (tied) continue;
      fd.push_back((up - down) / (2 * h));
      an.push_back(analytic[p]);
    }
    ASSERT_GT(fd.size(), f.data.size() / 2);
    EXPECT_LE(oracle::relative_error(an, fd), 1e-4);
  }
}

TEST(FeatureMapFile, RoundTrip) {
  std::mt19937_64 rng(63);
  FeatureMap f = random_map(rng, 5, 7, 3);
  for (double& v : f.data) v = static_cast<float>(v);
  const auto path = std::filesystem::temp_directory_path() / "orbox_fmap_test.bin";
  write_feature_map(path.string(), f);
  EXPECT_EQ(std::filesystem::file_size(path), 16u + 5 * 7 * 3 * 4);
  const FeatureMap g = read_feature_map(path.string(), 4.0);
  EXPECT_EQ(g.height, 5u);
  EXPECT_EQ(g.width, 7u);
  EXPECT_EQ(g.channels, 3u);
  EXPECT_EQ(g.spatial_stride, 4.0);
  EXPECT_EQ(g.data, f.data);
  std::ifstream is(path, std::ios::binary);
  unsigned char magic[4];
  is.read(reinterpret_cast<char*>(magic), 4);
  EXPECT_EQ(magic[0], 'O');
  EXPECT_EQ(magic[1], 'F');
  EXPECT_EQ(magic[2], 'M');
  EXPECT_EQ(magic[3], '1');
  is.close();
  std::filesystem::resize_file(path, 30);
  EXPECT_THROW(read_feature_map(path.string()), io_error);
  std::filesystem::remove(path);
  EXPECT_THROW(read_feature_map(path.string()), io_error);
}

}  // namespace
}  // namespace orbox
