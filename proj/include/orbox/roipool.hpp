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

// Coarse rotated RoI max pooling.
//
// The RoI is mapped to feature coordinates, its corners A and C are rounded
// to integer pixels and the rounded extents along AB and BC are split into
// k parts by integer flooring, exactly like classic RoI pooling when
// theta == 0. A cell takes the max over the feature pixels (integer
// coordinates) inside its rotated rectangle; membership is a pair of dot
// products against the cell's edges. A cell that contains no pixel takes
// the pixel nearest to its center.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "orbox/geometry.hpp"
#include "orbox/parallel.hpp"

namespace orbox {

struct FeatureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> data;  // row-major (H, W, C)
  double spatial_stride = 1.0;

  FeatureMap() = default;
  FeatureMap(std::size_t h, std::size_t w, std::size_t c, double stride = 1.0,
             double fill = 0.0)
      : height(h), width(w), channels(c), data(h * w * c, fill), spatial_stride(stride) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return data[(y * width + x) * channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data[(y * width + x) * channels + c];
  }

  void validate() const {
    if (height == 0 || width == 0 || channels == 0) {
      throw std::invalid_argument("FeatureMap: dimensions must be positive");
    }
    if (data.size() != height * width * channels) {
      throw std::invalid_argument("FeatureMap: data length " + std::to_string(data.size()) +
                                  " != H*W*C = " +
                                  std::to_string(height * width * channels));
    }
    if (!(spatial_stride > 0.0)) {
      throw std::invalid_argument("FeatureMap: spatial_stride must be > 0");
    }
  }
};

struct PixelCoord {
  std::int32_t y = 0;
  std::int32_t x = 0;
  friend bool operator==(PixelCoord, PixelCoord) = default;
};

struct PoolResult {
  std::size_t pooled_size = 0;  // k
  std::size_t channels = 0;
  std::vector<double> output;       // (k, k, C); row index runs along BC
  std::vector<PixelCoord> argmax;   // (k, k, C)
  std::vector<char> fill_mask;      // (k, k)

  std::size_t index(std::size_t row, std::size_t col, std::size_t c) const {
    return (row * pooled_size + col) * channels + c;
  }
};

/// Rotated rectangle of one pooling cell in feature coordinates.
struct PoolCell {
  Point origin;     // cell corner A
  Point u, v;       // unit directions of AB and BC
  double len_u = 0;  // integer extents after quantization
  double len_v = 0;

  Point center() const { return origin + (0.5 * len_u) * u + (0.5 * len_v) * v; }
};

namespace detail {

inline constexpr double kMembershipEps = 1e-9;

inline long round_to_long(double x) { return static_cast<long>(std::llround(x)); }

}  // namespace detail

/// Quantized k x k cell layout of `roi` (image coordinates) on a map with
/// the given stride. Cells are row-major with rows along BC.
inline std::vector<PoolCell> pooling_cells(const RotatedBox& roi, double spatial_stride,
                                           std::size_t k) {
  box_dims(roi);
  const double scale = 1.0 / spatial_stride;
  const Point u{std::cos(roi.theta), std::sin(roi.theta)};
  const Point v{-u.y, u.x};
  const Point a_q{static_cast<double>(detail::round_to_long(roi.x_a * scale)),
                  static_cast<double>(detail::round_to_long(roi.y_a * scale))};
  const Point c_q{static_cast<double>(detail::round_to_long(roi.x_c * scale)),
                  static_cast<double>(detail::round_to_long(roi.y_c * scale))};
  const long w_q = std::max(0L, detail::round_to_long(dot(c_q - a_q, u)));
  const long h_q = std::max(0L, detail::round_to_long(dot(c_q - a_q, v)));
  const long kk = static_cast<long>(k);

  std::vector<PoolCell> cells;
  cells.reserve(k * k);
  for (long i = 0; i < kk; ++i) {
    const long v0 = (i * h_q) / kk;
    const long v1 = ((i + 1) * h_q) / kk;
    for (long j = 0; j < kk; ++j) {
      const long u0 = (j * w_q) / kk;
      const long u1 = ((j + 1) * w_q) / kk;
      PoolCell cell;
      cell.u = u;
      cell.v = v;
      cell.origin = a_q + static_cast<double>(u0) * u + static_cast<double>(v0) * v;
      cell.len_u = static_cast<double>(u1 - u0);
      cell.len_v = static_cast<double>(v1 - v0);
      cells.push_back(cell);
    }
  }
  return cells;
}

/// Dot-product membership of an integer pixel in a cell, half-open on the
/// far edges so neighbouring cells never share a pixel.
inline bool cell_contains(const PoolCell& cell, Point p) {
  const Point d = p - cell.origin;
  const double s = dot(d, cell.u);
  const double t = dot(d, cell.v);
  constexpr double eps = detail::kMembershipEps;
  return s >= -eps && s < cell.len_u - eps && t >= -eps && t < cell.len_v - eps;
}

inline PoolResult rotated_roi_pool(const FeatureMap& fmap, const RotatedBox& roi,
                                   std::size_t k, unsigned threads = 0) {
  fmap.validate();
  if (k == 0) throw std::invalid_argument("rotated_roi_pool: output size must be >= 1");
  box_dims(roi);

  {
    const double scale = 1.0 / fmap.spatial_stride;
    const RotatedBox scaled{roi.x_a * scale, roi.y_a * scale, roi.x_c * scale,
                            roi.y_c * scale, roi.theta};
    const double hw = static_cast<double>(fmap.width) - 0.5;
    const double hh = static_cast<double>(fmap.height) - 0.5;
    const ConvexPolygon extent{{-0.5, -0.5}, {hw, -0.5}, {hw, hh}, {-0.5, hh}};
    if (!(polygon_area(clip_polygon(to_polygon(scaled), extent)) > 0.0)) {
      throw std::out_of_range("rotated_roi_pool: roi lies entirely outside the feature map");
    }
  }

  const std::vector<PoolCell> cells = pooling_cells(roi, fmap.spatial_stride, k);
  const std::size_t C = fmap.channels;
  const long W = static_cast<long>(fmap.width);
  const long H = static_cast<long>(fmap.height);

  PoolResult res;
  res.pooled_size = k;
  res.channels = C;
  res.output.assign(k * k * C, 0.0);
  res.argmax.assign(k * k * C, PixelCoord{});
  res.fill_mask.assign(k * k, 0);

  parallel_for(cells.size(), 4, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<char> found(C);
    for (std::size_t ci = begin; ci < end; ++ci) {
      const PoolCell& cell = cells[ci];
      double* out = res.output.data() + ci * C;
      PixelCoord* arg = res.argmax.data() + ci * C;
      std::fill(found.begin(), found.end(), 0);
      bool any = false;

      if (cell.len_u > 0.0 && cell.len_v > 0.0) {
        const Point p0 = cell.origin;
        const Point p1 = p0 + cell.len_u * cell.u;
        const Point p2 = p1 + cell.len_v * cell.v;
        const Point p3 = p0 + cell.len_v * cell.v;
        const double xmin = std::min({p0.x, p1.x, p2.x, p3.x});
        const double xmax = std::max({p0.x, p1.x, p2.x, p3.x});
        const double ymin = std::min({p0.y, p1.y, p2.y, p3.y});
        const double ymax = std::max({p0.y, p1.y, p2.y, p3.y});
        const long x0 = std::max(0L, static_cast<long>(std::floor(xmin)));
        const long x1 = std::min(W - 1, static_cast<long>(std::ceil(xmax)));
        const long y0 = std::max(0L, static_cast<long>(std::floor(ymin)));
        const long y1 = std::min(H - 1, static_cast<long>(std::ceil(ymax)));
        for (long y = y0; y <= y1; ++y) {
          for (long x = x0; x <= x1; ++x) {
            if (!cell_contains(cell, {static_cast<double>(x), static_cast<double>(y)})) continue;
            any = true;
            const double* px = fmap.data.data() + (static_cast<std::size_t>(y) * fmap.width +
                                                   static_cast<std::size_t>(x)) * C;
            // Row-major scan with strict '>' keeps the lowest index on ties.
            for (std::size_t c = 0; c < C; ++c) {
              if (!found[c] || px[c] > out[c]) {
                out[c] = px[c];
                arg[c] = {static_cast<std::int32_t>(y), static_cast<std::int32_t>(x)};
                found[c] = 1;
              }
            }
          }
        }
      }

      if (!any) {
        const Point ctr = cell.center();
        const long x = std::clamp(static_cast<long>(std::llround(ctr.x)), 0L, W - 1);
        const long y = std::clamp(static_cast<long>(std::llround(ctr.y)), 0L, H - 1);
        for (std::size_t c = 0; c < C; ++c) {
          out[c] = fmap.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c);
          arg[c] = {static_cast<std::int32_t>(y), static_cast<std::int32_t>(x)};
        }
        res.fill_mask[ci] = 1;
      }
    }
  });
  return res;
}

/// Scatter-adds grad_output into an (H, W, C) grid at the recorded argmax
/// locations. Channels are split across threads, so no two threads touch
/// the same entry and summation order is fixed.
inline std::vector<double> rotated_roi_pool_backward(std::span<const double> grad_output,
                                                     const PoolResult& result,
                                                     std::size_t height, std::size_t width,
                                                     std::size_t channels,
                                                     unsigned threads = 0) {
  const std::size_t kk = result.pooled_size * result.pooled_size;
  if (grad_output.size() != kk * result.channels || result.channels != channels ||
      result.argmax.size() != grad_output.size()) {
    throw std::invalid_argument("rotated_roi_pool_backward: shape mismatch (grad " +
                                std::to_string(grad_output.size()) + ", expected " +
                                std::to_string(kk * channels) + ")");
  }
  std::vector<double> grad(height * width * channels, 0.0);
  parallel_for(channels, 1, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t cell = 0; cell < kk; ++cell) {
      for (std::size_t c = begin; c < end; ++c) {
        const std::size_t idx = cell * channels + c;
        const PixelCoord p = result.argmax[idx];
        if (p.y < 0 || p.x < 0 || static_cast<std::size_t>(p.y) >= height ||
            static_cast<std::size_t>(p.x) >= width) {
          throw std::out_of_range("rotated_roi_pool_backward: argmax outside the map");
        }
        grad[(static_cast<std::size_t>(p.y) * width + static_cast<std::size_t>(p.x)) *
                 channels + c] += grad_output[idx];
      }
    }
  });
  return grad;
}

// Feature map file: 16-byte header (magic, H, W, C as little-endian uint32)
// followed by H*W*C little-endian float32 values in (H, W, C) order.
inline constexpr std::uint32_t kFeatureMapMagic = 0x314D464Fu;  // "OFM1"

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  os.write(b, 4);
}

inline std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void write_feature_map(const std::string& path, const FeatureMap& fmap) {
  fmap.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open " + path + " for writing");
  detail::put_u32(os, kFeatureMapMagic);
  detail::put_u32(os, static_cast<std::uint32_t>(fmap.height));
  detail::put_u32(os, static_cast<std::uint32_t>(fmap.width));
  detail::put_u32(os, static_cast<std::uint32_t>(fmap.channels));
  for (double d : fmap.data) {
    detail::put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(d)));
  }
  if (!os) throw io_error("failed writing " + path);
}

inline FeatureMap read_feature_map(const std::string& path, double spatial_stride = 1.0) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open " + path);
  unsigned char hdr[16];
  if (!is.read(reinterpret_cast<char*>(hdr), 16)) {
    throw io_error(path + ": truncated feature map header");
  }
  if (detail::get_u32(hdr) != kFeatureMapMagic) {
    throw io_error(path + ": bad feature map magic");
  }
  FeatureMap f;
  f.height = detail::get_u32(hdr + 4);
  f.width = detail::get_u32(hdr + 8);
  f.channels = detail::get_u32(hdr + 12);
  f.spatial_stride = spatial_stride;
  is.seekg(0, std::ios::end);
  const auto payload = static_cast<std::uint64_t>(is.tellg()) - 16;
  is.seekg(16);
  const std::uint64_t n64 = std::uint64_t{f.height} * f.width * f.channels;
  if (n64 * 4 != payload) {
    throw io_error(path + ": header declares " + std::to_string(n64) + " values but the file holds " +
                   std::to_string(payload) + " bytes");
  }
  const std::size_t n = static_cast<std::size_t>(n64);
  std::vector<unsigned char> raw(n * 4);
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw io_error(path + ": expected " + std::to_string(n) + " float32 values");
  }
  f.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    f.data[i] = std::bit_cast<float>(detail::get_u32(raw.data() + 4 * i));
  }
  f.validate();
  return f;
}

}  // namespace orbox
