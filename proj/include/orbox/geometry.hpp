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

// Rotated boxes, convex polygon clipping and exact rotated IoU.
//
// Coordinates are image coordinates: x to the right, y down. A box is
// stored as two opposite corners A and C plus the angle theta between the
// x axis and edge AB, counted clockwise on screen. Corners A, B, C, D
// follow each other clockwise on screen, which is a positive (anticlockwise)
// winding in the usual mathematical orientation. Every polygon routine
// here works with that positive winding internally.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "orbox/parallel.hpp"

namespace orbox {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
  friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
  friend Point operator*(Point a, double s) { return {a.x * s, a.y * s}; }
  friend Point operator*(double s, Point a) { return {a.x * s, a.y * s}; }
  friend bool operator==(Point a, Point b) = default;
};

inline double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }

/// Five-parameter oriented rectangle (x_a, y_a, x_c, y_c, theta).
/// With theta == 0 the fields are exactly the VOC (x_min, y_min, x_max, y_max).
struct RotatedBox {
  double x_a = 0.0;
  double y_a = 0.0;
  double x_c = 0.0;
  double y_c = 0.0;
  double theta = 0.0;

  friend bool operator==(const RotatedBox&, const RotatedBox&) = default;
};

struct BoxDims {
  double width = 0.0;   // AB
  double height = 0.0;  // BC
};

struct BoxCorners {
  Point a, b, c, d;
};

/// File access and file format failures.
class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class invalid_box : public std::invalid_argument {
 public:
  enum class Dimension { kNonFinite, kWidth, kHeight };

  invalid_box(Dimension dim, const std::string& what, std::ptrdiff_t index = -1)
      : std::invalid_argument(what), dim_(dim), index_(index) {}

  Dimension dimension() const noexcept { return dim_; }
  /// Position of the offending box in a batch, -1 for a scalar call.
  std::ptrdiff_t index() const noexcept { return index_; }

 private:
  Dimension dim_;
  std::ptrdiff_t index_;
};

namespace detail {

inline std::string box_to_string(const RotatedBox& b) {
  return "(" + std::to_string(b.x_a) + ", " + std::to_string(b.y_a) + ", " +
         std::to_string(b.x_c) + ", " + std::to_string(b.y_c) + ", " +
         std::to_string(b.theta) + ")";
}

inline std::string index_suffix(std::ptrdiff_t index) {
  return index < 0 ? std::string() : " at index " + std::to_string(index);
}

}  // namespace detail

/// Maps any finite angle into [0, 2*pi).
inline double normalize_angle(double theta) {
  double r = std::fmod(theta, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

/// Maps any finite angle into [0, pi).
inline double canonical_angle(double theta) {
  double r = std::fmod(theta, kPi);
  if (r < 0.0) r += kPi;
  if (r >= kPi) r = 0.0;
  return r;
}

/// Width AB and height BC recovered from the two stored corners:
///   AB =  cos(theta) * dx + sin(theta) * dy
///   BC = -sin(theta) * dx + cos(theta) * dy
/// Both must be strictly positive.
inline BoxDims box_dims(const RotatedBox& box, std::ptrdiff_t index = -1) {
  if (!std::isfinite(box.x_a) || !std::isfinite(box.y_a) ||
      !std::isfinite(box.x_c) || !std::isfinite(box.y_c) ||
      !std::isfinite(box.theta)) {
    throw invalid_box(invalid_box::Dimension::kNonFinite,
                      "non-finite box " + detail::box_to_string(box) +
                          detail::index_suffix(index),
                      index);
  }
  const double dx = box.x_c - box.x_a;
  const double dy = box.y_c - box.y_a;
  const double c = std::cos(box.theta);
  const double s = std::sin(box.theta);
  const BoxDims dims{c * dx + s * dy, -s * dx + c * dy};
  if (!(dims.width > 0.0)) {
    throw invalid_box(invalid_box::Dimension::kWidth,
                      "box " + detail::box_to_string(box) +
                          " has non-positive width AB = " +
                          std::to_string(dims.width) + detail::index_suffix(index),
                      index);
  }
  if (!(dims.height > 0.0)) {
    throw invalid_box(invalid_box::Dimension::kHeight,
                      "box " + detail::box_to_string(box) +
                          " has non-positive height BC = " +
                          std::to_string(dims.height) + detail::index_suffix(index),
                      index);
  }
  return dims;
}

inline bool is_valid(const RotatedBox& box) noexcept {
  try {
    box_dims(box);
    return true;
  } catch (const invalid_box&) {
    return false;
  }
}

/// Validated constructor; theta is stored normalized to [0, 2*pi).
inline RotatedBox make_box(double x_a, double y_a, double x_c, double y_c,
                           double theta) {
  RotatedBox b{x_a, y_a, x_c, y_c, theta};
  box_dims(b);
  b.theta = normalize_angle(theta);
  return b;
}

inline BoxCorners box_corners(const RotatedBox& box) {
  const BoxDims d = box_dims(box);
  const Point u{std::cos(box.theta), std::sin(box.theta)};
  const Point v{-u.y, u.x};
  const Point a{box.x_a, box.y_a};
  const Point b = a + d.width * u;
  const Point dd = a + d.height * v;
  return {a, b, b + dd - a, dd};
}

inline Point box_center(const RotatedBox& box) {
  return {0.5 * (box.x_a + box.x_c), 0.5 * (box.y_a + box.y_c)};
}

/// Box with the given center, AB length `width`, BC length `height` and AB
/// direction `theta`.
inline RotatedBox box_from_center(Point center, double width, double height,
                                  double theta) {
  const Point u{std::cos(theta), std::sin(theta)};
  const Point v{-u.y, u.x};
  const Point half = 0.5 * width * u + 0.5 * height * v;
  const Point a = center - half;
  const Point c = center + half;
  return {a.x, a.y, c.x, c.y, normalize_angle(theta)};
}

/// Inverse of box_corners: keeps A and C, reads theta from edge AB.
inline RotatedBox box_from_corners(const BoxCorners& k) {
  const Point ab = k.b - k.a;
  return {k.a.x, k.a.y, k.c.x, k.c.y, normalize_angle(std::atan2(ab.y, ab.x))};
}

/// Same rectangle with theta in [0, pi); uses the rectangle's pi symmetry
/// (A and C swap roles, AB and BC keep their lengths).
inline RotatedBox canonicalize(const RotatedBox& box) {
  const double t = normalize_angle(box.theta);
  if (t >= kPi) {
    return {box.x_c, box.y_c, box.x_a, box.y_a, canonical_angle(t - kPi)};
  }
  return {box.x_a, box.y_a, box.x_c, box.y_c, t};
}

/// Convex polygon with a small fixed capacity, kept on the stack so the IoU
/// hot path never allocates. Two rectangles intersect in at most 8 vertices.
class ConvexPolygon {
 public:
  static constexpr std::size_t kCapacity = 16;

  ConvexPolygon() = default;
  ConvexPolygon(std::initializer_list<Point> pts) {
    for (const Point& p : pts) push_back(p);
  }
  explicit ConvexPolygon(std::span<const Point> pts) {
    for (const Point& p : pts) push_back(p);
  }

  void push_back(Point p) {
    if (size_ == kCapacity) {
      throw std::length_error("ConvexPolygon capacity exceeded");
    }
    pts_[size_++] = p;
  }
  void clear() noexcept { size_ = 0; }

  std::size_t size() const noexcept { return size_; }
  bool empty() const noexcept { return size_ == 0; }
  const Point& operator[](std::size_t i) const { return pts_[i]; }
  Point& operator[](std::size_t i) { return pts_[i]; }
  const Point* begin() const noexcept { return pts_.data(); }
  const Point* end() const noexcept { return pts_.data() + size_; }
  std::span<const Point> vertices() const noexcept { return {pts_.data(), size_}; }

  void reverse() noexcept { std::reverse(pts_.begin(), pts_.begin() + size_); }

 private:
  std::array<Point, kCapacity> pts_{};
  std::size_t size_ = 0;
};

inline ConvexPolygon to_polygon(const BoxCorners& k) { return {k.a, k.b, k.c, k.d}; }
inline ConvexPolygon to_polygon(const RotatedBox& box) {
  return to_polygon(box_corners(box));
}

/// Twice the signed area; positive for the winding of box corners.
inline double signed_area2(std::span<const Point> pts) {
  const std::size_t n = pts.size();
  if (n < 3) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& p = pts[i];
    const Point& q = pts[(i + 1) % n];
    s += p.x * q.y - q.x * p.y;
  }
  return s;
}

/// Shoelace area, independent of winding. Fewer than 3 vertices gives 0.
inline double polygon_area(const ConvexPolygon& poly) {
  return 0.5 * std::abs(signed_area2(poly.vertices()));
}

namespace detail {

inline double max_abs_coord(std::span<const Point> pts) {
  double m = 0.0;
  for (const Point& p : pts) m = std::max({m, std::abs(p.x), std::abs(p.y)});
  return m;
}

// One Sutherland-Hodgman pass: keeps the part of `in` on the left of the
// directed edge e0->e1 (inside for positive winding). Points within
// `tol` of the edge line count as inside.
inline void clip_half_plane(const ConvexPolygon& in, Point e0, Point e1,
                            double tol, ConvexPolygon& out) {
  out.clear();
  const std::size_t n = in.size();
  if (n == 0) return;
  const Point edge = e1 - e0;
  const double slack = tol * std::hypot(edge.x, edge.y);
  Point prev = in[n - 1];
  double d_prev = cross(edge, prev - e0);
  bool prev_in = d_prev >= -slack;
  for (std::size_t i = 0; i < n; ++i) {
    const Point cur = in[i];
    const double d_cur = cross(edge, cur - e0);
    const bool cur_in = d_cur >= -slack;
    if (cur_in != prev_in) {
      double t = d_prev / (d_prev - d_cur);
      t = std::clamp(t, 0.0, 1.0);
      out.push_back(prev + t * (cur - prev));
    }
    if (cur_in) out.push_back(cur);
    prev = cur;
    d_prev = d_cur;
    prev_in = cur_in;
  }
}

// Clips a positively wound subject by a positively wound convex clip.
inline ConvexPolygon clip_positive(const ConvexPolygon& subject,
                                   const ConvexPolygon& clip, double tol) {
  ConvexPolygon a = subject;
  ConvexPolygon b;
  const std::size_t m = clip.size();
  for (std::size_t i = 0; i < m && !a.empty(); ++i) {
    clip_half_plane(a, clip[i], clip[(i + 1) % m], tol, b);
    std::swap(a, b);
  }
  return a;
}

}  // namespace detail

/// Sutherland-Hodgman clipping of a convex subject by a convex clip polygon.
/// Either winding is accepted for both inputs; the result uses the
/// subject's winding. Points on a clip edge (within 1e-9 times the largest
/// coordinate magnitude) are kept. Disjoint inputs give an empty polygon.
inline ConvexPolygon clip_polygon(const ConvexPolygon& subject,
                                  const ConvexPolygon& clip) {
  if (subject.size() < 3 || clip.size() < 3) return {};
  const double tol = 1e-9 * std::max(detail::max_abs_coord(subject.vertices()),
                                     detail::max_abs_coord(clip.vertices()));
  ConvexPolygon s = subject;
  ConvexPolygon c = clip;
  const bool subject_negative = signed_area2(s.vertices()) < 0.0;
  if (subject_negative) s.reverse();
  if (signed_area2(c.vertices()) < 0.0) c.reverse();
  ConvexPolygon out = detail::clip_positive(s, c, tol);
  if (subject_negative) out.reverse();
  return out;
}

namespace detail {

// Per-box data reused across many IoU evaluations.
struct BoxGeom {
  RotatedBox box;
  ConvexPolygon poly;
  Point center;
  double area = 0.0;
  double radius = 0.0;
  double max_abs = 0.0;
};

inline BoxGeom make_geom(const RotatedBox& box, std::ptrdiff_t index = -1) {
  const BoxDims d = box_dims(box, index);
  const Point u{std::cos(box.theta), std::sin(box.theta)};
  const Point v{-u.y, u.x};
  const Point a{box.x_a, box.y_a};
  const Point b = a + d.width * u;
  const Point dd = a + d.height * v;
  BoxGeom g;
  g.box = box;
  g.poly = {a, b, b + dd - a, dd};
  g.center = box_center(box);
  g.area = d.width * d.height;
  g.radius = 0.5 * std::hypot(d.width, d.height);
  g.max_abs = max_abs_coord(g.poly.vertices());
  return g;
}

inline bool box_less(const RotatedBox& a, const RotatedBox& b) {
  if (a.x_a != b.x_a) return a.x_a < b.x_a;
  if (a.y_a != b.y_a) return a.y_a < b.y_a;
  if (a.x_c != b.x_c) return a.x_c < b.x_c;
  if (a.y_c != b.y_c) return a.y_c < b.y_c;
  return a.theta < b.theta;
}

inline double iou_geom(const BoxGeom& ga, const BoxGeom& gb) {
  if (ga.box == gb.box) return 1.0;
  const Point dc = ga.center - gb.center;
  const double reach = ga.radius + gb.radius;
  if (dot(dc, dc) > reach * reach * (1.0 + 1e-12)) return 0.0;
  // Fixed argument order makes the result bitwise symmetric.
  const BoxGeom& first = box_less(gb.box, ga.box) ? gb : ga;
  const BoxGeom& second = (&first == &ga) ? gb : ga;
  const double tol = 1e-9 * std::max(first.max_abs, second.max_abs);
  const ConvexPolygon inter = clip_positive(first.poly, second.poly, tol);
  double inter_area = polygon_area(inter);
  inter_area = std::min({inter_area, first.area, second.area});
  const double uni = first.area + second.area - inter_area;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter_area / uni, 0.0, 1.0);
}

}  // namespace detail

/// Exact IoU of two rotated boxes: intersection by polygon clipping,
/// area by the shoelace sum. Symmetric bit for bit.
inline double rotated_iou(const RotatedBox& a, const RotatedBox& b) {
  return detail::iou_geom(detail::make_geom(a), detail::make_geom(b));
}

/// Row-major |a| x |b| matrix of rotated_iou values. Rows are distributed
/// over `threads` (0 = default); the output does not depend on it.
inline std::vector<double> iou_matrix(std::span<const RotatedBox> a,
                                      std::span<const RotatedBox> b,
                                      unsigned threads = 0) {
  std::vector<detail::BoxGeom> ga;
  std::vector<detail::BoxGeom> gb;
  ga.reserve(a.size());
  gb.reserve(b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ga.push_back(detail::make_geom(a[i], static_cast<std::ptrdiff_t>(i)));
  }
  for (std::size_t j = 0; j < b.size(); ++j) {
    gb.push_back(detail::make_geom(b[j], static_cast<std::ptrdiff_t>(j)));
  }
  std::vector<double> out(a.size() * b.size(), 0.0);
  const std::size_t cols = b.size();
  parallel_for(a.size(), 8, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        out[i * cols + j] = detail::iou_geom(ga[i], gb[j]);
      }
    }
  });
  return out;
}

}  // namespace orbox
