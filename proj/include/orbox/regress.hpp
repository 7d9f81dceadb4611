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

// Box regression targets between anchors and oriented ground truth, and the
// five-term smooth-L1 regression cost.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "orbox/geometry.hpp"

namespace orbox {

struct RegressionDelta {
  double dx = 0.0;
  double dy = 0.0;
  double dlogw = 0.0;
  double dlogh = 0.0;
  double dtheta = 0.0;

  std::array<double, 5> as_array() const { return {dx, dy, dlogw, dlogh, dtheta}; }
  static RegressionDelta from_array(const std::array<double, 5>& a) {
    return {a[0], a[1], a[2], a[3], a[4]};
  }
  friend bool operator==(const RegressionDelta&, const RegressionDelta&) = default;
};

/// Magnitudes closer than this are treated as a tie in angle_delta.
inline constexpr double kAngleTieTolerance = 1e-12;

/// Angle offset from `theta_pred` to `theta_target` that ignores the
/// rectangle's pi symmetry. With d = theta_target - theta_pred the
/// candidates are {d - pi, d + pi, d} and the one with the smallest
/// magnitude wins. Two candidates of equal magnitude (|d| = pi/2) resolve to
/// the positive one.
///
/// The formula does not wrap by 2*pi: inputs in [0, pi) give a result in
/// [-pi/2, pi/2]; inputs in [0, 2*pi) can give up to 3*pi/2 in magnitude.
inline double angle_delta(double theta_target, double theta_pred) {
  const double d = theta_target - theta_pred;
  const std::array<double, 3> v{d - kPi, d + kPi, d};
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    const double diff = std::abs(v[i]) - std::abs(v[best]);
    if (diff < -kAngleTieTolerance) {
      best = i;
    } else if (std::abs(diff) <= kAngleTieTolerance && v[i] > v[best]) {
      best = i;
    }
  }
  return v[best];
}

/// Regression target of `target` relative to `anchor`. Both angles are
/// canonicalized to [0, pi) first, so dtheta lies in [-pi/2, pi/2].
/// Center offsets are scaled by the anchor's mean side (W_a + H_a) / 2.
inline RegressionDelta encode(const RotatedBox& target, const RotatedBox& anchor) {
  const BoxDims dt = box_dims(target);
  const BoxDims da = box_dims(anchor);
  const Point ct = box_center(target);
  const Point ca = box_center(anchor);
  const double scale = 0.5 * (da.width + da.height);
  return {(ct.x - ca.x) / scale,
          (ct.y - ca.y) / scale,
          std::log(dt.width / da.width),
          std::log(dt.height / da.height),
          angle_delta(canonical_angle(target.theta), canonical_angle(anchor.theta))};
}

/// Applies `delta` to `anchor`; the right inverse of encode up to the
/// rectangle's pi symmetry.
inline RotatedBox decode(const RegressionDelta& delta, const RotatedBox& anchor) {
  const BoxDims da = box_dims(anchor);
  const Point ca = box_center(anchor);
  const double scale = 0.5 * (da.width + da.height);
  const double w = da.width * std::exp(delta.dlogw);
  const double h = da.height * std::exp(delta.dlogh);
  const Point c{ca.x + delta.dx * scale, ca.y + delta.dy * scale};
  const double theta = canonical_angle(anchor.theta) + delta.dtheta;
  if (!std::isfinite(w) || !std::isfinite(h) || !std::isfinite(c.x) ||
      !std::isfinite(c.y) || !std::isfinite(theta) || !(w > 0.0) || !(h > 0.0)) {
    throw std::domain_error("decode: delta produces a non-finite or empty box");
  }
  return box_from_center(c, w, h, theta);
}

/// Huber form: x^2 / (2 delta) inside [-delta, delta], |x| - delta / 2 outside.
inline double smooth_l1(double x, double delta) {
  const double ax = std::abs(x);
  return ax <= delta ? 0.5 * x * x / delta : ax - 0.5 * delta;
}

inline double smooth_l1_grad(double x, double delta) {
  if (x > delta) return 1.0;
  if (x < -delta) return -1.0;
  return x / delta;
}

struct LossConfig {
  std::array<double, 5> gamma{1.0, 1.0, 1.0, 1.0, 1.0};
  double delta = 1.0;

  void validate() const {
    for (double g : gamma) {
      if (!(g > 0.0)) throw std::invalid_argument("LossConfig: gamma weights must be > 0");
    }
    if (!(delta > 0.0)) throw std::invalid_argument("LossConfig: delta must be > 0");
  }
};

struct RegressionMatch {
  RotatedBox anchor;
  RotatedBox target;
  bool positive = false;
};

struct LossResult {
  double loss = 0.0;
  std::vector<RegressionDelta> grad;  // d loss / d predicted delta
};

namespace detail {

// Pairwise summation; the reduction tree depends only on the length.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t h = v.size() / 2;
  return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

}  // namespace detail

/// sum over positive matches of sum_i smooth_l1(gamma_i * (t_i - p_i), delta)
/// where t = encode(target, anchor) and p is the predicted delta. Negative
/// matches contribute exactly zero loss and zero gradient.
inline LossResult rpn_regression_loss(std::span<const RegressionMatch> matches,
                                      std::span<const RegressionDelta> predicted,
                                      const LossConfig& config = {}) {
  config.validate();
  if (matches.size() != predicted.size()) {
    throw std::invalid_argument("rpn_regression_loss: " + std::to_string(matches.size()) +
                                " matches but " + std::to_string(predicted.size()) +
                                " predictions");
  }
  LossResult res;
  res.grad.resize(matches.size());
  std::vector<double> terms(matches.size(), 0.0);
  for (std::size_t m = 0; m < matches.size(); ++m) {
    if (!matches[m].positive) continue;
    const auto t = encode(matches[m].target, matches[m].anchor).as_array();
    const auto p = predicted[m].as_array();
    std::array<double, 5> g{};
    double term = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      const double r = config.gamma[i] * (t[i] - p[i]);
      term += smooth_l1(r, config.delta);
      g[i] = -config.gamma[i] * smooth_l1_grad(r, config.delta);
    }
    terms[m] = term;
    res.grad[m] = RegressionDelta::from_array(g);
  }
  res.loss = detail::pairwise_sum(terms);
  return res;
}

}  // namespace orbox
