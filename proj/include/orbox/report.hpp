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

#include <cstdio>
#include <string>

#include "json.hpp"
#include "orbox/eval.hpp"

namespace orbox {

namespace detail {

inline std::string format_fppi(double f) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", f);
  return buf;
}

}  // namespace detail

inline nlohmann::json report_to_json(const EvalReport& rep, bool with_curves = false) {
  auto fppi_json = [](const std::vector<FppiRecall>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& f : v) a.push_back({{"fppi", f.fppi}, {"recall", f.recall}});
    return a;
  };
  nlohmann::json j;
  j["criterion"] = rep.criterion;
  j["num_images"] = rep.num_images;
  j["mean_ap"] = rep.mean_ap;
  j["mean_recall_at_fppi"] = fppi_json(rep.mean_recall_at_fppi);
  j["unknown_class_detections"] = rep.unknown_class_detections;
  j["diagnostics"] = rep.diagnostics;
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : rep.classes) {
    nlohmann::json o;
    o["class_id"] = c.class_id;
    o["num_gt"] = c.num_gt;
    o["num_detections"] = c.num_detections;
    o["true_positives"] = c.true_positives;
    o["false_positives"] = c.false_positives;
    o["ap"] = c.ap;
    o["recall_at_fppi"] = fppi_json(c.recall_at_fppi);
    if (with_curves) {
      nlohmann::json pr = nlohmann::json::array();
      for (const auto& p : c.pr_curve) {
        pr.push_back({{"threshold", p.threshold}, {"recall", p.recall}, {"precision", p.precision}});
      }
      o["pr_curve"] = std::move(pr);
    }
    classes.push_back(std::move(o));
  }
  j["classes"] = std::move(classes);
  return j;
}

/// Fixed-width table: one row per class plus a mean row.
inline std::string report_to_text(const EvalReport& rep) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "criterion: %s   images: %zu\n", rep.criterion.c_str(),
                rep.num_images);
  out += buf;
  std::snprintf(buf, sizeof(buf), "%8s %7s %7s %7s %7s %8s", "class", "gt", "dets", "tp", "fp",
                "AP");
  out += buf;
  for (const auto& f : rep.mean_recall_at_fppi) {
    std::snprintf(buf, sizeof(buf), " %10s", ("R@" + detail::format_fppi(f.fppi)).c_str());
    out += buf;
  }
  out += "\n";
  for (const auto& c : rep.classes) {
    std::snprintf(buf, sizeof(buf), "%8d %7zu %7zu %7zu %7zu %8.4f", c.class_id, c.num_gt,
                  c.num_detections, c.true_positives, c.false_positives, c.ap);
    out += buf;
    for (const auto& f : c.recall_at_fppi) {
      std::snprintf(buf, sizeof(buf), " %10.4f", f.recall);
      out += buf;
    }
    out += "\n";
  }
  std::snprintf(buf, sizeof(buf), "%8s %7s %7s %7s %7s %8.4f", "mean", "", "", "", "",
                rep.mean_ap);
  out += buf;
  for (const auto& f : rep.mean_recall_at_fppi) {
    std::snprintf(buf, sizeof(buf), " %10.4f", f.recall);
    out += buf;
  }
  out += "\n";
  for (const auto& d : rep.diagnostics) out += "note: " + d + "\n";
  return out;
}

}  // namespace orbox
