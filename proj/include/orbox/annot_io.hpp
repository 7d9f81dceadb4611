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

// Annotation parsing, normalization to canonical boxes, and the CSV/JSON
// interchange formats shared by the command line tool.
//
// Canonical CSV schemas (header line required):
//   boxes        id,x_a,y_a,x_c,y_c,theta
//   ground truth id,x_a,y_a,x_c,y_c,theta,class_id,image_id[,difficult]
//   detections   id,x_a,y_a,x_c,y_c,theta,score,class_id,image_id
//   deltas       id,dx,dy,dlogw,dlogh,dtheta
//   corners      x1,y1,x2,y2,x3,y3,x4,y4,class,image
// The JSON forms are arrays of objects with the same field names.

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "orbox/anchors.hpp"
#include "orbox/eval.hpp"
#include "orbox/geometry.hpp"
#include "orbox/nms.hpp"
#include "orbox/regress.hpp"

namespace orbox {

class parse_error : public std::runtime_error {
 public:
  parse_error(std::size_t line, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct LineError {
  std::size_t line = 0;
  std::string message;
};

struct LoadOptions {
  /// Strict mode throws on the first malformed record, lenient mode skips
  /// it and reports it in LoadResult::errors.
  bool strict = true;
};

template <typename T>
struct LoadResult {
  std::vector<T> records;
  std::vector<LineError> errors;
};

// ---------------------------------------------------------------------------
// Numbers

/// Shortest text that parses back to exactly `v`.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  }
  return v;
}

inline int parse_int(std::string_view s) {
  const double v = parse_double(s);
  if (v != std::floor(v) || std::abs(v) > 2147483647.0) {
    throw std::invalid_argument("not an integer: '" + std::string(s) + "'");
  }
  return static_cast<int>(v);
}

inline bool parse_flag(std::string_view s) {
  std::string t(s);
  std::erase_if(t, [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t.empty() || t == "0" || t == "false" || t == "no") return false;
  if (t == "1" || t == "true" || t == "yes") return true;
  throw std::invalid_argument("not a boolean: '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Tables: CSV files and JSON arrays are both read into named string cells.

struct Table {
  std::vector<std::string> columns;
  struct Row {
    std::size_t line = 0;  // 1-based source line (JSON: array position + 1)
    std::vector<std::string> cells;
  };
  std::vector<Row> rows;

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return i;
    }
    return std::nullopt;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open " + path + " for writing");
  os << text;
  if (!os) throw io_error("failed writing " + path);
}

}  // namespace detail

/// Parses delimited text. Blank lines and lines starting with '#' are
/// skipped; a UTF-8 byte order mark is dropped. With has_header == false,
/// columns are named "0", "1", ...
inline Table parse_csv(std::string_view text, char delim = ',', bool has_header = true) {
  Table t;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_done = !has_header;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const std::string trimmed = detail::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') {
      if (nl == text.size()) break;
      continue;
    }
    auto cells = detail::split(line, delim);
    if (!header_done) {
      t.columns = std::move(cells);
      header_done = true;
    } else {
      if (t.columns.empty()) {
        for (std::size_t i = 0; i < cells.size(); ++i) t.columns.push_back(std::to_string(i));
      }
      t.rows.push_back({line_no, std::move(cells)});
    }
    if (nl == text.size()) break;
  }
  return t;
}

/// Reads a JSON array of flat objects. Columns are the union of keys in
/// order of first appearance; missing keys become empty cells.
inline Table parse_json_table(std::string_view text) {
  const nlohmann::json doc = nlohmann::json::parse(text);
  if (!doc.is_array()) throw parse_error(1, "expected a JSON array of objects");
  Table t;
  std::map<std::string, std::size_t> index;
  for (const auto& obj : doc) {
    if (!obj.is_object()) continue;
    for (const auto& [k, v] : obj.items()) {
      if (!index.count(k)) {
        index[k] = t.columns.size();
        t.columns.push_back(k);
      }
    }
  }
  std::size_t n = 0;
  for (const auto& obj : doc) {
    ++n;
    Table::Row row;
    row.line = n;
    row.cells.assign(t.columns.size(), std::string());
    if (!obj.is_object()) {
      row.cells.clear();  // reported as malformed by the record builders
    } else {
      for (const auto& [k, v] : obj.items()) {
        std::string cell;
        if (v.is_string()) {
          cell = v.get<std::string>();
        } else if (v.is_number_integer()) {
          cell = std::to_string(v.get<long long>());
        } else if (v.is_number()) {
          cell = format_double(v.get<double>());
        } else if (v.is_boolean()) {
          cell = v.get<bool>() ? "true" : "false";
        } else if (!v.is_null()) {
          cell = v.dump();
        }
        row.cells[index[k]] = cell;
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

enum class TableFormat { kCsv, kJson };

inline TableFormat format_from_path(const std::string& path) {
  const auto dot = path.rfind('.');
  if (dot != std::string::npos) {
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == "json") return TableFormat::kJson;
  }
  return TableFormat::kCsv;
}

inline Table read_table(const std::string& path, TableFormat fmt) {
  const std::string text = detail::read_file(path);
  if (fmt == TableFormat::kJson) {
    if (detail::trim(text).empty()) return {};
    try {
      return parse_json_table(text);
    } catch (const nlohmann::json::exception& e) {
      throw parse_error(1, std::string("invalid JSON: ") + e.what());
    }
  }
  return parse_csv(text);
}

namespace detail {

// Runs `build` on every row, applying the strict/lenient policy.
template <typename T, typename Build>
LoadResult<T> build_records(const Table& t, const LoadOptions& opt, Build&& build) {
  LoadResult<T> res;
  for (const auto& row : t.rows) {
    try {
      if (row.cells.size() != t.columns.size()) {
        throw std::invalid_argument("expected " + std::to_string(t.columns.size()) +
                                    " fields, got " + std::to_string(row.cells.size()));
      }
      res.records.push_back(build(row));
    } catch (const parse_error&) {
      throw;
    } catch (const std::exception& e) {
      if (opt.strict) throw parse_error(row.line, e.what());
      res.errors.push_back({row.line, e.what()});
    }
  }
  return res;
}

inline std::size_t require_column(const Table& t, std::string_view name) {
  const auto c = t.column(name);
  if (!c) throw parse_error(1, "missing column '" + std::string(name) + "'");
  return *c;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Annotation conventions and normalization

enum class Convention {
  kCanonical,  // x_a, y_a, x_c, y_c, theta
  kCorners,    // x1, y1, ..., x4, y4 in cyclic order
  kCenter,     // cx, cy, w, h, angle
  kVoc,        // xmin, ymin, xmax, ymax
};

enum class AngleUnit { kRadians, kDegrees };
enum class AngleRange { kZeroToPi, kMinusPiToPi, kZeroToTwoPi };

struct AngleSpec {
  AngleUnit unit = AngleUnit::kRadians;
  AngleRange range = AngleRange::kZeroToTwoPi;
};

struct AnnotationRecord {
  std::string id;
  Convention convention = Convention::kCanonical;
  AngleSpec angle;           // used by kCanonical and kCenter
  std::vector<double> raw;   // fields in the convention's order
  RotatedBox normalized;
  int class_id = 0;
  std::string image_id;
  bool difficult = false;
};

inline std::size_t raw_field_count(Convention c) {
  switch (c) {
    case Convention::kCanonical: return 5;
    case Convention::kCorners: return 8;
    case Convention::kCenter: return 5;
    case Convention::kVoc: return 4;
  }
  return 0;
}

inline std::vector<std::string> raw_field_names(Convention c) {
  switch (c) {
    case Convention::kCanonical: return {"x_a", "y_a", "x_c", "y_c", "theta"};
    case Convention::kCorners: return {"x1", "y1", "x2", "y2", "x3", "y3", "x4", "y4"};
    case Convention::kCenter: return {"cx", "cy", "w", "h", "angle"};
    case Convention::kVoc: return {"xmin", "ymin", "xmax", "ymax"};
  }
  return {};
}

/// Relative tolerance on opposite sides and diagonals of 4-corner input.
inline constexpr double kRectangleTolerance = 0.02;

/// Fitted corner angles this close below pi are mapped to 0.
inline constexpr double kAngleSnap = 1e-12;
/// Relative side difference below which a fitted rectangle counts as square.
inline constexpr double kSquareTolerance = 1e-12;

namespace detail {

inline double angle_to_radians(double a, const AngleSpec& spec) {
  const double slack = 1e-9;
  double lo = 0.0;
  double hi = 0.0;
  const double full = spec.unit == AngleUnit::kDegrees ? 360.0 : kTwoPi;
  const double half = 0.5 * full;
  switch (spec.range) {
    case AngleRange::kZeroToPi: lo = 0.0; hi = half; break;
    case AngleRange::kMinusPiToPi: lo = -half; hi = half; break;
    case AngleRange::kZeroToTwoPi: lo = 0.0; hi = full; break;
  }
  if (!(a >= lo - slack * full && a <= hi + slack * full)) {
    throw std::invalid_argument("angle " + format_double(a) + " outside declared range [" +
                                format_double(lo) + ", " + format_double(hi) + "]");
  }
  return spec.unit == AngleUnit::kDegrees ? a * kPi / 180.0 : a;
}

inline double rel_diff(double a, double b) {
  const double m = std::max(std::abs(a), std::abs(b));
  return m == 0.0 ? 0.0 : std::abs(a - b) / m;
}

inline RotatedBox normalize_corners(std::span<const double> raw) {
  std::array<Point, 4> p;
  for (std::size_t i = 0; i < 4; ++i) {
    p[i] = {raw[2 * i], raw[2 * i + 1]};
    if (!std::isfinite(p[i].x) || !std::isfinite(p[i].y)) {
      throw std::invalid_argument("non-finite corner coordinate");
    }
  }
  if (signed_area2(p) < 0.0) std::reverse(p.begin(), p.end());
  auto len = [](Point a, Point b) { return std::hypot(b.x - a.x, b.y - a.y); };
  const double s01 = len(p[0], p[1]);
  const double s12 = len(p[1], p[2]);
  const double s23 = len(p[2], p[3]);
  const double s30 = len(p[3], p[0]);
  if (rel_diff(s01, s23) > kRectangleTolerance || rel_diff(s12, s30) > kRectangleTolerance) {
    throw std::invalid_argument("corners are not a rectangle: opposite sides " +
                                format_double(s01) + "/" + format_double(s23) + " and " +
                                format_double(s12) + "/" + format_double(s30));
  }
  const double d02 = len(p[0], p[2]);
  const double d13 = len(p[1], p[3]);
  if (rel_diff(d02, d13) > kRectangleTolerance) {
    throw std::invalid_argument("corners are not a rectangle: diagonals " +
                                format_double(d02) + " and " + format_double(d13));
  }
  if (!(s01 > 0.0) || !(s12 > 0.0)) throw std::invalid_argument("degenerate corner list");

  // Best-fit rectangle: mean side lengths, mean edge direction, centroid.
  const Point center = 0.25 * (p[0] + p[1] + p[2] + p[3]);
  auto fit_from = [&](std::size_t a) {
    const Point& A = p[a];
    const Point& B = p[(a + 1) % 4];
    const Point& C = p[(a + 2) % 4];
    const Point& D = p[(a + 3) % 4];
    const Point e_ab = (B - A) + (C - D);
    const Point e_bc = (C - B) + (D - A);
    const Point dir = e_ab + Point{e_bc.y, -e_bc.x};
    const double w = 0.5 * (len(A, B) + len(D, C));
    const double h = 0.5 * (len(B, C) + len(A, D));
    double theta = canonical_angle(std::atan2(dir.y, dir.x));
    if (theta > kPi - kAngleSnap) theta = 0.0;
    return std::pair{box_from_center(center, w, h, theta), w >= h * (1.0 - kSquareTolerance)};
  };
  // A is taken so that AB is the longer side; a square keeps the smaller
  // canonical angle.
  std::optional<RotatedBox> best;
  for (std::size_t a = 0; a < 2; ++a) {
    const auto [box, long_ab] = fit_from(a);
    if (!long_ab) continue;
    if (!best || box.theta < best->theta) best = box;
  }
  return *best;
}

}  // namespace detail

/// Canonical box for a record under its declared convention: theta in
/// [0, pi). Corner lists have no front/back, so A is chosen to make AB the
/// longer side. VOC boxes map to theta = 0 unchanged. Center and canonical
/// forms keep their width along the given angle.
inline RotatedBox normalize_annotation(const AnnotationRecord& rec) {
  const std::size_t need = raw_field_count(rec.convention);
  if (rec.raw.size() != need) {
    throw std::invalid_argument("expected " + std::to_string(need) + " coordinate fields, got " +
                                std::to_string(rec.raw.size()));
  }
  for (double v : rec.raw) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite coordinate");
  }
  RotatedBox out;
  switch (rec.convention) {
    case Convention::kCanonical: {
      const double theta = detail::angle_to_radians(rec.raw[4], rec.angle);
      out = canonicalize(RotatedBox{rec.raw[0], rec.raw[1], rec.raw[2], rec.raw[3], theta});
      break;
    }
    case Convention::kCorners:
      out = detail::normalize_corners(rec.raw);
      break;
    case Convention::kCenter: {
      const double theta = detail::angle_to_radians(rec.raw[4], rec.angle);
      out = canonicalize(box_from_center({rec.raw[0], rec.raw[1]}, rec.raw[2], rec.raw[3], theta));
      break;
    }
    case Convention::kVoc:
      out = {rec.raw[0], rec.raw[1], rec.raw[2], rec.raw[3], 0.0};
      break;
  }
  box_dims(out);
  return out;
}

/// Record whose raw fields are an already canonical box. Feeding it back to
/// normalize_annotation returns the same box.
inline AnnotationRecord canonical_record(const RotatedBox& box, std::string id = {},
                                         int class_id = 0, std::string image_id = {}) {
  AnnotationRecord r;
  r.id = std::move(id);
  r.convention = Convention::kCanonical;
  r.angle = {AngleUnit::kRadians, AngleRange::kZeroToTwoPi};
  r.raw = {box.x_a, box.y_a, box.x_c, box.y_c, box.theta};
  r.normalized = normalize_annotation(r);
  r.class_id = class_id;
  r.image_id = std::move(image_id);
  return r;
}

// ---------------------------------------------------------------------------
// Convention mapping files (JSON), e.g.
//   {"convention": "center", "delimiter": ",", "has_header": false,
//    "angle_unit": "deg", "angle_range": "-pi_pi",
//    "columns": {"cx": 0, "cy": 1, "w": 2, "h": 3, "angle": 4,
//                "class": 5, "image": 6}}
// Column references are 0-based indices or header names. Angle unit is
// mandatory for conventions that carry an angle.

struct ConventionMapping {
  Convention convention = Convention::kCanonical;
  char delimiter = ',';
  bool has_header = true;
  AngleSpec angle;
  std::map<std::string, std::string> columns;  // field -> header name or index
};

inline Convention parse_convention(std::string_view s) {
  if (s == "canonical") return Convention::kCanonical;
  if (s == "corners") return Convention::kCorners;
  if (s == "center") return Convention::kCenter;
  if (s == "voc") return Convention::kVoc;
  throw std::invalid_argument("unknown convention '" + std::string(s) + "'");
}

inline ConventionMapping parse_mapping(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("mapping: invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("convention")) {
    throw std::invalid_argument("mapping: 'convention' is required");
  }
  ConventionMapping m;
  m.convention = parse_convention(j.at("convention").get<std::string>());
  if (j.contains("delimiter")) {
    const auto d = j.at("delimiter").get<std::string>();
    if (d.size() != 1) throw std::invalid_argument("mapping: delimiter must be one character");
    m.delimiter = d[0];
  }
  m.has_header = j.value("has_header", true);
  const bool has_angle =
      m.convention == Convention::kCenter || m.convention == Convention::kCanonical;
  if (has_angle) {
    if (!j.contains("angle_unit")) {
      throw std::invalid_argument("mapping: 'angle_unit' (deg|rad) must be declared");
    }
    const auto unit = j.at("angle_unit").get<std::string>();
    if (unit == "deg") {
      m.angle.unit = AngleUnit::kDegrees;
    } else if (unit == "rad") {
      m.angle.unit = AngleUnit::kRadians;
    } else {
      throw std::invalid_argument("mapping: angle_unit must be 'deg' or 'rad'");
    }
    const auto range = j.value("angle_range", std::string("0_2pi"));
    if (range == "0_pi") {
      m.angle.range = AngleRange::kZeroToPi;
    } else if (range == "-pi_pi") {
      m.angle.range = AngleRange::kMinusPiToPi;
    } else if (range == "0_2pi") {
      m.angle.range = AngleRange::kZeroToTwoPi;
    } else {
      throw std::invalid_argument("mapping: angle_range must be 0_pi, -pi_pi or 0_2pi");
    }
  }
  if (j.contains("columns")) {
    for (const auto& [k, v] : j.at("columns").items()) {
      m.columns[k] = v.is_number_integer() ? std::to_string(v.get<long long>())
                                           : v.get<std::string>();
    }
  }
  return m;
}

namespace detail {

inline std::optional<std::size_t> resolve_column(const Table& t, const ConventionMapping& m,
                                                 const std::string& field) {
  const auto it = m.columns.find(field);
  const std::string ref = it == m.columns.end() ? field : it->second;
  if (auto c = t.column(ref)) return c;
  if (!ref.empty() && std::all_of(ref.begin(), ref.end(), ::isdigit)) {
    const std::size_t idx = std::stoul(ref);
    if (idx < t.columns.size() || t.columns.empty()) return idx;
  }
  return std::nullopt;
}

}  // namespace detail

/// Reads annotations from `text` through a convention mapping.
inline LoadResult<AnnotationRecord> load_mapped(std::string_view text,
                                                const ConventionMapping& m,
                                                const LoadOptions& opt = {}) {
  const Table t = parse_csv(text, m.delimiter, m.has_header);
  if (t.rows.empty()) return {};
  const auto names = raw_field_names(m.convention);
  std::vector<std::size_t> cols;
  for (const auto& n : names) {
    const auto c = detail::resolve_column(t, m, n);
    if (!c) throw parse_error(1, "mapping: no column for field '" + n + "'");
    cols.push_back(*c);
  }
  const auto id_col = detail::resolve_column(t, m, "id");
  const auto class_col = detail::resolve_column(t, m, "class");
  const auto image_col = detail::resolve_column(t, m, "image");
  const auto diff_col = detail::resolve_column(t, m, "difficult");

  LoadResult<AnnotationRecord> res;
  for (const auto& row : t.rows) {
    try {
      auto cell = [&](std::size_t c) -> const std::string& {
        if (c >= row.cells.size()) {
          throw std::invalid_argument("expected at least " + std::to_string(c + 1) +
                                      " fields, got " + std::to_string(row.cells.size()));
        }
        return row.cells[c];
      };
      AnnotationRecord r;
      r.convention = m.convention;
      r.angle = m.angle;
      for (std::size_t c : cols) r.raw.push_back(parse_double(cell(c)));
      r.id = id_col ? cell(*id_col) : std::to_string(res.records.size());
      if (class_col) r.class_id = parse_int(cell(*class_col));
      if (image_col) r.image_id = cell(*image_col);
      if (diff_col) r.difficult = parse_flag(cell(*diff_col));
      r.normalized = normalize_annotation(r);
      res.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      if (opt.strict) throw parse_error(row.line, e.what());
      res.errors.push_back({row.line, e.what()});
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Box files

enum class BoxFormat { kCsv, kJson, kCorners };

inline BoxFormat parse_box_format(std::string_view s) {
  if (s == "csv") return BoxFormat::kCsv;
  if (s == "json") return BoxFormat::kJson;
  if (s == "corners") return BoxFormat::kCorners;
  throw std::invalid_argument("unknown box format '" + std::string(s) + "'");
}

inline LoadResult<AnnotationRecord> parse_boxes(std::string_view text, BoxFormat fmt,
                                                const LoadOptions& opt = {}) {
  if (fmt == BoxFormat::kCorners) {
    ConventionMapping m;
    m.convention = Convention::kCorners;
    return load_mapped(text, m, opt);
  }
  Table t;
  if (fmt == BoxFormat::kJson) {
    if (detail::trim(text).empty()) return {};
    try {
      t = parse_json_table(text);
    } catch (const nlohmann::json::exception& e) {
      throw parse_error(1, std::string("invalid JSON: ") + e.what());
    }
  } else {
    t = parse_csv(text);
  }
  if (t.rows.empty()) return {};
  const std::array<std::size_t, 5> c{
      detail::require_column(t, "x_a"), detail::require_column(t, "y_a"),
      detail::require_column(t, "x_c"), detail::require_column(t, "y_c"),
      detail::require_column(t, "theta")};
  const auto id_col = t.column("id");
  const auto class_col = t.column("class_id");
  const auto image_col = t.column("image_id");
  const auto diff_col = t.column("difficult");
  std::size_t n = 0;
  return detail::build_records<AnnotationRecord>(t, opt, [&](const Table::Row& row) {
    AnnotationRecord r;
    r.convention = Convention::kCanonical;
    r.angle = {AngleUnit::kRadians, AngleRange::kZeroToTwoPi};
    for (std::size_t i : c) r.raw.push_back(parse_double(row.cells[i]));
    // Stored angles may be any real number; reduce before range checking.
    r.raw[4] = normalize_angle(r.raw[4]);
    r.id = id_col ? row.cells[*id_col] : std::to_string(n);
    ++n;
    if (class_col && !row.cells[*class_col].empty()) r.class_id = parse_int(row.cells[*class_col]);
    if (image_col) r.image_id = row.cells[*image_col];
    if (diff_col) r.difficult = parse_flag(row.cells[*diff_col]);
    r.normalized = normalize_annotation(r);
    return r;
  });
}

inline LoadResult<AnnotationRecord> load_boxes(const std::string& path, BoxFormat fmt,
                                               const LoadOptions& opt = {}) {
  return parse_boxes(detail::read_file(path), fmt, opt);
}

struct SaveOptions {
  /// Also write class_id, image_id and difficult (the ground-truth schema).
  bool labels = false;
};

/// Serializes normalized boxes. The corners format writes the four
/// corners A, B, C, D.
inline std::string format_boxes(std::span<const AnnotationRecord> recs, BoxFormat fmt,
                                const SaveOptions& opt = {}) {
  if (fmt == BoxFormat::kJson) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : recs) {
      nlohmann::json o;
      o["id"] = r.id;
      o["x_a"] = r.normalized.x_a;
      o["y_a"] = r.normalized.y_a;
      o["x_c"] = r.normalized.x_c;
      o["y_c"] = r.normalized.y_c;
      o["theta"] = r.normalized.theta;
      if (opt.labels) {
        o["class_id"] = r.class_id;
        o["image_id"] = r.image_id;
        o["difficult"] = r.difficult ? 1 : 0;
      }
      arr.push_back(std::move(o));
    }
    return arr.dump(2) + "\n";
  }
  std::string out;
  if (fmt == BoxFormat::kCorners) {
    out = "x1,y1,x2,y2,x3,y3,x4,y4,class,image\n";
    for (const auto& r : recs) {
      const BoxCorners k = box_corners(r.normalized);
      for (const Point& p : {k.a, k.b, k.c, k.d}) {
        out += format_double(p.x) + "," + format_double(p.y) + ",";
      }
      out += std::to_string(r.class_id) + "," + r.image_id + "\n";
    }
    return out;
  }
  out = opt.labels ? "id,x_a,y_a,x_c,y_c,theta,class_id,image_id,difficult\n"
                   : "id,x_a,y_a,x_c,y_c,theta\n";
  for (const auto& r : recs) {
    const RotatedBox& b = r.normalized;
    out += r.id + "," + format_double(b.x_a) + "," + format_double(b.y_a) + "," +
           format_double(b.x_c) + "," + format_double(b.y_c) + "," + format_double(b.theta);
    if (opt.labels) {
      out += "," + std::to_string(r.class_id) + "," + r.image_id + "," + (r.difficult ? "1" : "0");
    }
    out += "\n";
  }
  return out;
}

inline void save_boxes(std::span<const AnnotationRecord> recs, const std::string& path,
                       BoxFormat fmt, const SaveOptions& opt = {}) {
  detail::write_file(path, format_boxes(recs, fmt, opt));
}

// ---------------------------------------------------------------------------
// Detections and ground truth

struct DetectionRecord {
  std::string id;
  ScoredDetection det;
};

struct GroundTruthRecord {
  std::string id;
  GroundTruth gt;
};

namespace detail {

inline RotatedBox box_from_row(const Table::Row& row, const std::array<std::size_t, 5>& c) {
  const RotatedBox b{parse_double(row.cells[c[0]]), parse_double(row.cells[c[1]]),
                     parse_double(row.cells[c[2]]), parse_double(row.cells[c[3]]),
                     normalize_angle(parse_double(row.cells[c[4]]))};
  box_dims(b);
  return b;
}

inline std::array<std::size_t, 5> box_columns(const Table& t) {
  return {require_column(t, "x_a"), require_column(t, "y_a"), require_column(t, "x_c"),
          require_column(t, "y_c"), require_column(t, "theta")};
}

}  // namespace detail

inline LoadResult<DetectionRecord> parse_detections(const Table& t, const LoadOptions& opt = {}) {
  if (t.rows.empty()) return {};
  const auto bc = detail::box_columns(t);
  const auto score = detail::require_column(t, "score");
  const auto cls = detail::require_column(t, "class_id");
  const auto img = detail::require_column(t, "image_id");
  const auto id = t.column("id");
  std::size_t n = 0;
  return detail::build_records<DetectionRecord>(t, opt, [&](const Table::Row& row) {
    DetectionRecord r;
    r.id = id ? row.cells[*id] : std::to_string(n);
    ++n;
    r.det.box = detail::box_from_row(row, bc);
    r.det.score = parse_double(row.cells[score]);
    if (!(r.det.score >= 0.0 && r.det.score <= 1.0)) {
      throw std::invalid_argument("score " + row.cells[score] + " outside [0, 1]");
    }
    r.det.class_id = parse_int(row.cells[cls]);
    r.det.image_id = row.cells[img];
    return r;
  });
}

inline LoadResult<DetectionRecord> load_detections(const std::string& path,
                                                   const LoadOptions& opt = {}) {
  return parse_detections(read_table(path, format_from_path(path)), opt);
}

inline LoadResult<GroundTruthRecord> parse_ground_truth(const Table& t,
                                                        const LoadOptions& opt = {}) {
  if (t.rows.empty()) return {};
  const auto bc = detail::box_columns(t);
  const auto cls = detail::require_column(t, "class_id");
  const auto img = detail::require_column(t, "image_id");
  const auto diff = t.column("difficult");
  const auto id = t.column("id");
  std::size_t n = 0;
  return detail::build_records<GroundTruthRecord>(t, opt, [&](const Table::Row& row) {
    GroundTruthRecord r;
    r.id = id ? row.cells[*id] : std::to_string(n);
    ++n;
    r.gt.box = detail::box_from_row(row, bc);
    r.gt.class_id = parse_int(row.cells[cls]);
    r.gt.image_id = row.cells[img];
    if (diff) r.gt.difficult = parse_flag(row.cells[*diff]);
    return r;
  });
}

inline LoadResult<GroundTruthRecord> load_ground_truth(const std::string& path,
                                                       const LoadOptions& opt = {}) {
  return parse_ground_truth(read_table(path, format_from_path(path)), opt);
}

inline std::string format_detections(std::span<const DetectionRecord> recs) {
  std::string out = "id,x_a,y_a,x_c,y_c,theta,score,class_id,image_id\n";
  for (const auto& r : recs) {
    const RotatedBox& b = r.det.box;
    out += r.id + "," + format_double(b.x_a) + "," + format_double(b.y_a) + "," +
           format_double(b.x_c) + "," + format_double(b.y_c) + "," + format_double(b.theta) +
           "," + format_double(r.det.score) + "," + std::to_string(r.det.class_id) + "," +
           r.det.image_id + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Regression deltas

struct DeltaRecord {
  std::string id;
  RegressionDelta delta;
};

inline LoadResult<DeltaRecord> parse_deltas(const Table& t, const LoadOptions& opt = {}) {
  if (t.rows.empty()) return {};
  const std::array<std::size_t, 5> c{
      detail::require_column(t, "dx"), detail::require_column(t, "dy"),
      detail::require_column(t, "dlogw"), detail::require_column(t, "dlogh"),
      detail::require_column(t, "dtheta")};
  const auto id = t.column("id");
  std::size_t n = 0;
  return detail::build_records<DeltaRecord>(t, opt, [&](const Table::Row& row) {
    DeltaRecord r;
    r.id = id ? row.cells[*id] : std::to_string(n);
    ++n;
    std::array<double, 5> v{};
    for (std::size_t i = 0; i < 5; ++i) v[i] = parse_double(row.cells[c[i]]);
    r.delta = RegressionDelta::from_array(v);
    return r;
  });
}

inline LoadResult<DeltaRecord> load_deltas(const std::string& path, const LoadOptions& opt = {}) {
  return parse_deltas(read_table(path, format_from_path(path)), opt);
}

inline std::string format_deltas(std::span<const DeltaRecord> recs) {
  std::string out = "id,dx,dy,dlogw,dlogh,dtheta\n";
  for (const auto& r : recs) {
    const auto& d = r.delta;
    out += r.id + "," + format_double(d.dx) + "," + format_double(d.dy) + "," +
           format_double(d.dlogw) + "," + format_double(d.dlogh) + "," +
           format_double(d.dtheta) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON configs

/// {"image_size": [W, H], "stride": s, "sizes": [...], "ratios": [...],
///  "num_angles": n}
inline AnchorGridSpec parse_anchor_spec(std::string_view json_text) {
  AnchorGridSpec s;
  try {
    const auto j = nlohmann::json::parse(json_text);
    const auto size = j.at("image_size");
    if (!size.is_array() || size.size() != 2) {
      throw std::invalid_argument("anchor spec: image_size must be [width, height]");
    }
    s.image_width = size[0].get<double>();
    s.image_height = size[1].get<double>();
    s.stride = j.at("stride").get<double>();
    s.sizes = j.at("sizes").get<std::vector<double>>();
    s.aspect_ratios = j.at("ratios").get<std::vector<double>>();
    s.num_angles = j.at("num_angles").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("anchor spec: ") + e.what());
  }
  s.validate();
  return s;
}

/// {"gamma": [g1, g2, g3, g4, g5], "delta": d}; missing keys keep defaults.
inline LossConfig parse_loss_config(std::string_view json_text) {
  LossConfig c;
  try {
    const auto j = nlohmann::json::parse(json_text);
    if (j.contains("gamma")) {
      const auto g = j.at("gamma").get<std::vector<double>>();
      if (g.size() != 5) throw std::invalid_argument("loss config: gamma needs 5 values");
      std::copy(g.begin(), g.end(), c.gamma.begin());
    }
    if (j.contains("delta")) c.delta = j.at("delta").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("loss config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace orbox
