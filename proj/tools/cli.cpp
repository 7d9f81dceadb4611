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

#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <new>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "orbox/orbox.hpp"
#include "scene.hpp"

namespace orbox::cli {
namespace {

using nlohmann::json;

// Raised for malformed user input that the library itself does not check.
struct input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    orbox::detail::write_file(path, text);
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

template <typename T>
std::vector<T> take(LoadResult<T> res, std::ostream& err) {
  for (const auto& e : res.errors) err << "skipped line " << e.line << ": " << e.message << "\n";
  return std::move(res.records);
}

std::vector<RotatedBox> boxes_of(const std::vector<AnnotationRecord>& recs) {
  std::vector<RotatedBox> out;
  out.reserve(recs.size());
  for (const auto& r : recs) out.push_back(r.normalized);
  return out;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& cell : orbox::detail::split(s, ',')) out.push_back(parse_double(cell));
  return out;
}

template <typename F>
double median_seconds(int warmup, int runs, F&& f) {
  for (int i = 0; i < warmup; ++i) f();
  std::vector<double> t;
  for (int i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(t.begin(), t.end());
  const std::size_t m = t.size() / 2;
  return t.size() % 2 ? t[m] : 0.5 * (t[m - 1] + t[m]);
}

struct Common {
  bool lenient = false;
  std::string box_format = "csv";
  std::string output;
  LoadOptions load() const { return {!lenient}; }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"orbox: rotated box kernels", "orbox"};
  app.require_subcommand(1);
  app.fallthrough();
  unsigned threads = 0;
  app.add_option("--threads", threads,
                 "worker threads (default: ORBOX_NUM_THREADS or hardware concurrency)")
      ->check(CLI::PositiveNumber);
  Common c;
  app.add_flag("--lenient", c.lenient, "skip malformed records instead of failing");
  app.add_option("-o,--output", c.output, "output path (default: standard output)");

  std::function<void()> action;

  // iou
  auto* iou = app.add_subcommand("iou", "IoU matrix (or pairwise IoU) between two box files");
  std::string iou_a, iou_b;
  bool iou_pairwise = false;
  iou->add_option("--a", iou_a, "first box file")->required()->check(CLI::ExistingFile);
  iou->add_option("--b", iou_b, "second box file")->required()->check(CLI::ExistingFile);
  iou->add_option("--format", c.box_format, "csv|json|corners")
      ->check(CLI::IsMember({"csv", "json", "corners"}));
  iou->add_flag("--pairwise", iou_pairwise, "row i of a against row i of b");
  iou->callback([&] {
    action = [&] {
      const auto fmt = parse_box_format(c.box_format);
      const auto a = boxes_of(take(load_boxes(iou_a, fmt, c.load()), err));
      const auto b = boxes_of(take(load_boxes(iou_b, fmt, c.load()), err));
      json j = json::array();
      if (iou_pairwise) {
        if (a.size() != b.size()) {
          throw input_error("--pairwise needs equal box counts, got " +
                            std::to_string(a.size()) + " and " + std::to_string(b.size()));
        }
        for (std::size_t i = 0; i < a.size(); ++i) j.push_back(rotated_iou(a[i], b[i]));
      } else {
        const auto m = iou_matrix(a, b, threads);
        for (std::size_t i = 0; i < a.size(); ++i) {
          j.push_back(std::vector<double>(m.begin() + i * b.size(), m.begin() + (i + 1) * b.size()));
        }
      }
      emit(j.dump() + "\n", c.output, out);
    };
  });

  // nms
  auto* nms = app.add_subcommand("nms", "rotated non-maximum suppression on a detection file");
  std::string nms_in;
  double nms_thresh = 0.7;
  std::size_t nms_max = kKeepAll;
  std::string nms_per = "class_image";
  nms->add_option("--in", nms_in, "detections (CSV or .json)")->required()->check(CLI::ExistingFile);
  nms->add_option("--thresh", nms_thresh, "suppress when IoU > thresh")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  nms->add_option("--max-keep", nms_max, "keep at most this many per group");
  nms->add_option("--per", nms_per, "grouping: none|class|image|class_image")
      ->capture_default_str()
      ->check(CLI::IsMember({"none", "class", "image", "class_image"}));
  nms->callback([&] {
    action = [&] {
      const auto recs = take(load_detections(nms_in, c.load()), err);
      std::vector<ScoredDetection> dets;
      for (const auto& r : recs) dets.push_back(r.det);
      std::vector<std::size_t> keep;
      if (nms_per == "none") {
        keep = rotated_nms(std::span<const ScoredDetection>(dets), nms_thresh, nms_max, threads);
      } else {
        const NmsGroup g = nms_per == "class"   ? NmsGroup::kClass
                           : nms_per == "image" ? NmsGroup::kImage
                                                : NmsGroup::kClassAndImage;
        keep = batched_nms(dets, nms_thresh, g, nms_max, threads);
      }
      std::vector<DetectionRecord> kept;
      for (std::size_t i : keep) kept.push_back(recs[i]);
      emit(format_detections(kept), c.output, out);
    };
  });

  // anchors
  auto* anchors = app.add_subcommand("anchors", "anchor grids and anchor shape clustering");
  anchors->require_subcommand(1);
  auto* gen = anchors->add_subcommand("generate", "all anchors of a grid spec");
  std::string spec_path;
  gen->add_option("--spec", spec_path, "anchor spec JSON")->required()->check(CLI::ExistingFile);
  gen->callback([&] {
    action = [&] {
      const auto spec = parse_anchor_spec(orbox::detail::read_file(spec_path));
      const auto boxes = generate_anchors(spec);
      std::vector<AnnotationRecord> recs;
      recs.reserve(boxes.size());
      for (std::size_t i = 0; i < boxes.size(); ++i) {
        AnnotationRecord r;
        r.id = std::to_string(i);
        r.normalized = boxes[i];
        recs.push_back(std::move(r));
      }
      emit(format_boxes(recs, BoxFormat::kCsv), c.output, out);
    };
  });
  auto* cluster = anchors->add_subcommand("cluster", "k-means anchor shapes under 1 - IoU");
  std::string cluster_in;
  std::size_t cluster_k = 0;
  std::uint64_t cluster_seed = 0;
  int cluster_iter = 100;
  cluster->add_option("--gt", cluster_in, "ground-truth boxes")->required()->check(CLI::ExistingFile);
  cluster->add_option("--k", cluster_k, "number of shapes")->required()->check(CLI::PositiveNumber);
  cluster->add_option("--seed", cluster_seed, "random seed")->required();
  cluster->add_option("--max-iter", cluster_iter, "Lloyd iterations")->capture_default_str();
  cluster->add_option("--format", c.box_format, "csv|json|corners")
      ->check(CLI::IsMember({"csv", "json", "corners"}));
  cluster->callback([&] {
    action = [&] {
      const auto boxes =
          boxes_of(take(load_boxes(cluster_in, parse_box_format(c.box_format), c.load()), err));
      const auto res = kmeans_anchors(boxes, cluster_k, cluster_seed, cluster_iter);
      json j;
      j["k"] = cluster_k;
      j["seed"] = cluster_seed;
      j["iterations"] = res.iterations;
      j["objective"] = res.objective;
      json cents = json::array();
      for (const auto& s : res.centroids) cents.push_back({{"width", s.width}, {"height", s.height}});
      j["centroids"] = std::move(cents);
      j["assignment"] = res.assignment;
      emit(dump(j), c.output, out);
    };
  });

  // encode / decode / loss
  auto* enc = app.add_subcommand("encode", "regression deltas of targets relative to anchors");
  std::string enc_targets, enc_anchors;
  enc->add_option("--targets", enc_targets, "target boxes")->required()->check(CLI::ExistingFile);
  enc->add_option("--anchors", enc_anchors, "anchor boxes, one per target")
      ->required()
      ->check(CLI::ExistingFile);
  enc->callback([&] {
    action = [&] {
      const auto t = take(load_boxes(enc_targets, BoxFormat::kCsv, c.load()), err);
      const auto a = take(load_boxes(enc_anchors, BoxFormat::kCsv, c.load()), err);
      if (t.size() != a.size()) {
        throw input_error(std::to_string(t.size()) + " targets but " + std::to_string(a.size()) +
                          " anchors");
      }
      std::vector<DeltaRecord> d;
      for (std::size_t i = 0; i < t.size(); ++i) {
        d.push_back({t[i].id, encode(t[i].normalized, a[i].normalized)});
      }
      emit(format_deltas(d), c.output, out);
    };
  });

  auto* dec = app.add_subcommand("decode", "apply regression deltas to anchors");
  std::string dec_deltas, dec_anchors;
  dec->add_option("--deltas", dec_deltas, "delta file")->required()->check(CLI::ExistingFile);
  dec->add_option("--anchors", dec_anchors, "anchor boxes, one per delta")
      ->required()
      ->check(CLI::ExistingFile);
  dec->callback([&] {
    action = [&] {
      const auto d = take(load_deltas(dec_deltas, c.load()), err);
      const auto a = take(load_boxes(dec_anchors, BoxFormat::kCsv, c.load()), err);
      if (d.size() != a.size()) {
        throw input_error(std::to_string(d.size()) + " deltas but " + std::to_string(a.size()) +
                          " anchors");
      }
      std::vector<AnnotationRecord> boxes;
      for (std::size_t i = 0; i < d.size(); ++i) {
        AnnotationRecord r;
        r.id = d[i].id;
        r.normalized = decode(d[i].delta, a[i].normalized);
        boxes.push_back(std::move(r));
      }
      emit(format_boxes(boxes, BoxFormat::kCsv), c.output, out);
    };
  });

  auto* loss = app.add_subcommand("loss", "regression loss and its gradient for predicted deltas");
  std::string loss_targets, loss_anchors, loss_pred, loss_config;
  loss->add_option("--targets", loss_targets, "target boxes")->required()->check(CLI::ExistingFile);
  loss->add_option("--anchors", loss_anchors, "anchor boxes")->required()->check(CLI::ExistingFile);
  loss->add_option("--pred", loss_pred, "predicted deltas")->required()->check(CLI::ExistingFile);
  loss->add_option("--config", loss_config, "loss config JSON")->check(CLI::ExistingFile);
  loss->callback([&] {
    action = [&] {
      const auto t = take(load_boxes(loss_targets, BoxFormat::kCsv, c.load()), err);
      const auto a = take(load_boxes(loss_anchors, BoxFormat::kCsv, c.load()), err);
      const auto p = take(load_deltas(loss_pred, c.load()), err);
      if (t.size() != a.size() || t.size() != p.size()) {
        throw input_error("targets, anchors and predictions must have equal counts");
      }
      const LossConfig cfg =
          loss_config.empty() ? LossConfig{} : parse_loss_config(orbox::detail::read_file(loss_config));
      std::vector<RegressionMatch> m;
      std::vector<RegressionDelta> pred;
      for (std::size_t i = 0; i < t.size(); ++i) {
        m.push_back({a[i].normalized, t[i].normalized, true});
        pred.push_back(p[i].delta);
      }
      const auto res = rpn_regression_loss(m, pred, cfg);
      json j;
      j["loss"] = res.loss;
      json g = json::array();
      for (const auto& d : res.grad) g.push_back(d.as_array());
      j["grad"] = std::move(g);
      emit(dump(j), c.output, out);
    };
  });

  // roipool
  auto* roi = app.add_subcommand("roipool", "rotated RoI max pooling on a feature map file");
  std::string roi_fmap, roi_box, roi_file;
  std::size_t roi_k = 7;
  double roi_stride = 1.0;
  roi->add_option("--fmap", roi_fmap, "feature map (.bin)")->required()->check(CLI::ExistingFile);
  auto* roi_one = roi->add_option("--roi", roi_box, "x_a,y_a,x_c,y_c,theta in image coordinates");
  auto* roi_many = roi->add_option("--rois", roi_file, "box file of RoIs")->check(CLI::ExistingFile);
  roi_one->excludes(roi_many);
  roi->add_option("--k", roi_k, "output cells per side")->capture_default_str()->check(CLI::PositiveNumber);
  roi->add_option("--stride", roi_stride, "image pixels per feature cell")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  roi->callback([&] {
    action = [&] {
      std::vector<AnnotationRecord> rois;
      if (!roi_box.empty()) {
        const auto v = parse_list(roi_box);
        if (v.size() != 5) throw input_error("--roi needs 5 comma-separated numbers");
        rois.push_back(canonical_record(RotatedBox{v[0], v[1], v[2], v[3], normalize_angle(v[4])}, "0"));
      } else if (!roi_file.empty()) {
        rois = take(load_boxes(roi_file, BoxFormat::kCsv, c.load()), err);
      } else {
        throw input_error("one of --roi or --rois is required");
      }
      const FeatureMap fmap = read_feature_map(roi_fmap, roi_stride);
      json j = json::array();
      for (const auto& r : rois) {
        const PoolResult res = rotated_roi_pool(fmap, r.normalized, roi_k, threads);
        json o;
        o["id"] = r.id;
        o["k"] = roi_k;
        o["channels"] = res.channels;
        o["output"] = res.output;
        std::vector<int> fill(res.fill_mask.begin(), res.fill_mask.end());
        o["fill_mask"] = fill;
        j.push_back(std::move(o));
      }
      emit(dump(j), c.output, out);
    };
  });

  // eval
  auto* ev = app.add_subcommand("eval", "per-class AP and recall at fixed FPPI");
  std::string ev_dets, ev_gt, ev_crit = "vedai", ev_fppi = "0.01,0.1,1", ev_report = "json";
  double ev_iou = 0.5;
  std::size_t ev_images = 0;
  bool ev_curves = false;
  ev->add_option("--dets", ev_dets, "detections")->required()->check(CLI::ExistingFile);
  ev->add_option("--gt", ev_gt, "ground truth")->required()->check(CLI::ExistingFile);
  ev->add_option("--criterion", ev_crit, "vedai|voc")
      ->capture_default_str()
      ->check(CLI::IsMember({"vedai", "voc"}));
  ev->add_option("--iou-thresh", ev_iou, "IoU threshold for voc")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  ev->add_option("--fppi", ev_fppi, "comma-separated FPPI levels")->capture_default_str();
  ev->add_option("--num-images", ev_images, "image count for FPPI (default: distinct image ids)");
  ev->add_option("--report", ev_report, "json|text")
      ->capture_default_str()
      ->check(CLI::IsMember({"json", "text"}));
  ev->add_flag("--curves", ev_curves, "include precision/recall curves in the JSON report");
  ev->callback([&] {
    action = [&] {
      const auto d = take(load_detections(ev_dets, c.load()), err);
      const auto g = take(load_ground_truth(ev_gt, c.load()), err);
      std::vector<ScoredDetection> dets;
      std::vector<GroundTruth> gts;
      for (const auto& r : d) dets.push_back(r.det);
      for (const auto& r : g) gts.push_back(r.gt);
      EvalConfig cfg;
      cfg.criterion = ev_crit == "voc" ? CriterionKind::kVoc : CriterionKind::kVedai;
      cfg.iou_threshold = ev_iou;
      cfg.fppi_levels = parse_list(ev_fppi);
      if (ev_images > 0) cfg.num_images = ev_images;
      const EvalReport rep = evaluate(dets, gts, cfg);
      emit(ev_report == "text" ? report_to_text(rep) : dump(report_to_json(rep, ev_curves)),
           c.output, out);
    };
  });

  // normalize
  auto* norm = app.add_subcommand("normalize", "convert annotations to canonical boxes");
  std::string norm_in, norm_mapping;
  norm->add_option("--in", norm_in, "annotation file")->required()->check(CLI::ExistingFile);
  auto* map_opt = norm->add_option("--mapping", norm_mapping, "convention mapping JSON")
                      ->check(CLI::ExistingFile);
  norm->add_option("--format", c.box_format, "csv|json|corners (without --mapping)")
      ->check(CLI::IsMember({"csv", "json", "corners"}))
      ->excludes(map_opt);
  norm->callback([&] {
    action = [&] {
      const std::string text = orbox::detail::read_file(norm_in);
      auto recs = norm_mapping.empty()
                      ? take(parse_boxes(text, parse_box_format(c.box_format), c.load()), err)
                      : take(load_mapped(text, parse_mapping(orbox::detail::read_file(norm_mapping)),
                                         c.load()),
                             err);
      emit(format_boxes(recs, BoxFormat::kCsv, {true}), c.output, out);
    };
  });

  // bench
  auto* bench = app.add_subcommand("bench", "kernel timings on seeded random inputs");
  bench->require_subcommand(1);
  std::size_t b_n = 0;
  std::uint64_t b_seed = 1;
  int b_runs = 20, b_warmup = 3;
  double b_thresh = 0.7;
  std::size_t b_k = 7, b_size = 64, b_channels = 16;
  auto add_common = [&](CLI::App* s, std::size_t default_n) {
    s->add_option("--n", b_n, "problem size")->default_val(default_n);
    s->add_option("--seed", b_seed, "random seed")->capture_default_str();
    s->add_option("--runs", b_runs, "timed runs")->capture_default_str()->check(CLI::Range(20, 100000));
    s->add_option("--warmup", b_warmup, "untimed runs")->capture_default_str()->check(CLI::Range(3, 100000));
  };
  auto report = [&](const std::string& kernel, json result, double median) {
    result["kernel"] = kernel;
    result["n"] = b_n;
    result["seed"] = b_seed;
    emit(result.dump() + "\n", c.output, out);
    err << kernel << ": median " << median << " s over " << b_runs << " runs after " << b_warmup
        << " warmups, threads " << resolve_threads(threads) << "\n";
  };
  auto* b_iou = bench->add_subcommand("iou", "n x n IoU matrix");
  add_common(b_iou, 1000);
  b_iou->callback([&] {
    action = [&] {
      std::mt19937_64 rng(b_seed);
      std::vector<RotatedBox> boxes;
      for (std::size_t i = 0; i < b_n; ++i) boxes.push_back(scene::random_box(rng));
      std::vector<double> m;
      const double t = median_seconds(b_warmup, b_runs, [&] { m = iou_matrix(boxes, boxes, threads); });
      double sum = 0.0;
      for (double v : m) sum += v;
      report("iou", {{"pairs", m.size()}, {"iou_sum", sum}}, t);
    };
  });
  auto* b_nms = bench->add_subcommand("nms", "NMS over n clustered boxes");
  add_common(b_nms, 10000);
  b_nms->add_option("--thresh", b_thresh, "IoU threshold")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  b_nms->callback([&] {
    action = [&] {
      std::mt19937_64 rng(b_seed);
      const auto boxes = scene::clustered_boxes(rng, b_n);
      const auto scores = scene::random_scores(rng, b_n);
      std::vector<std::size_t> keep;
      const double t = median_seconds(b_warmup, b_runs, [&] {
        keep = rotated_nms(boxes, scores, b_thresh, kKeepAll, threads);
      });
      report("nms", {{"kept", keep.size()}, {"thresh", b_thresh}}, t);
    };
  });
  auto* b_roi = bench->add_subcommand("roipool", "pool n random RoIs from a random map");
  add_common(b_roi, 256);
  b_roi->add_option("--k", b_k, "output cells per side")->capture_default_str()->check(CLI::PositiveNumber);
  b_roi->add_option("--size", b_size, "feature map side")->capture_default_str()->check(CLI::PositiveNumber);
  b_roi->add_option("--channels", b_channels, "feature channels")->capture_default_str()->check(CLI::PositiveNumber);
  b_roi->callback([&] {
    action = [&] {
      std::mt19937_64 rng(b_seed);
      FeatureMap f;
      f.height = f.width = b_size;
      f.channels = b_channels;
      f.data.resize(b_size * b_size * b_channels);
      for (double& v : f.data) v = scene::uniform(rng, -1.0, 1.0);
      const double ext = static_cast<double>(b_size);
      std::vector<RotatedBox> rois;
      for (std::size_t i = 0; i < b_n; ++i) {
        rois.push_back(box_from_center({scene::uniform(rng, 0.2 * ext, 0.8 * ext),
                                        scene::uniform(rng, 0.2 * ext, 0.8 * ext)},
                                       scene::uniform(rng, 0.1 * ext, 0.4 * ext),
                                       scene::uniform(rng, 0.1 * ext, 0.4 * ext),
                                       scene::uniform(rng, 0.0, kTwoPi)));
      }
      double sum = 0.0;
      const double t = median_seconds(b_warmup, b_runs, [&] {
        sum = 0.0;
        for (const auto& r : rois) {
          for (double v : rotated_roi_pool(f, r, b_k, threads).output) sum += v;
        }
      });
      report("roipool", {{"output_sum", sum}, {"k", b_k}}, t);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help("", CLI::AppFormatMode::All);
    return 1;
  }

  try {
    if (threads > 0) set_default_threads(threads);
    if (!action) {
      err << app.help("", CLI::AppFormatMode::All);
      return 1;
    }
    action();
    return 0;
  } catch (const invalid_box& e) {
    err << "error: " << e.what() << "\n";
  } catch (const parse_error& e) {
    err << "error: " << e.what() << "\n";
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << "\n";
  } catch (const std::domain_error& e) {
    err << "error: " << e.what() << "\n";
  } catch (const input_error& e) {
    err << "error: " << e.what() << "\n";
  } catch (const io_error& e) {
    err << "error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 2;
  } catch (...) {
    err << "internal error\n";
    return 2;
  }
  return 1;
}

}  // namespace orbox::cli
