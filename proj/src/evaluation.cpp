#include "fsood/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

namespace fsood {

namespace {

std::vector<std::size_t> rank_by_score(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

double mean_ap(const std::vector<ClassResult>& per_class, const std::set<int>& members) {
  double sum = 0.0;
  for (int c : members) sum += per_class[static_cast<std::size_t>(c)].ap;
  return members.empty() ? 0.0 : sum / static_cast<double>(members.size());
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

IouMode parse_iou_mode(std::string_view s) {
  if (s == "obb") return IouMode::obb;
  if (s == "hbb") return IouMode::hbb;
  throw std::invalid_argument("iou mode must be 'obb' or 'hbb', got '" + std::string(s) + "'");
}

std::string_view to_string(IouMode mode) { return mode == IouMode::obb ? "obb" : "hbb"; }

double box_iou(const OrientedBox& a, const OrientedBox& b, IouMode mode) {
  return mode == IouMode::obb ? rotated_iou(a, b) : aabb_iou(obb_to_hbb(a), obb_to_hbb(b));
}

MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const GroundTruth> ground_truths, double iou_threshold,
                             IouMode mode) {
  MatchResult out;
  out.labels.assign(detections.size(), MatchLabel::fp);

  std::map<std::string_view, std::vector<std::size_t>> by_image;
  for (std::size_t g = 0; g < ground_truths.size(); ++g) {
    by_image[ground_truths[g].image].push_back(g);
    if (!ground_truths[g].difficult) ++out.positives;
  }
  std::vector<bool> taken(ground_truths.size(), false);

  std::vector<double> scores(detections.size());
  for (std::size_t d = 0; d < detections.size(); ++d) scores[d] = detections[d].score;

  for (std::size_t d : rank_by_score(scores)) {
    const auto it = by_image.find(detections[d].image);
    if (it == by_image.end()) continue;
    double best = -1.0;
    std::size_t best_g = 0;
    for (std::size_t g : it->second) {
      const double iou = box_iou(detections[d].box, ground_truths[g].box, mode);
      if (iou > best) {
        best = iou;
        best_g = g;
      }
    }
    if (best > iou_threshold) {
      if (ground_truths[best_g].difficult) {
        out.labels[d] = MatchLabel::ignored;
      } else if (!taken[best_g]) {
        taken[best_g] = true;
        out.labels[d] = MatchLabel::tp;
      }
    }
  }
  return out;
}

PrCurve precision_recall(std::span<const MatchLabel> labels, std::span<const double> scores,
                         std::size_t total_positives) {
  if (labels.size() != scores.size()) {
    throw std::invalid_argument("precision_recall: labels and scores differ in length");
  }
  PrCurve curve;
  if (total_positives == 0) {
    curve.warning = true;
    return curve;
  }
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i : rank_by_score(scores)) {
    if (labels[i] == MatchLabel::ignored) continue;
    (labels[i] == MatchLabel::tp ? tp : fp) += 1;
    curve.points.push_back({static_cast<double>(tp) / static_cast<double>(total_positives),
                            static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }
  return curve;
}

double average_precision_voc07(const PrCurve& curve) {
  double sum = 0.0;
  for (int t = 0; t <= 10; ++t) {
    const double r = t / 10.0;
    double best = 0.0;
    for (const PrPoint& p : curve.points) {
      if (p.recall >= r) best = std::max(best, p.precision);
    }
    sum += best;
  }
  return sum / 11.0;
}

EvalReport map_report(std::span<const Detection> detections,
                      std::span<const GroundTruth> ground_truths,
                      const std::vector<std::string>& categories,
                      const std::optional<SplitSpec>& split, IouMode mode, double iou_threshold) {
  const auto n = categories.size();
  if (split) split->validate(n);
  std::vector<std::vector<Detection>> dets(n);
  std::vector<std::vector<GroundTruth>> gts(n);
  for (const auto& d : detections) {
    if (d.category < 0 || static_cast<std::size_t>(d.category) >= n) {
      throw std::invalid_argument("detection on image '" + d.image + "' references unknown category " +
                                  std::to_string(d.category));
    }
    dets[static_cast<std::size_t>(d.category)].push_back(d);
  }
  for (const auto& g : ground_truths) {
    if (g.category < 0 || static_cast<std::size_t>(g.category) >= n) {
      throw std::invalid_argument("ground truth on image '" + g.image + "' references unknown category");
    }
    gts[static_cast<std::size_t>(g.category)].push_back(g);
  }

  EvalReport report;
  report.per_class.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    ClassResult& r = report.per_class[c];
    r.name = categories[c];
    const MatchResult m = match_detections(dets[c], gts[c], iou_threshold, mode);
    std::vector<double> scores;
    scores.reserve(dets[c].size());
    for (const auto& d : dets[c]) scores.push_back(d.score);
    const PrCurve curve = precision_recall(m.labels, scores, m.positives);
    r.ap = average_precision_voc07(curve);
    r.positives = m.positives;
    r.detections = dets[c].size();
    r.warning = curve.warning;
  }

  std::set<int> all;
  if (split) {
    report.base_map = mean_ap(report.per_class, split->base);
    report.novel_map = mean_ap(report.per_class, split->novel);
    all.insert(split->base.begin(), split->base.end());
    all.insert(split->novel.begin(), split->novel.end());
  } else {
    for (std::size_t c = 0; c < n; ++c) all.insert(static_cast<int>(c));
  }
  report.all_map = mean_ap(report.per_class, all);
  if (split) {
    // Classes outside the split are not reported.
    std::vector<ClassResult> kept;
    for (int c : all) kept.push_back(report.per_class[static_cast<std::size_t>(c)]);
    report.per_class = std::move(kept);
  }
  return report;
}

std::vector<GroundTruth> ground_truths_from(const DatasetIndex& index) {
  std::vector<GroundTruth> out;
  out.reserve(index.instances.size());
  for (const auto& inst : index.instances) {
    out.push_back({inst.image, inst.category, inst.box, inst.difficult});
  }
  return out;
}

DetectionSchemaError::DetectionSchemaError(std::size_t line, const std::string& detail)
    : std::runtime_error("detections line " + std::to_string(line) + ": " + detail), line_(line) {}

std::vector<Detection> parse_detections_jsonl(std::string_view text,
                                              const std::vector<std::string>& categories) {
  std::vector<Detection> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw DetectionSchemaError(line_no, "not a JSON object");
    try {
      Detection d;
      const auto& image = j.at("image");
      if (!image.is_string()) throw DetectionSchemaError(line_no, "'image' must be a string");
      d.image = image.get<std::string>();

      const auto& cat = j.at("category");
      if (cat.is_string()) {
        const auto name = cat.get<std::string>();
        const auto it = std::find(categories.begin(), categories.end(), name);
        if (it == categories.end()) throw DetectionSchemaError(line_no, "unknown category '" + name + "'");
        d.category = static_cast<int>(it - categories.begin());
      } else if (cat.is_number_integer()) {
        d.category = cat.get<int>();
        if (d.category < 0 || static_cast<std::size_t>(d.category) >= categories.size()) {
          throw DetectionSchemaError(line_no, "unknown category id " + std::to_string(d.category));
        }
      } else {
        throw DetectionSchemaError(line_no, "'category' must be a name or an integer id");
      }

      const auto& score = j.at("score");
      if (!score.is_number()) throw DetectionSchemaError(line_no, "'score' must be a number");
      d.score = score.get<double>();
      if (!(d.score >= 0.0 && d.score <= 1.0)) throw DetectionSchemaError(line_no, "score outside [0, 1]");

      const auto& box = j.at("box");
      if (!box.is_array()) throw DetectionSchemaError(line_no, "'box' must be an array");
      std::vector<double> v;
      for (const auto& x : box) {
        if (!x.is_number()) throw DetectionSchemaError(line_no, "'box' entries must be numbers");
        v.push_back(x.get<double>());
      }
      if (v.size() == 5) {
        d.box = OrientedBox(v[0], v[1], v[2], v[3], v[4]);
      } else if (v.size() == 4) {
        d.box = hbb_to_obb(AxisAlignedBox(v[0], v[1], v[2], v[3]));
      } else {
        throw DetectionSchemaError(line_no, "'box' must have 4 or 5 numbers");
      }
      out.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw DetectionSchemaError(line_no, e.what());
    } catch (const std::invalid_argument& e) {
      throw DetectionSchemaError(line_no, e.what());
    }
  }
  return out;
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json per_class = nlohmann::json::object();
  nlohmann::json warnings = nlohmann::json::array();
  for (const auto& r : report.per_class) {
    per_class[r.name] = {{"ap", r.ap}, {"positives", r.positives}, {"detections", r.detections}};
    if (r.warning) warnings.push_back(r.name);
  }
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"per_class", std::move(per_class)},
          {"base_map", opt(report.base_map)},
          {"novel_map", opt(report.novel_map)},
          {"all_map", report.all_map},
          {"no_positive_classes", std::move(warnings)}};
}

std::string report_table(const EvalReport& report) {
  std::size_t width = 9;
  for (const auto& r : report.per_class) width = std::max(width, r.name.size());
  auto row = [&](const std::string& name, const std::string& ap, const std::string& extra) {
    std::string s = name;
    s.resize(width, ' ');
    return s + "  " + ap + extra + "\n";
  };
  std::string out = row("category", "AP50  ", "  positives  detections");
  for (const auto& r : report.per_class) {
    char extra[64];
    std::snprintf(extra, sizeof extra, "  %9zu  %10zu", r.positives, r.detections);
    out += row(r.name, format_fixed(r.ap, 4), extra);
  }
  if (report.base_map) out += row("base mAP", format_fixed(*report.base_map, 4), "");
  if (report.novel_map) out += row("novel mAP", format_fixed(*report.novel_map, 4), "");
  out += row("all mAP", format_fixed(report.all_map, 4), "");
  return out;
}

}  // namespace fsood
