#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fsood/fewshot.hpp"
#include "fsood/geometry.hpp"

namespace fsood {

enum class IouMode { obb, hbb };

IouMode parse_iou_mode(std::string_view s);
std::string_view to_string(IouMode mode);

struct Detection {
  std::string image;
  int category = 0;
  OrientedBox box;
  double score = 0.0;
};

struct GroundTruth {
  std::string image;
  int category = 0;
  OrientedBox box;
  bool difficult = false;
};

enum class MatchLabel { tp, fp, ignored };

struct MatchResult {
  /// Aligned with the input detections (not the ranked order).
  std::vector<MatchLabel> labels;
  /// Non-difficult ground truths.
  std::size_t positives = 0;
};

/// Box IoU under the chosen mode; hbb compares axis-aligned envelopes.
double box_iou(const OrientedBox& a, const OrientedBox& b, IouMode mode);

/// VOC2007 greedy matching for a single category. Detections are ranked by
/// descending score, ties in input order. Each detection takes the ground
/// truth of highest IoU on its image; it is a TP when that IoU exceeds the
/// threshold and the ground truth is still free, ignored when the ground
/// truth is difficult, and FP otherwise.
MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const GroundTruth> ground_truths, double iou_threshold,
                             IouMode mode);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct PrCurve {
  std::vector<PrPoint> points;
  /// Set when the curve is undefined (no positives); AP is then 0.
  bool warning = false;
};

/// Cumulative precision/recall in descending score order; ignored entries
/// are skipped.
PrCurve precision_recall(std::span<const MatchLabel> labels, std::span<const double> scores,
                         std::size_t total_positives);

/// 11-point interpolated AP: mean over r in {0, 0.1, ..., 1} of the best
/// precision at recall >= r.
double average_precision_voc07(const PrCurve& curve);

struct ClassResult {
  std::string name;
  double ap = 0.0;
  std::size_t positives = 0;
  std::size_t detections = 0;
  bool warning = false;
};

struct EvalReport {
  std::vector<ClassResult> per_class;
  std::optional<double> base_map;
  std::optional<double> novel_map;
  double all_map = 0.0;
};

/// Per-class AP over the split's categories (or every category without a
/// split) and the three group means. Throws std::invalid_argument when a
/// detection or ground truth names a category outside `categories`.
EvalReport map_report(std::span<const Detection> detections,
                      std::span<const GroundTruth> ground_truths,
                      const std::vector<std::string>& categories,
                      const std::optional<SplitSpec>& split, IouMode mode,
                      double iou_threshold = 0.5);

std::vector<GroundTruth> ground_truths_from(const DatasetIndex& index);

/// Schema violation in detection input; carries the 1-based line number.
class DetectionSchemaError : public std::runtime_error {
 public:
  DetectionSchemaError(std::size_t line, const std::string& detail);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// One JSON object per line:
///   {"image": str, "category": str | int, "box": [cx,cy,w,h,angle] |
///    [xmin,ymin,xmax,ymax], "score": number in [0, 1]}
std::vector<Detection> parse_detections_jsonl(std::string_view text,
                                              const std::vector<std::string>& categories);

nlohmann::json report_to_json(const EvalReport& report);
/// Aligned plain-text table, one row per class plus the group means.
std::string report_table(const EvalReport& report);

}  // namespace fsood
