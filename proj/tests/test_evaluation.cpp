#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "fsood/evaluation.hpp"

using namespace fsood;

namespace {

Detection det(const std::string& image, double cx, double cy, double score, int category = 0) {
  return {image, category, OrientedBox(cx, cy, 10, 10, 0), score};
}

GroundTruth gt(const std::string& image, double cx, double cy, int category = 0, bool difficult = false) {
  return {image, category, OrientedBox(cx, cy, 10, 10, 0), difficult};
}

double ap_of(const std::vector<Detection>& d, const std::vector<GroundTruth>& g, IouMode mode = IouMode::obb) {
  const auto m = match_detections(d, g, 0.5, mode);
  std::vector<double> scores;
  for (const auto& x : d) scores.push_back(x.score);
  return average_precision_voc07(precision_recall(m.labels, scores, m.positives));
}

// 11-point AP from a ranked TP/FP string, e.g. "FT" = FP then TP.
double ranked_ap(const std::string& ranked, std::size_t positives) {
  double sum = 0.0;
  for (int t = 0; t <= 10; ++t) {
    double best = 0.0;
    for (std::size_t k = 1; k <= ranked.size(); ++k) {
      const auto tp = static_cast<double>(std::count(ranked.begin(), ranked.begin() + static_cast<long>(k), 'T'));
      if (tp / static_cast<double>(positives) >= t / 10.0) best = std::max(best, tp / static_cast<double>(k));
    }
    sum += best;
  }
  return sum / 11.0;
}

}  // namespace

TEST(AveragePrecision, FalsePositiveThenTruePositive) {
  const std::vector<GroundTruth> g{gt("a", 0, 0)};
  const std::vector<Detection> d{det("a", 100, 100, 0.9), det("a", 0, 0, 0.8)};
  EXPECT_DOUBLE_EQ(ap_of(d, g), 0.5);
}

TEST(AveragePrecision, PerfectDetectorIsOne) {
  const std::vector<GroundTruth> g{gt("a", 0, 0), gt("a", 50, 50), gt("b", 0, 0)};
  const std::vector<Detection> d{det("a", 0, 0, 0.9), det("b", 1, 0, 0.7), det("a", 50, 51, 0.8)};
  EXPECT_DOUBLE_EQ(ap_of(d, g), 1.0);
}

TEST(AveragePrecision, NoTruePositivesIsZero) {
  const std::vector<GroundTruth> g{gt("a", 0, 0)};
  EXPECT_EQ(ap_of({det("a", 30, 0, 0.9), det("b", 0, 0, 0.8)}, g), 0.0);
  EXPECT_EQ(ap_of({}, g), 0.0);
}

TEST(AveragePrecision, DuplicateDetectionIsFalsePositive) {
  const std::vector<GroundTruth> g{gt("a", 0, 0), gt("a", 100, 0)};
  // TP, duplicate FP, TP: recall 0.5 at precision 1, recall 1 at 2/3.
  const std::vector<Detection> d{det("a", 0, 0, 0.9), det("a", 1, 0, 0.8), det("a", 100, 0, 0.7)};
  const auto m = match_detections(d, g, 0.5, IouMode::obb);
  EXPECT_EQ(m.labels, (std::vector<MatchLabel>{MatchLabel::tp, MatchLabel::fp, MatchLabel::tp}));
  EXPECT_NEAR(ap_of(d, g), (6 * 1.0 + 5 * (2.0 / 3.0)) / 11.0, 1e-15);
  EXPECT_NEAR(ap_of(d, g), ranked_ap("TFT", 2), 1e-15);
}

TEST(AveragePrecision, DifficultGroundTruthIsIgnored) {
  const std::vector<GroundTruth> g{gt("a", 0, 0), gt("a", 100, 0, 0, true)};
  const std::vector<Detection> d{det("a", 100, 0, 0.95), det("a", 0, 0, 0.5)};
  const auto m = match_detections(d, g, 0.5, IouMode::obb);
  EXPECT_EQ(m.positives, 1u);
  EXPECT_EQ(m.labels[0], MatchLabel::ignored);
  EXPECT_DOUBLE_EQ(ap_of(d, g), 1.0);
}

TEST(AveragePrecision, HalfRecallCapsAtSixElevenths) {
  const std::vector<GroundTruth> g{gt("a", 0, 0), gt("b", 0, 0)};
  EXPECT_NEAR(ap_of({det("a", 0, 0, 0.9)}, g), 6.0 / 11.0, 1e-15);
}

TEST(AveragePrecision, IouMustExceedThreshold) {
  // Overlap of two 10x10 squares shifted by dx: IoU = (10-dx)/(10+dx); dx=10/3 gives exactly 0.5.
  const std::vector<GroundTruth> g{gt("a", 0, 0)};
  const std::vector<Detection> exact{{"a", 0, OrientedBox(0, 0, 10, 10, 0), 0.9}};
  const Detection shifted{"a", 0, OrientedBox(10.0 / 3.0 - 1e-9, 0, 10, 10, 0), 0.9};
  EXPECT_GT(box_iou(g[0].box, shifted.box, IouMode::obb), 0.5);
  EXPECT_EQ(match_detections(std::vector<Detection>{shifted}, g, 0.5, IouMode::obb).labels[0], MatchLabel::tp);
  const Detection below{"a", 0, OrientedBox(10.0 / 3.0 + 1e-9, 0, 10, 10, 0), 0.9};
  EXPECT_EQ(match_detections(std::vector<Detection>{below}, g, 0.5, IouMode::obb).labels[0], MatchLabel::fp);
  (void)exact;
}

TEST(AveragePrecision, TiesKeepInputOrder) {
  const std::vector<GroundTruth> g{gt("a", 0, 0)};
  EXPECT_DOUBLE_EQ(ap_of({det("a", 0, 0, 0.5), det("a", 100, 0, 0.5)}, g), 1.0);
  EXPECT_DOUBLE_EQ(ap_of({det("a", 100, 0, 0.5), det("a", 0, 0, 0.5)}, g), 0.5);
}

TEST(AveragePrecision, MatchesRankedOracleOnRandomScenes) {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 300; ++t) {
    const int n_gt = 1 + static_cast<int>(gen() % 6);
    std::vector<GroundTruth> g;
    for (int k = 0; k < n_gt; ++k) g.push_back(gt("a", 100.0 * k, 0));
    std::vector<Detection> d;
    std::vector<std::pair<double, char>> ranked;
    std::vector<bool> used(static_cast<std::size_t>(n_gt), false);
    const int n_det = static_cast<int>(gen() % 9);
    for (int k = 0; k < n_det; ++k) d.push_back(det("a", 100.0 * static_cast<double>(gen() % 8), 0, u(gen)));
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return d[a].score > d[b].score; });
    std::string seq;
    for (auto i : order) {
      const auto slot = static_cast<std::size_t>(d[i].box.cx() / 100.0);
      const bool hit = slot < used.size() && !used[slot];
      if (hit) used[slot] = true;
      seq += hit ? 'T' : 'F';
    }
    EXPECT_NEAR(ap_of(d, g), ranked_ap(seq, static_cast<std::size_t>(n_gt)), 1e-15);
  }
}

TEST(AveragePrecision, InvariantUnderMonotoneScoreRescaling) {
  std::mt19937_64 gen(37);
  std::uniform_real_distribution<double> u(0, 1), pos(0, 60);
  for (int t = 0; t < 100; ++t) {
    std::vector<GroundTruth> g;
    for (int k = 0; k < 5; ++k) g.push_back(gt("a", pos(gen), pos(gen)));
    std::vector<Detection> d;
    for (int k = 0; k < 12; ++k) d.push_back(det("a", pos(gen), pos(gen), u(gen)));
    const double base = ap_of(d, g);
    auto squash = d, power = d;
    for (auto& x : squash) x.score = 0.1 + 0.5 * x.score;
    for (auto& x : power) x.score = std::pow(x.score, 3.0);
    EXPECT_EQ(ap_of(squash, g), base);
    EXPECT_EQ(ap_of(power, g), base);
  }
}

TEST(PrecisionRecall, NoPositivesWarns) {
  const std::vector<MatchLabel> labels{MatchLabel::fp};
  const std::vector<double> scores{0.3};
  const auto c = precision_recall(labels, scores, 0);
  EXPECT_TRUE(c.warning);
  EXPECT_EQ(average_precision_voc07(c), 0.0);
  EXPECT_THROW(precision_recall(labels, std::vector<double>{}, 1), std::invalid_argument);
}

TEST(BoxIou, HbbModeUsesEnvelopes) {
  const OrientedBox a(0, 0, 10, 2, 0.0), b(0, 0, 10, 2, 3.14159265358979 / 2);
  EXPECT_NEAR(box_iou(a, b, IouMode::obb), 4.0 / 36.0, 1e-9);
  EXPECT_NEAR(box_iou(a, b, IouMode::hbb), 4.0 / 36.0, 1e-9);
  const OrientedBox c(0, 0, 10, 2, 0.3);
  EXPECT_GT(box_iou(c, c, IouMode::hbb), 0.999);
  EXPECT_EQ(box_iou(a, c, IouMode::hbb), aabb_iou(obb_to_hbb(a), obb_to_hbb(c)));
  EXPECT_EQ(parse_iou_mode("hbb"), IouMode::hbb);
  EXPECT_THROW(parse_iou_mode("rbox"), std::invalid_argument);
}

TEST(MapReport, SplitMeans) {
  const std::vector<std::string> cats{"car", "plane", "ship"};
  std::vector<GroundTruth> g{gt("a", 0, 0, 0), gt("a", 100, 0, 1), gt("b", 0, 0, 2)};
  std::vector<Detection> d{det("a", 0, 0, 0.9, 0), det("a", 300, 0, 0.9, 1), det("a", 100, 0, 0.8, 1)};
  const auto split = SplitSpec::from_names(cats, {"car", "ship"}, {"plane"});
  const EvalReport r = map_report(d, g, cats, split, IouMode::obb);
  ASSERT_EQ(r.per_class.size(), 3u);
  EXPECT_DOUBLE_EQ(r.per_class[0].ap, 1.0);
  EXPECT_DOUBLE_EQ(r.per_class[1].ap, 0.5);
  EXPECT_DOUBLE_EQ(r.per_class[2].ap, 0.0);
  EXPECT_DOUBLE_EQ(*r.base_map, 0.5);
  EXPECT_DOUBLE_EQ(*r.novel_map, 0.5);
  EXPECT_DOUBLE_EQ(r.all_map, 0.5);

  const EvalReport nosplit = map_report(d, g, cats, std::nullopt, IouMode::obb);
  EXPECT_FALSE(nosplit.base_map);
  EXPECT_DOUBLE_EQ(nosplit.all_map, 0.5);

  const auto j = report_to_json(r);
  EXPECT_DOUBLE_EQ(j.at("per_class").at("plane").at("ap").get<double>(), 0.5);
  EXPECT_EQ(j.at("per_class").at("car").at("positives"), 1);
  EXPECT_TRUE(j.at("no_positive_classes").empty());
  const std::string table = report_table(r);
  for (const char* name : {"car", "plane", "ship"}) EXPECT_NE(table.find(name), std::string::npos);

  d.push_back(det("a", 0, 0, 0.5, 7));
  EXPECT_THROW(map_report(d, g, cats, split, IouMode::obb), std::invalid_argument);
}

TEST(MapReport, ClassWithoutPositivesIsFlagged) {
  const std::vector<std::string> cats{"car", "plane"};
  const EvalReport r = map_report(std::vector<Detection>{det("a", 0, 0, 0.4, 1)},
                                  std::vector<GroundTruth>{gt("a", 0, 0, 0)}, cats, std::nullopt, IouMode::obb);
  EXPECT_TRUE(r.per_class[1].warning);
  EXPECT_EQ(report_to_json(r).at("no_positive_classes"), nlohmann::json{"plane"});
}

TEST(ParseDetections, AcceptsBothBoxFormsAndCategoryForms) {
  const std::vector<std::string> cats{"car", "plane"};
  const std::string text =
      R"({"image": "a", "category": "plane", "box": [5, 6, 4, 2, 0.1], "score": 0.7})"
      "\n\n"
      R"({"image": "b", "category": 0, "box": [0, 0, 4, 2], "score": 1})"
      "\n";
  const auto d = parse_detections_jsonl(text, cats);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].category, 1);
  EXPECT_NEAR(d[0].box.angle(), 0.1, 1e-15);
  EXPECT_NEAR(d[1].box.cx(), 2.0, 1e-15);
  EXPECT_NEAR(d[1].box.h(), 2.0, 1e-15);
}

TEST(ParseDetections, SchemaErrorsCarryLineNumbers) {
  const std::vector<std::string> cats{"car"};
  const std::string good = R"({"image": "a", "category": "car", "box": [0, 0, 4, 2], "score": 0.5})";
  const std::vector<std::string> bad = {
      "not json",
      R"([1, 2])",
      R"({"image": 3, "category": "car", "box": [0, 0, 4, 2], "score": 0.5})",
      R"({"image": "a", "category": "boat", "box": [0, 0, 4, 2], "score": 0.5})",
      R"({"image": "a", "category": 4, "box": [0, 0, 4, 2], "score": 0.5})",
      R"({"image": "a", "category": "car", "box": [0, 0, 4], "score": 0.5})",
      R"({"image": "a", "category": "car", "box": [0, 0, 4, 2], "score": 1.5})",
      R"({"image": "a", "category": "car", "box": [0, 0, 4, 2]})",
      R"({"image": "a", "category": "car", "box": [4, 0, 0, 2], "score": 0.5})",
  };
  for (const auto& line : bad) {
    try {
      parse_detections_jsonl(good + "\n" + good + "\n" + line + "\n", cats);
      FAIL() << line;
    } catch (const DetectionSchemaError& e) {
      EXPECT_EQ(e.line(), 3u) << line;
    }
  }
}
