#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "fsood/raster.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = fsood::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string square(double x, double y, double s, const std::string& cat) {
  std::ostringstream o;
  o << x << ' ' << y << ' ' << x + s << ' ' << y << ' ' << x + s << ' ' << y + s << ' ' << x << ' ' << y + s
    << ' ' << cat << " 0\n";
  return o.str();
}

// Two 64x64 textured images; "p0" has 2 cars and a ship, "p1" 2 ships and a car.
class Dataset : public ::testing::Test {
 protected:
  void SetUp() override {
    root = fs::temp_directory_path() / ("fsood_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root);
    fs::create_directories(root / "labelTxt");
    fs::create_directories(root / "images");
    std::ofstream(root / "labelTxt" / "p0.txt") << square(4, 4, 12, "car") << square(30, 30, 10, "car")
                                                << square(40, 5, 14, "ship");
    std::ofstream(root / "labelTxt" / "p1.txt") << square(2, 40, 12, "ship") << square(20, 20, 16, "ship")
                                                << square(45, 45, 12, "car");
    for (const char* id : {"p0", "p1"}) {
      fsood::ImageRaster img(64, 64, 3);
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
          for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>(((x / 2 + y / 2) % 2) * 200 + c);
      fsood::write_png(root / "images" / (std::string(id) + ".png"), img);
    }
  }
  void TearDown() override { fs::remove_all(root); }
  std::string path(const std::string& rel) const { return (root / rel).string(); }
  fs::path root;
};

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(call({}).code, 2);
  EXPECT_EQ(call({"frobnicate"}).code, 2);
  EXPECT_EQ(call({"iou", "--a", "0,0,1,1,0"}).code, 2);
  EXPECT_EQ(call({"iou", "--a", "0,0,1,1", "--b", "0,0,1,1,0"}).code, 2);
  EXPECT_EQ(call({"iou", "--a", "0,0,-1,1,0", "--b", "0,0,1,1,0"}).code, 2);
  EXPECT_EQ(call({"tile", "--width", "0", "--height", "5"}).code, 2);
  EXPECT_EQ(call({"--help"}).code, 0);
  EXPECT_EQ(call({"--version"}).code, 0);
}

TEST(Cli, Iou) {
  auto r = call({"iou", "--a", "0,0,2,2,0", "--b", "1,1,2,2,0"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "0.142857\n");
  r = call({"iou", "--a", "0,0,10,2,0", "--b", "0,0,10,2,0.7854", "--mode", "hbb"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(call({"iou", "--a", "0,0,2,2,0", "--b", "0,0,2,2,0", "--mode", "xyz"}).code, 2);
}

TEST(Cli, Tile) {
  const auto r = call({"tile", "--width", "2000", "--height", "1024"});
  ASSERT_EQ(r.code, 0);
  const json j = json::parse(r.out);
  EXPECT_EQ(j.at("origins_x"), (json{0, 824, 976}));
  EXPECT_EQ(j.at("origins_y"), (json{0}));
  EXPECT_EQ(j.at("windows").size(), 3u);
  EXPECT_EQ(j.at("resolved_config").at("stride"), 824);
  EXPECT_TRUE(j.contains("tool_version"));
}

TEST(Cli, GradcheckExitCodes) {
  auto r = call({"gradcheck", "--instances", "5", "--seed", "3"});
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(json::parse(r.out).at("pass").get<bool>());
  EXPECT_EQ(call({"gradcheck", "--instances", "5", "--seed", "3", "--corrupt"}).code, 5);
  EXPECT_EQ(r.out, call({"gradcheck", "--instances", "5", "--seed", "3"}).out);
}

TEST_F(Dataset, SampleShotsIsDeterministic) {
  const auto a = call({"sample-shots", "--data", root.string(), "--k", "2", "--seed", "11"});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto b = call({"sample-shots", "--data", root.string(), "--k", "2", "--seed", "11"});
  EXPECT_EQ(a.out, b.out);
  const json j = json::parse(a.out);
  EXPECT_EQ(j.at("selected").size(), 4u);
  EXPECT_EQ(j.at("categories"), (json{"car", "ship"}));

  const auto to_file = call({"sample-shots", "--data", root.string(), "--k", "2", "--seed", "11", "--out", path("m.json")});
  EXPECT_EQ(to_file.code, 0);
  auto from_file = json::parse(slurp(root / "m.json"));
  EXPECT_EQ(from_file.at("resolved_config").at("out"), path("m.json"));
  from_file["resolved_config"]["out"] = "";
  EXPECT_EQ(from_file, j);
}

TEST_F(Dataset, SampleShotsFailureCodes) {
  EXPECT_EQ(call({"sample-shots", "--data", root.string(), "--k", "4", "--seed", "1"}).code, 3);
  EXPECT_EQ(call({"sample-shots", "--data", root.string(), "--k", "4", "--seed", "1", "--allow-fewer"}).code, 0);
  EXPECT_EQ(call({"sample-shots", "--data", path("nope"), "--k", "1", "--seed", "1"}).code, 4);
  EXPECT_EQ(call({"sample-shots", "--data", root.string(), "--k", "0", "--seed", "1"}).code, 2);
  std::ofstream(root / "split.json") << R"({"base": ["car"], "novel": ["boat"]})";
  EXPECT_EQ(call({"sample-shots", "--data", root.string(), "--k", "1", "--seed", "1", "--split", path("split.json")}).code, 2);
  std::ofstream(root / "split.json") << R"({"base": ["car"], "novel": []})";
  const auto r = call({"sample-shots", "--data", root.string(), "--k", "1", "--seed", "1", "--split", path("split.json")});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(json::parse(r.out).at("categories"), json{"car"});
  std::ofstream(root / "labelTxt" / "p2.txt") << "1 2 3\n";
  EXPECT_EQ(call({"sample-shots", "--data", root.string(), "--k", "1", "--seed", "1"}).code, 2);
}

TEST_F(Dataset, MaskWritesImagesAndManifest) {
  ASSERT_EQ(call({"sample-shots", "--data", root.string(), "--k", "1", "--seed", "5", "--out", path("m.json")}).code, 0);
  const auto r = call({"mask", "--manifest", path("m.json"), "--images", path("images"), "--out", path("masked"), "--sigma", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out), json::parse(slurp(root / "masked" / "mask_manifest.json")));
  const json manifest = json::parse(slurp(root / "m.json"));
  for (const auto& m : manifest.at("masked")) {
    const auto id = m.at("image").get<std::string>();
    const auto before = fsood::read_png(root / "images" / (id + ".png"));
    const auto after = fsood::read_png(root / "masked" / (id + ".png"));
    EXPECT_NE(before, after);
    // The corner pixel is outside every region.
    EXPECT_EQ(before.at(63, 0, 0), after.at(63, 0, 0));
  }
  fs::remove(root / "images" / "p1.png");
  fs::remove(root / "images" / "p0.png");
  EXPECT_EQ(call({"mask", "--manifest", path("m.json"), "--images", path("images"), "--out", path("again")}).code, 4);
  EXPECT_EQ(call({"mask", "--manifest", path("missing.json"), "--images", path("images"), "--out", path("again")}).code, 4);
}

TEST_F(Dataset, Eval) {
  std::ofstream(root / "dets.jsonl")
      << R"({"image": "p0", "category": "car", "box": [4, 4, 16, 16], "score": 0.9})" << "\n"
      << R"({"image": "p0", "category": "car", "box": [60, 0, 63, 3], "score": 0.95})" << "\n"
      << R"({"image": "p1", "category": "ship", "box": [28, 28, 16, 16, 0], "score": 0.8})" << "\n";
  const auto r = call({"eval", "--detections", path("dets.jsonl"), "--data", root.string(), "--out", path("rep.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("car"), std::string::npos);
  const json rep = json::parse(slurp(root / "rep.json"));
  // car: FP then TP out of 3 positives; ship: 1 of 3 at precision 1.
  EXPECT_NEAR(rep.at("per_class").at("car").at("ap").get<double>(), 4 * 0.5 / 11.0, 1e-12);
  EXPECT_NEAR(rep.at("per_class").at("ship").at("ap").get<double>(), 4.0 / 11.0, 1e-12);

  std::ofstream(root / "bad.jsonl") << R"({"image": "p0", "category": "car", "box": [4, 4, 16, 16], "score": 0.9})"
                                    << "\n{\"image\": 1}\n";
  const auto bad = call({"eval", "--detections", path("bad.jsonl"), "--data", root.string()});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("line 2"), std::string::npos);
  EXPECT_EQ(call({"eval", "--detections", path("none.jsonl"), "--data", root.string()}).code, 4);
}

TEST(Cli, TrainToyIsByteIdentical) {
  const auto base = fs::temp_directory_path() / "fsood_cli_train";
  fs::remove_all(base);
  fs::create_directories(base);
  std::ofstream(base / "cfg.json") << R"({"eval_samples": 100, "mcl": {"capacity": 48}})";
  const std::vector<std::string> files{"loss.csv", "embeddings.csv", "bank.json", "metrics.json"};
  std::vector<std::string> first;
  for (int run = 0; run < 2; ++run) {
    const auto r = call({"train-toy", "--config", (base / "cfg.json").string(), "--seed", "4", "--iterations", "20",
                         "--out", (base / "a").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    for (std::size_t f = 0; f < files.size(); ++f) {
      const std::string text = slurp(base / "a" / files[f]);
      EXPECT_FALSE(text.empty()) << files[f];
      if (run == 0) {
        first.push_back(text);
      } else {
        EXPECT_EQ(text, first[f]) << files[f];
      }
    }
  }
  const json metrics = json::parse(slurp(base / "a" / "metrics.json"));
  EXPECT_EQ(metrics.at("bank_size"), 48);
  EXPECT_EQ(metrics.at("resolved_config").at("data").at("seed"), 4);

  std::ofstream(base / "bad.json") << R"({"mcl": {"taux": 1}})";
  EXPECT_EQ(call({"train-toy", "--config", (base / "bad.json").string(), "--seed", "1", "--out", (base / "c").string()}).code, 2);
  EXPECT_EQ(call({"train-toy", "--config", (base / "nope.json").string(), "--seed", "1", "--out", (base / "c").string()}).code, 4);
  fs::remove_all(base);
}
