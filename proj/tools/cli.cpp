#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "fsood/evaluation.hpp"
#include "fsood/fewshot.hpp"
#include "fsood/geometry.hpp"
#include "fsood/gradcheck.hpp"
#include "fsood/raster.hpp"
#include "fsood/toytrain.hpp"

namespace fsood::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kToolVersion = FSOOD_VERSION;

struct MissingResource : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingResource("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  const auto j = json::parse(read_text(path), nullptr, false);
  if (j.is_discarded()) throw UsageError(path.string() + ": invalid JSON");
  return j;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json with_metadata(json body, json resolved) {
  body["tool_version"] = kToolVersion;
  body["resolved_config"] = std::move(resolved);
  return body;
}

void emit(const json& j, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << dump(j);
  } else {
    write_text(out_path, dump(j));
  }
}

DatasetIndex load_dataset(const std::string& root) {
  if (!fs::is_directory(fs::path(root) / "labelTxt")) {
    throw MissingResource("dataset root " + root + " has no labelTxt directory");
  }
  return load_dota_dataset(root);
}

OrientedBox parse_box(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ',')) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(field, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != field.size()) throw UsageError("malformed box '" + text + "'");
    v.push_back(x);
  }
  if (v.size() != 5) throw UsageError("box '" + text + "' needs 5 numbers: cx,cy,w,h,angle");
  try {
    return OrientedBox(v[0], v[1], v[2], v[3], v[4]);
  } catch (const std::invalid_argument& e) {
    throw UsageError("box '" + text + "': " + e.what());
  }
}

json box_json(const OrientedBox& b) { return {b.cx(), b.cy(), b.w(), b.h(), b.angle()}; }

json compactness_json(const Compactness& c) {
  return {{"intra", c.intra}, {"inter", c.inter}, {"margin", c.margin},
          {"excluded_labels", c.excluded_labels}};
}

// ---------------------------------------------------------------------------

struct IouArgs {
  std::string a, b, mode = "obb";
};

void cmd_iou(const IouArgs& args, std::ostream& out) {
  const OrientedBox a = parse_box(args.a);
  const OrientedBox b = parse_box(args.b);
  IouMode mode;
  try {
    mode = parse_iou_mode(args.mode);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", box_iou(a, b, mode));
  out << buf << "\n";
}

struct SampleArgs {
  std::string data, split, out;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  bool allow_fewer = false;
};

void cmd_sample_shots(const SampleArgs& args, std::ostream& out) {
  const DatasetIndex index = load_dataset(args.data);
  EpisodeSpec spec;
  spec.k = args.k;
  spec.seed = args.seed;
  spec.allow_fewer = args.allow_fewer;
  if (args.split.empty()) {
    for (std::size_t c = 0; c < index.categories.size(); ++c) spec.categories.insert(static_cast<int>(c));
  } else {
    const SplitSpec split = SplitSpec::from_json(index.categories, read_json(args.split));
    spec.categories.insert(split.base.begin(), split.base.end());
    spec.categories.insert(split.novel.begin(), split.novel.end());
  }
  const auto selected = sample_k_shots(index, spec);
  const json resolved = {{"data", args.data},      {"split", args.split}, {"k", args.k},
                         {"seed", args.seed},      {"allow_fewer", args.allow_fewer},
                         {"out", args.out}};
  emit(with_metadata(episode_manifest(index, spec, selected), resolved), args.out, out);
}

struct MaskArgs {
  std::string manifest, images, out;
  double sigma = 8.0;
  int radius = 0;
};

void cmd_mask(const MaskArgs& args, std::ostream& out) {
  BlurParams params = BlurParams::from_sigma(args.sigma);
  if (args.radius > 0) params.radius = args.radius;
  params.validate();

  const json manifest = read_json(args.manifest);
  if (!manifest.contains("masked") || !manifest.at("masked").is_array()) {
    throw UsageError(args.manifest + ": expected a 'masked' array");
  }
  struct Job {
    std::string image;
    std::vector<OrientedBox> regions;
  };
  std::vector<Job> jobs;
  try {
    for (const auto& entry : manifest.at("masked")) {
      Job job{entry.at("image").get<std::string>(), {}};
      for (const auto& r : entry.at("regions")) {
        const auto v = r.get<std::vector<double>>();
        if (v.size() != 5) throw UsageError("mask region must have 5 numbers");
        job.regions.emplace_back(v[0], v[1], v[2], v[3], v[4]);
      }
      jobs.push_back(std::move(job));
    }
  } catch (const json::exception& e) {
    throw UsageError(args.manifest + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(args.manifest + ": " + e.what());
  }
  for (const auto& job : jobs) {
    const fs::path src = fs::path(args.images) / (job.image + ".png");
    if (!fs::is_regular_file(src)) throw MissingResource("missing image " + src.string());
  }

  fs::create_directories(args.out);
  json written = json::array();
  for (const auto& job : jobs) {
    const ImageRaster raster = read_png(fs::path(args.images) / (job.image + ".png"));
    const fs::path dst = fs::path(args.out) / (job.image + ".png");
    write_png(dst, apply_gaussian_mask(raster, job.regions, params));
    json regions = json::array();
    for (const auto& r : job.regions) regions.push_back(box_json(r));
    written.push_back({{"image", job.image}, {"regions", regions}, {"output", dst.string()}});
  }
  const json resolved = {{"manifest", args.manifest}, {"images", args.images}, {"out", args.out},
                         {"sigma", params.sigma},     {"radius", params.radius}};
  const json summary = with_metadata({{"masked", written}}, resolved);
  write_text(fs::path(args.out) / "mask_manifest.json", dump(summary));
  out << dump(summary);
}

struct EvalArgs {
  std::string detections, data, split, out, mode = "obb";
  double threshold = 0.5;
};

void cmd_eval(const EvalArgs& args, std::ostream& out) {
  IouMode mode;
  try {
    mode = parse_iou_mode(args.mode);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const DatasetIndex index = load_dataset(args.data);
  const std::string text = read_text(args.detections);
  std::optional<SplitSpec> split;
  if (!args.split.empty()) split = SplitSpec::from_json(index.categories, read_json(args.split));
  const auto detections = parse_detections_jsonl(text, index.categories);
  const auto report = map_report(detections, ground_truths_from(index), index.categories, split, mode,
                                 args.threshold);
  const json resolved = {{"detections", args.detections}, {"data", args.data},
                         {"split", args.split},           {"iou_mode", args.mode},
                         {"iou_threshold", args.threshold}, {"out", args.out}};
  if (!args.out.empty()) write_text(args.out, dump(with_metadata(report_to_json(report), resolved)));
  out << report_table(report);
}

struct TrainArgs {
  std::string config, out;
  std::uint64_t seed = 0;
  int iterations = -1;
};

void cmd_train_toy(const TrainArgs& args, std::ostream& out) {
  TrainConfig config;
  try {
    json j = args.config.empty() ? json::object() : read_json(args.config);
    if (!j.is_object()) throw UsageError(args.config + ": expected an object");
    j["data"]["seed"] = args.seed;
    if (args.iterations >= 0) j["iterations"] = args.iterations;
    config = train_config_from_json(j);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const TrainResult result = train(config);
  const fs::path dir(args.out);
  fs::create_directories(dir);
  write_loss_curve(result.history, dir / "loss.csv");
  export_embeddings(result.eval_embeddings, result.eval_set.labels, dir / "embeddings.csv");
  result.bank.save(dir / "bank.json");

  std::vector<double> mcl;
  for (const auto& r : result.history) mcl.push_back(r.mcl);
  const auto window = static_cast<std::size_t>(config.smoothing_window);
  json resolved = to_json(config);
  resolved["config_file"] = args.config;
  resolved["out"] = args.out;
  const json metrics = with_metadata(
      {{"iterations", config.iterations},
       {"initial", compactness_json(result.initial_metrics)},
       {"final", compactness_json(result.final_metrics)},
       {"margin_gain", result.final_metrics.margin - result.initial_metrics.margin},
       {"mcl_loss_head", smoothed_head(mcl, window)},
       {"mcl_loss_tail", smoothed_tail(mcl, window)},
       {"bank_size", result.bank.size()}},
      resolved);
  write_text(dir / "metrics.json", dump(metrics));
  out << dump(metrics);
}

struct GradcheckArgs {
  std::size_t instances = 100;
  std::uint64_t seed = 0;
  bool corrupt = false;
  std::string out;
};

void cmd_gradcheck(const GradcheckArgs& args, std::ostream& out) {
  const GradcheckReport report = run_gradcheck(args.instances, args.seed, args.corrupt);
  const json resolved = {{"instances", args.instances}, {"seed", args.seed}, {"corrupt", args.corrupt},
                         {"step", kGradcheckStep},      {"tolerance", kGradcheckTolerance},
                         {"out", args.out}};
  emit(with_metadata({{"instances", report.instances}, {"max_rel_err", report.max_rel_err},
                      {"pass", report.pass}},
                     resolved),
       args.out, out);
  if (!report.pass) throw CheckFailed("gradient check failed");
}

struct TileArgs {
  int width = 0, height = 0, tile = 1024, stride = 824;
  std::string out;
};

void cmd_tile(const TileArgs& args, std::ostream& out) {
  std::vector<Window> windows;
  std::vector<int> xs, ys;
  try {
    windows = tile_windows(args.width, args.height, args.tile, args.stride);
    xs = tile_origins(args.width, args.tile, args.stride);
    ys = tile_origins(args.height, args.tile, args.stride);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  json list = json::array();
  for (const auto& w : windows) {
    list.push_back({{"x", w.x}, {"y", w.y}, {"width", w.width}, {"height", w.height}});
  }
  const json resolved = {{"width", args.width}, {"height", args.height}, {"tile", args.tile},
                         {"stride", args.stride}, {"out", args.out}};
  emit(with_metadata({{"origins_x", xs}, {"origins_y", ys}, {"windows", list}}, resolved), args.out, out);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot oriented detection toolkit", "fsood"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  IouArgs iou;
  auto* c_iou = app.add_subcommand("iou", "IoU of two boxes given as cx,cy,w,h,angle");
  c_iou->add_option("--a", iou.a, "first box")->required();
  c_iou->add_option("--b", iou.b, "second box")->required();
  c_iou->add_option("--mode", iou.mode, "obb or hbb")->capture_default_str();

  SampleArgs sample;
  auto* c_sample = app.add_subcommand("sample-shots", "Draw a K-shot episode manifest");
  c_sample->add_option("--data", sample.data, "dataset root (labelTxt/, images/)")->required();
  c_sample->add_option("--k", sample.k, "shots per category")->required()->check(CLI::PositiveNumber);
  c_sample->add_option("--seed", sample.seed, "random seed")->required();
  c_sample->add_option("--split", sample.split, "split JSON {base, novel}");
  c_sample->add_flag("--allow-fewer", sample.allow_fewer, "take all instances of short categories");
  c_sample->add_option("--out", sample.out, "output file (default stdout)");

  MaskArgs mask;
  auto* c_mask = app.add_subcommand("mask", "Blur unselected objects listed in an episode manifest");
  c_mask->add_option("--manifest", mask.manifest, "episode manifest JSON")->required();
  c_mask->add_option("--images", mask.images, "directory of <image>.png")->required();
  c_mask->add_option("--out", mask.out, "output directory")->required();
  c_mask->add_option("--sigma", mask.sigma, "Gaussian sigma in pixels")->capture_default_str();
  c_mask->add_option("--radius", mask.radius, "kernel half-width (default 2 * sigma)");

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "AP50 report for a detections file");
  c_eval->add_option("--detections", eval.detections, "detections JSONL")->required();
  c_eval->add_option("--data", eval.data, "dataset root holding labelTxt/")->required();
  c_eval->add_option("--split", eval.split, "split JSON {base, novel}");
  c_eval->add_option("--iou-mode", eval.mode, "obb or hbb")->capture_default_str();
  c_eval->add_option("--iou-threshold", eval.threshold, "match threshold")->capture_default_str();
  c_eval->add_option("--out", eval.out, "report JSON path");

  TrainArgs trainer;
  auto* c_train = app.add_subcommand("train-toy", "Train the projection encoder on synthetic proposals");
  c_train->add_option("--config", trainer.config, "training config JSON");
  c_train->add_option("--seed", trainer.seed, "random seed")->required();
  c_train->add_option("--out", trainer.out, "output directory")->required();
  c_train->add_option("--iterations", trainer.iterations, "override the iteration count");

  GradcheckArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference check of the analytic gradients");
  c_gc->add_option("--instances", gc.instances, "random instances")->capture_default_str();
  c_gc->add_option("--seed", gc.seed, "random seed")->required();
  c_gc->add_flag("--corrupt", gc.corrupt, "perturb the analytic gradients (negative control)");
  c_gc->add_option("--out", gc.out, "output file (default stdout)");

  TileArgs tile;
  auto* c_tile = app.add_subcommand("tile", "Sliding-window layout for a large image");
  c_tile->add_option("--width", tile.width, "image width")->required();
  c_tile->add_option("--height", tile.height, "image height")->required();
  c_tile->add_option("--tile", tile.tile, "window size")->capture_default_str();
  c_tile->add_option("--stride", tile.stride, "window stride")->capture_default_str();
  c_tile->add_option("--out", tile.out, "output file (default stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (c_iou->parsed()) cmd_iou(iou, out);
    if (c_sample->parsed()) cmd_sample_shots(sample, out);
    if (c_mask->parsed()) cmd_mask(mask, out);
    if (c_eval->parsed()) cmd_eval(eval, out);
    if (c_train->parsed()) cmd_train_toy(trainer, out);
    if (c_gc->parsed()) cmd_gradcheck(gc, out);
    if (c_tile->parsed()) cmd_tile(tile, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << app.get_subcommands().front()->help();
    return kUsage;
  } catch (const InsufficientInstancesError& e) {
    err << "error: " << e.what() << "\n";
    return kInfeasible;
  } catch (const MissingResource& e) {
    err << "error: " << e.what() << "\n";
    return kMissingResource;
  } catch (const CheckFailed& e) {
    err << "error: " << e.what() << "\n";
    return kCheckFailed;
  } catch (const AnnotationParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DetectionSchemaError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInternal;
  }
  return kOk;
}

}  // namespace fsood::cli
