#include "fsood/fewshot.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "fsood/raster.hpp"
#include "fsood/rng.hpp"

namespace fsood {

namespace {

std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

bool parse_double(std::string_view token, double& out) {
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

std::string join_lines(const std::vector<std::size_t>& lines) {
  std::string s;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i > 0) s += ", ";
    s += std::to_string(lines[i]);
  }
  return s;
}

nlohmann::json box_json(const OrientedBox& b) {
  return nlohmann::json::array({b.cx(), b.cy(), b.w(), b.h(), b.angle()});
}

}  // namespace

AnnotationParseError::AnnotationParseError(const std::string& source, std::vector<std::size_t> lines,
                                           const std::string& detail)
    : std::runtime_error((source.empty() ? std::string("labels") : source) +
                         ": malformed line(s) " + join_lines(lines) + ": " + detail),
      lines_(std::move(lines)) {}

InsufficientInstancesError::InsufficientInstancesError(std::string category, std::size_t available,
                                                       std::size_t k)
    : std::runtime_error("category '" + category + "' has " + std::to_string(available) +
                         " instance(s), fewer than k=" + std::to_string(k)),
      category_(std::move(category)) {}

int DatasetIndex::category_id(std::string_view name) const {
  const auto it = std::find(categories.begin(), categories.end(), name);
  if (it == categories.end()) throw std::out_of_range("unknown category '" + std::string(name) + "'");
  return static_cast<int>(it - categories.begin());
}

const ImageInfo* DatasetIndex::find_image(std::string_view id) const {
  for (const auto& img : images) {
    if (img.id == id) return &img;
  }
  return nullptr;
}

std::vector<const Instance*> DatasetIndex::instances_on(std::string_view image) const {
  std::vector<const Instance*> out;
  for (const auto& inst : instances) {
    if (inst.image == image) out.push_back(&inst);
  }
  return out;
}

void DatasetIndex::validate() const {
  std::set<std::string> image_ids;
  for (const auto& img : images) {
    if (!image_ids.insert(img.id).second) throw std::invalid_argument("duplicate image id '" + img.id + "'");
  }
  std::set<InstanceId> ids;
  for (const auto& inst : instances) {
    if (!ids.insert(inst.id).second) {
      throw std::invalid_argument("duplicate instance id " + std::to_string(inst.id));
    }
    if (!image_ids.contains(inst.image)) {
      throw std::invalid_argument("instance " + std::to_string(inst.id) + " references unknown image '" +
                                  inst.image + "'");
    }
    if (inst.category < 0 || static_cast<std::size_t>(inst.category) >= categories.size()) {
      throw std::invalid_argument("instance " + std::to_string(inst.id) + " has unknown category");
    }
  }
}

std::vector<Annotation> parse_label_lines(std::string_view text, std::string_view source) {
  std::vector<Annotation> out;
  std::vector<std::size_t> bad;
  std::string first_problem;
  auto fail = [&](std::size_t line, std::string why) {
    if (bad.empty()) first_problem = "line " + std::to_string(line) + ": " + why;
    bad.push_back(line);
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    const auto tokens = split_whitespace(line);
    if (tokens.empty()) continue;
    if (tokens.size() == 1 && tokens[0].find(':') != std::string_view::npos) continue;
    if (tokens.size() != 10) {
      fail(line_no, "expected 10 fields, found " + std::to_string(tokens.size()));
      continue;
    }
    std::array<Point, 4> quad;
    bool numeric = true;
    for (std::size_t i = 0; i < 4 && numeric; ++i) {
      numeric = parse_double(tokens[2 * i], quad[i].x) && parse_double(tokens[2 * i + 1], quad[i].y);
    }
    if (!numeric) {
      fail(line_no, "non-numeric coordinate");
      continue;
    }
    if (tokens[9] != "0" && tokens[9] != "1") {
      fail(line_no, "difficult flag must be 0 or 1");
      continue;
    }
    try {
      out.push_back({quad_to_obb(quad), std::string(tokens[8]), tokens[9] == "1", line_no});
    } catch (const std::invalid_argument&) {
      fail(line_no, "degenerate quadrilateral");
    }
  }
  if (!bad.empty()) throw AnnotationParseError(std::string(source), std::move(bad), first_problem);
  return out;
}

DatasetIndex parse_annotations(std::string_view text, const ImageInfo& image) {
  std::vector<std::pair<ImageInfo, std::vector<Annotation>>> one;
  one.emplace_back(image, parse_label_lines(text, image.id));
  return make_index(std::move(one));
}

DatasetIndex make_index(std::vector<std::pair<ImageInfo, std::vector<Annotation>>> per_image,
                        const std::vector<std::string>& extra_categories) {
  std::sort(per_image.begin(), per_image.end(),
            [](const auto& a, const auto& b) { return a.first.id < b.first.id; });
  std::set<std::string> names(extra_categories.begin(), extra_categories.end());
  for (const auto& [img, anns] : per_image) {
    for (const auto& a : anns) names.insert(a.category);
  }

  DatasetIndex index;
  index.categories.assign(names.begin(), names.end());
  std::map<std::string, int> ids;
  for (std::size_t i = 0; i < index.categories.size(); ++i) ids[index.categories[i]] = static_cast<int>(i);

  InstanceId next = 0;
  for (auto& [img, anns] : per_image) {
    for (const auto& a : anns) {
      index.instances.push_back({next++, img.id, ids.at(a.category), a.box, a.difficult});
    }
    index.images.push_back(std::move(img));
  }
  index.validate();
  return index;
}

DatasetIndex load_dota_dataset(const std::filesystem::path& root) {
  const auto label_dir = root / "labelTxt";
  if (!std::filesystem::is_directory(label_dir)) {
    throw std::runtime_error("missing label directory " + label_dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(label_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<std::pair<ImageInfo, std::vector<Annotation>>> per_image;
  for (const auto& file : files) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + file.string());
    std::stringstream buf;
    buf << in.rdbuf();

    ImageInfo info;
    info.id = file.stem().string();
    const auto png = root / "images" / (info.id + ".png");
    if (std::filesystem::exists(png)) {
      info.path = png;
      std::tie(info.width, info.height) = read_png_size(png);
    }
    per_image.emplace_back(std::move(info), parse_label_lines(buf.str(), file.string()));
  }
  return make_index(std::move(per_image));
}

SplitSpec SplitSpec::from_names(const std::vector<std::string>& categories,
                                const std::vector<std::string>& base,
                                const std::vector<std::string>& novel) {
  auto resolve = [&](const std::vector<std::string>& names, std::set<int>& out) {
    for (const auto& n : names) {
      const auto it = std::find(categories.begin(), categories.end(), n);
      if (it == categories.end()) {
        throw std::invalid_argument("split category '" + n + "' is absent from the dataset");
      }
      out.insert(static_cast<int>(it - categories.begin()));
    }
  };
  SplitSpec spec;
  resolve(base, spec.base);
  resolve(novel, spec.novel);
  spec.validate(categories.size());
  return spec;
}

SplitSpec SplitSpec::from_json(const std::vector<std::string>& categories, const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("split: expected an object with 'base' and 'novel'");
  for (const auto& [key, value] : j.items()) {
    if (key != "base" && key != "novel") throw std::invalid_argument("split: unknown key '" + key + "'");
  }
  try {
    return from_names(categories, j.value("base", std::vector<std::string>{}),
                      j.value("novel", std::vector<std::string>{}));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("split: ") + e.what());
  }
}

void SplitSpec::validate(std::size_t category_count) const {
  for (int c : base) {
    if (novel.contains(c)) throw std::invalid_argument("split: category in both base and novel sets");
  }
  for (const auto* set : {&base, &novel}) {
    for (int c : *set) {
      if (c < 0 || static_cast<std::size_t>(c) >= category_count) {
        throw std::invalid_argument("split: category id " + std::to_string(c) + " is absent from the dataset");
      }
    }
  }
}

SplitResult split_dataset(const DatasetIndex& index, const SplitSpec& split) {
  split.validate(index.categories.size());
  SplitResult out;
  out.base.categories = index.categories;
  out.novel.categories = index.categories;

  std::set<std::string> base_images, novel_images;
  for (const auto& inst : index.instances) {
    if (split.base.contains(inst.category)) base_images.insert(inst.image);
    if (split.novel.contains(inst.category)) novel_images.insert(inst.image);
  }
  for (const auto& img : index.images) {
    if (base_images.contains(img.id)) out.base.images.push_back(img);
    if (novel_images.contains(img.id)) out.novel.images.push_back(img);
  }
  for (const auto& inst : index.instances) {
    if (split.base.contains(inst.category)) {
      out.base.instances.push_back(inst);
    } else if (split.novel.contains(inst.category)) {
      out.novel.instances.push_back(inst);
      if (base_images.contains(inst.image)) out.base_masked.push_back(inst.id);
    }
  }
  return out;
}

std::vector<InstanceId> sample_k_shots(const DatasetIndex& index, const EpisodeSpec& spec) {
  if (spec.k == 0) throw std::invalid_argument("sample_k_shots: k must be >= 1");
  std::vector<InstanceId> selected;
  for (int category : spec.categories) {
    if (category < 0 || static_cast<std::size_t>(category) >= index.categories.size()) {
      throw std::invalid_argument("sample_k_shots: unknown category id " + std::to_string(category));
    }
    std::vector<InstanceId> pool;
    for (const auto& inst : index.instances) {
      if (inst.category == category) pool.push_back(inst.id);
    }
    std::size_t take = spec.k;
    if (pool.size() < spec.k) {
      if (!spec.allow_fewer) {
        throw InsufficientInstancesError(index.categories[static_cast<std::size_t>(category)],
                                         pool.size(), spec.k);
      }
      take = pool.size();
    }
    Rng rng({spec.seed, static_cast<std::uint64_t>(category)});
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    selected.insert(selected.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

std::vector<OrientedBox> mask_plan(const DatasetIndex& index, const std::set<InstanceId>& selected,
                                   std::string_view image) {
  std::vector<OrientedBox> out;
  for (const auto& inst : index.instances) {
    if (inst.image == image && !selected.contains(inst.id)) out.push_back(inst.box);
  }
  return out;
}

std::vector<int> tile_origins(int size, int tile, int stride) {
  if (size <= 0 || tile <= 0 || stride <= 0) {
    throw std::invalid_argument("tile_origins: size, tile and stride must be positive");
  }
  std::vector<int> out;
  int x = 0;
  for (;;) {
    out.push_back(x);
    if (x + tile >= size) break;
    x += stride;
    if (x + tile > size) x = size - tile;
  }
  return out;
}

std::vector<Window> tile_windows(int width, int height, int tile, int stride) {
  const auto xs = tile_origins(width, tile, stride);
  const auto ys = tile_origins(height, tile, stride);
  std::vector<Window> out;
  out.reserve(xs.size() * ys.size());
  for (int y : ys) {
    for (int x : xs) {
      out.push_back({x, y, std::min(tile, width - x), std::min(tile, height - y)});
    }
  }
  return out;
}

std::vector<Instance> crop_instances(const DatasetIndex& index, std::string_view image,
                                     const Window& window) {
  std::vector<Instance> out;
  for (const auto& inst : index.instances) {
    if (inst.image != image) continue;
    const double cx = inst.box.cx();
    const double cy = inst.box.cy();
    if (cx >= window.x && cx < window.x + window.width && cy >= window.y &&
        cy < window.y + window.height) {
      Instance moved = inst;
      moved.box = inst.box.translated(-window.x, -window.y);
      out.push_back(std::move(moved));
    }
  }
  return out;
}

nlohmann::json episode_manifest(const DatasetIndex& index, const EpisodeSpec& spec,
                                const std::vector<InstanceId>& selected) {
  const std::set<InstanceId> chosen(selected.begin(), selected.end());
  std::set<std::string> shot_images;
  nlohmann::json shots = nlohmann::json::array();
  for (const auto& inst : index.instances) {
    if (!chosen.contains(inst.id)) continue;
    shot_images.insert(inst.image);
    shots.push_back({{"id", inst.id},
                     {"image", inst.image},
                     {"category", index.categories[static_cast<std::size_t>(inst.category)]},
                     {"box", box_json(inst.box)},
                     {"difficult", inst.difficult}});
  }

  nlohmann::json masked = nlohmann::json::array();
  for (const auto& img : index.images) {
    if (!shot_images.contains(img.id)) continue;
    nlohmann::json regions = nlohmann::json::array();
    for (const auto& box : mask_plan(index, chosen, img.id)) regions.push_back(box_json(box));
    masked.push_back({{"image", img.id}, {"regions", std::move(regions)}});
  }

  nlohmann::json categories = nlohmann::json::array();
  for (int c : spec.categories) categories.push_back(index.categories[static_cast<std::size_t>(c)]);

  return {{"seed", spec.seed},
          {"k", spec.k},
          {"categories", std::move(categories)},
          {"selected", selected},
          {"shots", std::move(shots)},
          {"masked", std::move(masked)}};
}

}  // namespace fsood
