#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fsood/geometry.hpp"

namespace fsood {

using InstanceId = std::uint64_t;

struct ImageInfo {
  std::string id;
  int width = 0;   ///< 0 when unknown (labels without the image)
  int height = 0;
  std::filesystem::path path;
};

struct Instance {
  InstanceId id = 0;
  std::string image;
  int category = 0;
  OrientedBox box;
  bool difficult = false;
};

/// One parsed label line before category ids are assigned.
struct Annotation {
  OrientedBox box;
  std::string category;
  bool difficult = false;
  std::size_t line = 0;  ///< 1-based line number in the label file
};

/// Raised when label text has malformed lines. Lists every offending line.
class AnnotationParseError : public std::runtime_error {
 public:
  AnnotationParseError(const std::string& source, std::vector<std::size_t> lines,
                       const std::string& detail);
  const std::vector<std::size_t>& lines() const { return lines_; }

 private:
  std::vector<std::size_t> lines_;
};

/// Immutable after construction; build it with make_index().
struct DatasetIndex {
  std::vector<std::string> categories;
  std::vector<ImageInfo> images;
  std::vector<Instance> instances;

  /// Throws std::out_of_range for an unknown name.
  int category_id(std::string_view name) const;
  const ImageInfo* find_image(std::string_view id) const;
  std::vector<const Instance*> instances_on(std::string_view image) const;

  /// Checks references, id uniqueness and category ranges.
  void validate() const;
};

/// Parses DOTA-style lines "x1 y1 x2 y2 x3 y3 x4 y4 category difficult".
/// Blank lines and DOTA metadata headers ("imagesource:...", "gsd:...") are
/// skipped. Throws AnnotationParseError naming every bad line.
std::vector<Annotation> parse_label_lines(std::string_view text, std::string_view source = "");

/// Single-image index from one label file.
DatasetIndex parse_annotations(std::string_view text, const ImageInfo& image);

/// Assembles an index. Images are ordered by id; categories are the sorted
/// union of `extra_categories` and every name seen; instance ids are assigned
/// sequentially in image order, then label-line order.
DatasetIndex make_index(std::vector<std::pair<ImageInfo, std::vector<Annotation>>> per_image,
                        const std::vector<std::string>& extra_categories = {});

/// Loads <root>/labelTxt/*.txt, pairing each with <root>/images/<id>.png when
/// present (dimensions read from the PNG header).
DatasetIndex load_dota_dataset(const std::filesystem::path& root);

struct SplitSpec {
  std::set<int> base;
  std::set<int> novel;

  /// Resolves category names; throws std::invalid_argument for names absent
  /// from `categories` or for overlapping sets.
  static SplitSpec from_names(const std::vector<std::string>& categories,
                              const std::vector<std::string>& base,
                              const std::vector<std::string>& novel);
  /// Reads {"base": [...], "novel": [...]}.
  static SplitSpec from_json(const std::vector<std::string>& categories,
                             const nlohmann::json& j);
  void validate(std::size_t category_count) const;
};

struct SplitResult {
  DatasetIndex base;
  DatasetIndex novel;
  /// Novel instances that share an image with base instances; they must be
  /// masked when the base index is used.
  std::vector<InstanceId> base_masked;
};

SplitResult split_dataset(const DatasetIndex& index, const SplitSpec& split);

struct EpisodeSpec {
  std::size_t k = 1;
  std::uint64_t seed = 0;
  std::set<int> categories;
  /// Take every instance of a category that has fewer than k.
  bool allow_fewer = false;
};

class InsufficientInstancesError : public std::runtime_error {
 public:
  InsufficientInstancesError(std::string category, std::size_t available, std::size_t k);
  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

/// K instances per requested category, uniform without replacement.
///
/// For each category id c in ascending order, the instances of c are listed
/// in index order and a partial Fisher-Yates shuffle of length k is run with
/// Rng({seed, c}); swap i takes j = i + uniform_index(n - i). Returned ids are
/// sorted ascending.
std::vector<InstanceId> sample_k_shots(const DatasetIndex& index, const EpisodeSpec& spec);

/// Boxes of every instance on `image` not in `selected`, any category.
std::vector<OrientedBox> mask_plan(const DatasetIndex& index, const std::set<InstanceId>& selected,
                                   std::string_view image);

struct Window {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

/// Window origins along one axis: multiples of `stride`, with the last one
/// pulled back to `size - tile` when the grid would overshoot.
std::vector<int> tile_origins(int size, int tile, int stride);

/// Row-major product of the per-axis origins. Windows are clipped to the
/// image, so images smaller than `tile` give a single window.
std::vector<Window> tile_windows(int width, int height, int tile = 1024, int stride = 824);

/// Instances on `image` whose box center lies in the half-open window,
/// translated into window coordinates.
std::vector<Instance> crop_instances(const DatasetIndex& index, std::string_view image,
                                     const Window& window);

/// Fine-tuning episode: selected shots plus the regions to mask on every image
/// that holds at least one shot.
nlohmann::json episode_manifest(const DatasetIndex& index, const EpisodeSpec& spec,
                                const std::vector<InstanceId>& selected);

}  // namespace fsood
