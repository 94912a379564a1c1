#include "vseg/dataio/dataset.hpp"

#include <algorithm>
#include <regex>

#include "vseg/preprocess/imageio.hpp"

namespace vseg::data {

namespace fs = std::filesystem;

namespace {

constexpr const char* kExtensions[] = {".png", ".ppm", ".pgm", ".pnm"};

std::string join_paths(const std::string& context, const std::vector<fs::path>& missing) {
  std::string msg = context + ": " + std::to_string(missing.size()) + " missing file(s):";
  for (const fs::path& p : missing) msg += "\n  " + p.string();
  return msg;
}

// First existing file for `stem` in `dir`; the .png name otherwise.
std::optional<fs::path> find_raster(const fs::path& dir, const std::string& stem) {
  for (const char* ext : kExtensions) {
    fs::path p = dir / (stem + ext);
    std::error_code ec;
    if (fs::is_regular_file(p, ec)) return p;
  }
  return std::nullopt;
}

std::string two_digits(int n) {
  return (n < 10 ? "0" : "") + std::to_string(n);
}

DatasetIndex load_drive(const fs::path& root, Split split) {
  DatasetIndex index{DatasetKind::drive, split, {}};
  const bool train = split == Split::train;
  const fs::path dir = root / (train ? "training" : "test");
  const std::string tag = train ? "training" : "test";
  const int first = train ? 21 : 1;

  std::vector<fs::path> missing;
  const auto need = [&](const fs::path& sub, const std::string& stem) {
    auto p = find_raster(dir / sub, stem);
    if (!p) missing.push_back(dir / sub / (stem + ".png"));
    return p.value_or(fs::path{});
  };
  for (int n = first; n < first + 20; ++n) {
    const std::string id = two_digits(n);
    DatasetEntry e;
    e.id = id;
    e.image = need("images", id + "_" + tag);
    e.ground_truth = need("1st_manual", id + "_manual1");
    e.fov = need("mask", id + "_" + tag + "_mask");
    index.entries.push_back(std::move(e));
  }
  if (!missing.empty()) throw MissingFilesError("DRIVE " + std::string(to_string(split)) + " split", missing);
  return index;
}

DatasetIndex load_chase(const fs::path& root, Split split) {
  DatasetIndex index{DatasetKind::chase, split, {}};
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw MissingFilesError("CHASE-DB1", {root});
  }
  static const std::regex image_name(R"(Image_\d\d[LR])");
  std::vector<std::string> stems;
  for (const auto& item : fs::directory_iterator(root)) {
    if (!item.is_regular_file()) continue;
    const fs::path& p = item.path();
    const std::string ext = p.extension().string();
    if (std::find(std::begin(kExtensions), std::end(kExtensions), ext) == std::end(kExtensions)) {
      continue;
    }
    const std::string stem = p.stem().string();
    if (std::regex_match(stem, image_name) &&
        std::find(stems.begin(), stems.end(), stem) == stems.end()) {
      stems.push_back(stem);
    }
  }
  std::sort(stems.begin(), stems.end());
  if (stems.empty()) {
    throw MissingFilesError("CHASE-DB1 (expected 28 files named like Image_01L.png)",
                            {root / "Image_01L.png"});
  }
  if (stems.size() != 28) {
    throw DataError("CHASE-DB1: expected 28 images in " + root.string() + ", found " +
                    std::to_string(stems.size()));
  }

  std::vector<fs::path> missing;
  const std::size_t begin = split == Split::train ? 0 : 20;
  const std::size_t end = split == Split::train ? 20 : 28;
  for (std::size_t i = begin; i < end; ++i) {
    DatasetEntry e;
    e.id = stems[i];
    e.image = *find_raster(root, stems[i]);
    auto gt = find_raster(root, stems[i] + "_1stHO");
    if (!gt) missing.push_back(root / (stems[i] + "_1stHO.png"));
    e.ground_truth = gt.value_or(fs::path{});
    index.entries.push_back(std::move(e));
  }
  if (!missing.empty()) throw MissingFilesError("CHASE-DB1 ground truth", missing);
  return index;
}

}  // namespace

MissingFilesError::MissingFilesError(const std::string& context, std::vector<fs::path> missing)
    : DataError(join_paths(context, missing)), missing_(std::move(missing)) {}

DatasetKind parse_kind(std::string_view name) {
  if (name == "drive") return DatasetKind::drive;
  if (name == "chase") return DatasetKind::chase;
  throw ConfigError("unknown dataset '" + std::string(name) + "' (expected drive or chase)");
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(name) + "' (expected train or test)");
}

std::string_view to_string(DatasetKind kind) { return kind == DatasetKind::drive ? "drive" : "chase"; }
std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

DatasetIndex load_dataset(const fs::path& root, DatasetKind kind, Split split) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw MissingFilesError("dataset root", {root});
  }
  return kind == DatasetKind::drive ? load_drive(root, split) : load_chase(root, split);
}

LoadedSample load_sample(const DatasetEntry& entry) {
  LoadedSample s;
  s.image = io::read_image(entry.image);
  try {
    s.ground_truth = io::to_mask(io::read_image(entry.ground_truth));
  } catch (const DataError& e) {
    throw DataError(entry.ground_truth.string() + ": " + e.what());
  }
  if (s.ground_truth.width() != s.image.width || s.ground_truth.height() != s.image.height) {
    throw DataError(entry.ground_truth.string() + ": size differs from " + entry.image.string());
  }
  if (entry.fov) {
    s.fov = io::threshold_mask(io::read_image(*entry.fov));
    if (s.fov->width() != s.image.width || s.fov->height() != s.image.height) {
      throw DataError(entry.fov->string() + ": size differs from " + entry.image.string());
    }
  }
  return s;
}

}  // namespace vseg::data
