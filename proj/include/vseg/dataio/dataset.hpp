#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vseg/error.hpp"
#include "vseg/raster.hpp"

namespace vseg::data {

enum class DatasetKind { drive, chase };
enum class Split { train, test };

DatasetKind parse_kind(std::string_view name);  // "drive" | "chase", ConfigError otherwise
Split parse_split(std::string_view name);       // "train" | "test"
std::string_view to_string(DatasetKind kind);
std::string_view to_string(Split split);

struct DatasetEntry {
  std::string id;  // e.g. "21" or "Image_01L"
  std::filesystem::path image;
  std::filesystem::path ground_truth;
  std::optional<std::filesystem::path> fov;
};

struct DatasetIndex {
  DatasetKind kind = DatasetKind::drive;
  Split split = Split::train;
  std::vector<DatasetEntry> entries;
};

/// Missing dataset files; missing() lists every absent path.
class MissingFilesError : public DataError {
 public:
  MissingFilesError(const std::string& context, std::vector<std::filesystem::path> missing);
  const std::vector<std::filesystem::path>& missing() const noexcept { return missing_; }

 private:
  std::vector<std::filesystem::path> missing_;
};

/// Files may be PNG or netpbm; for each expected stem the first existing
/// extension among .png, .ppm, .pgm, .pnm is used.
///
/// DRIVE (root/training and root/test):
///   images/NN_training.png   1st_manual/NN_manual1.png   mask/NN_training_mask.png
///   images/NN_test.png       1st_manual/NN_manual1.png   mask/NN_test_mask.png
/// with NN = 21..40 for training and 01..20 for test.
///
/// CHASE-DB1 (flat root): Image_NNX.png with first-observer labels
/// Image_NNX_1stHO.png. The 28 images sorted by file name split into the
/// first 20 (train) and last 8 (test). No FOV masks.
DatasetIndex load_dataset(const std::filesystem::path& root, DatasetKind kind, Split split);

struct LoadedSample {
  RasterImage image;
  BinaryMask ground_truth;
  std::optional<BinaryMask> fov;
};

/// Decodes one entry; ground truth must be binary, the FOV mask is thresholded.
/// All rasters must share the image's size.
LoadedSample load_sample(const DatasetEntry& entry);

}  // namespace vseg::data
