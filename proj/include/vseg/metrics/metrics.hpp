#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "vseg/raster.hpp"

namespace vseg::metrics {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + tn + fp + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Pixel counts, restricted to `fov` when given. Throws ShapeError on size
/// mismatch.
ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt,
                          const BinaryMask* fov = nullptr);

struct MetricsReport {
  double se = 0.0;
  double sp = 0.0;
  double acc = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when the matching ratio had a zero denominator and was reported as 0.
  bool se_undefined = false;
  bool sp_undefined = false;
  bool precision_undefined = false;
  bool f1_undefined = false;
};

/// F1 is evaluated as 2 tp / (2 tp + fp + fn), algebraically equal to the
/// harmonic mean of precision and recall. Throws DataError for all-zero counts.
MetricsReport report(const ConfusionCounts& counts);

/// 0.01, 0.02, ..., 0.99.
std::vector<double> default_thresholds();

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  bool precision_undefined = false;  // no positive predictions at this threshold
};

/// Confusion counts at each threshold (pixel positive when prob >= threshold).
/// Thresholds must be non-empty and strictly increasing.
std::vector<ConfusionCounts> threshold_counts(const RealRaster& prob, const BinaryMask& gt,
                                              const BinaryMask* fov,
                                              const std::vector<double>& thresholds);

std::vector<PrPoint> pr_curve(const RealRaster& prob, const BinaryMask& gt, const BinaryMask* fov,
                              const std::vector<double>& thresholds);

/// Points from pooled counts (one ConfusionCounts per threshold).
std::vector<PrPoint> pr_points(const std::vector<ConfusionCounts>& counts,
                               const std::vector<double>& thresholds);

/// Header "threshold,precision,recall".
void write_pr_csv(std::ostream& out, const std::vector<PrPoint>& points);

struct BoxplotStats {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  double lower_whisker = 0.0;  // smallest value >= q1 - 1.5 IQR
  double upper_whisker = 0.0;  // largest value <= q3 + 1.5 IQR
  std::vector<double> outliers;
};

/// Quartiles by linear interpolation between order statistics at position
/// p * (n - 1). Throws DataError for an empty list.
BoxplotStats boxplot_stats(std::vector<double> values);

}  // namespace vseg::metrics
