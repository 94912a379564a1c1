#include "vseg/metrics/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <ostream>
#include <string_view>

#include "vseg/error.hpp"

namespace vseg::metrics {

namespace {

void check_size(int w, int h, int ow, int oh, const char* what) {
  if (w != ow) throw ShapeError("width", std::string("metrics: ") + what + " width differs");
  if (h != oh) throw ShapeError("height", std::string("metrics: ") + what + " height differs");
}

double ratio(std::uint64_t num, std::uint64_t den, bool& undefined) {
  undefined = den == 0;
  return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string_view format(char* buf, std::size_t size, double v) {
  const auto res = std::to_chars(buf, buf + size, v);
  return {buf, static_cast<std::size_t>(res.ptr - buf)};
}

}  // namespace

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt, const BinaryMask* fov) {
  check_size(pred.width(), pred.height(), gt.width(), gt.height(), "ground truth");
  if (fov) check_size(pred.width(), pred.height(), fov->width(), fov->height(), "FOV mask");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (fov && !fov->at_index(i)) continue;
    const bool p = pred.at_index(i);
    const bool g = gt.at_index(i);
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

MetricsReport report(const ConfusionCounts& c) {
  if (c.total() == 0) throw DataError("metrics: no pixels were evaluated");
  MetricsReport r;
  r.se = ratio(c.tp, c.tp + c.fn, r.se_undefined);
  r.sp = ratio(c.tn, c.tn + c.fp, r.sp_undefined);
  r.acc = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  r.precision = ratio(c.tp, c.tp + c.fp, r.precision_undefined);
  r.recall = r.se;
  r.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, r.f1_undefined);
  return r;
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 1; i <= 99; ++i) t.push_back(i / 100.0);
  return t;
}

std::vector<ConfusionCounts> threshold_counts(const RealRaster& prob, const BinaryMask& gt,
                                              const BinaryMask* fov,
                                              const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw ConfigError("pr_curve: threshold list is empty");
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > thresholds[i - 1])) {
      throw ConfigError("pr_curve: thresholds must be strictly increasing");
    }
  }
  check_size(prob.width, prob.height, gt.width(), gt.height(), "ground truth");
  if (fov) check_size(prob.width, prob.height, fov->width(), fov->height(), "FOV mask");

  // Bucket b holds pixels that are positive at exactly the first b thresholds.
  std::vector<std::uint64_t> vessel(thresholds.size() + 1, 0);
  std::vector<std::uint64_t> background(thresholds.size() + 1, 0);
  for (std::size_t i = 0; i < prob.values.size(); ++i) {
    if (fov && !fov->at_index(i)) continue;
    const auto b = static_cast<std::size_t>(
        std::upper_bound(thresholds.begin(), thresholds.end(), prob.values[i]) - thresholds.begin());
    ++(gt.at_index(i) ? vessel : background)[b];
  }
  std::vector<ConfusionCounts> out(thresholds.size());
  std::uint64_t tp = 0, fp = 0;
  std::uint64_t all_vessel = 0, all_background = 0;
  for (std::size_t b = 0; b <= thresholds.size(); ++b) {
    all_vessel += vessel[b];
    all_background += background[b];
  }
  for (std::size_t k = thresholds.size(); k-- > 0;) {
    tp += vessel[k + 1];
    fp += background[k + 1];
    out[k] = {tp, all_background - fp, fp, all_vessel - tp};
  }
  return out;
}

std::vector<PrPoint> pr_points(const std::vector<ConfusionCounts>& counts,
                               const std::vector<double>& thresholds) {
  if (counts.size() != thresholds.size()) {
    throw ShapeError("thresholds", "pr_points: one count set per threshold is required");
  }
  std::vector<PrPoint> out;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const ConfusionCounts& c = counts[k];
    PrPoint p;
    p.threshold = thresholds[k];
    bool unused = false;
    p.precision = ratio(c.tp, c.tp + c.fp, p.precision_undefined);
    p.recall = ratio(c.tp, c.tp + c.fn, unused);
    out.push_back(p);
  }
  return out;
}

std::vector<PrPoint> pr_curve(const RealRaster& prob, const BinaryMask& gt, const BinaryMask* fov,
                              const std::vector<double>& thresholds) {
  return pr_points(threshold_counts(prob, gt, fov, thresholds), thresholds);
}

void write_pr_csv(std::ostream& out, const std::vector<PrPoint>& points) {
  out << "threshold,precision,recall\n";
  char a[64], b[64], c[64];
  for (const PrPoint& p : points) {
    out << format(a, sizeof a, p.threshold) << ',' << format(b, sizeof b, p.precision) << ','
        << format(c, sizeof c, p.recall) << '\n';
  }
}

BoxplotStats boxplot_stats(std::vector<double> values) {
  if (values.empty()) throw DataError("boxplot_stats: empty value list");
  std::sort(values.begin(), values.end());
  const auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  BoxplotStats s;
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile(0.25);
  s.median = quantile(0.5);
  s.q3 = quantile(0.75);
  const double iqr = s.q3 - s.q1;
  const double lo_fence = s.q1 - 1.5 * iqr;
  const double hi_fence = s.q3 + 1.5 * iqr;
  s.lower_whisker = s.max;
  s.upper_whisker = s.min;
  for (double v : values) {
    if (v < lo_fence || v > hi_fence) {
      s.outliers.push_back(v);
    } else {
      s.lower_whisker = std::min(s.lower_whisker, v);
      s.upper_whisker = std::max(s.upper_whisker, v);
    }
  }
  return s;
}

}  // namespace vseg::metrics
