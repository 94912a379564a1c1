#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "support/gradcheck.hpp"
#include "support/synthetic.hpp"
#include "vseg/error.hpp"
#include "vseg/gradcore/rng.hpp"
#include "vseg/preprocess/imageio.hpp"
#include "vseg/preprocess/preprocess.hpp"

using namespace vseg;
using namespace vseg::prep;
using grad::Tensor;
using vseg::testing::random_tensor;

namespace {

RasterImage random_gray(int w, int h, std::uint64_t seed, int lo = 0, int hi = 256) {
  Rng rng(seed);
  RasterImage img(w, h, 1);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(lo + rng.below(static_cast<std::uint64_t>(hi - lo)));
  return img;
}

// Plain global histogram equalization, written out directly.
RasterImage global_he(const RasterImage& img) {
  std::vector<long> hist(256, 0);
  for (auto p : img.pixels) ++hist[p];
  std::vector<long> cdf(256, 0);
  long run = 0;
  for (int v = 0; v < 256; ++v) cdf[v] = run += hist[v];
  long cdf_min = 0;
  for (int v = 0; v < 256; ++v) {
    if (hist[v]) {
      cdf_min = cdf[v];
      break;
    }
  }
  const long total = static_cast<long>(img.pixels.size());
  RasterImage out = img;
  for (auto& p : out.pixels) {
    p = total == cdf_min ? p
                         : static_cast<std::uint8_t>(std::lround(255.0 * (cdf[p] - cdf_min) /
                                                                 static_cast<double>(total - cdf_min)));
  }
  return out;
}

}  // namespace

TEST_SUITE("grayscale") {
  TEST_CASE("luma of primaries and white") {
    RasterImage rgb(3, 1, 3);
    rgb.at(0, 0, 0) = 255;
    rgb.at(1, 0, 0) = rgb.at(1, 0, 1) = rgb.at(1, 0, 2) = 255;
    rgb.at(2, 0, 1) = 255;
    const RasterImage g = to_grayscale(rgb);
    CHECK(g.channels == 1);
    CHECK(g.at(0, 0) == 76);
    CHECK(g.at(1, 0) == 255);
    CHECK(g.at(2, 0) == 150);
  }

  TEST_CASE("gray input is unchanged") {
    const RasterImage g = random_gray(9, 4, 1);
    CHECK(to_grayscale(g).pixels == g.pixels);
  }

  TEST_CASE("unsupported channel count") {
    CHECK_THROWS_AS(to_grayscale(RasterImage(2, 2, 2)), DataError);
  }
}

TEST_SUITE("clahe") {
  TEST_CASE("single tile without clipping is global equalization") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const RasterImage img = random_gray(37, 23, seed, static_cast<int>(seed * 7), 200);
      const RasterImage out =
          clahe(img, {1, 1, std::numeric_limits<double>::infinity()});
      CHECK(out.pixels == global_he(img).pixels);
    }
  }

  TEST_CASE("constant image maps to a constant") {
    const RasterImage img(64, 48, 1, 93);
    const RasterImage out = clahe(img);
    for (auto p : out.pixels) CHECK(p == out.pixels[0]);
  }

  TEST_CASE("clipped histogram conserves mass and mapping is monotone") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      const int n = 1 + static_cast<int>(rng.below(4000));
      std::vector<std::uint8_t> px(n);
      // Skewed values so clipping actually engages.
      for (auto& p : px) p = static_cast<std::uint8_t>(rng.below(2) ? rng.below(8) : rng.below(256));
      const double clip = rng.uniform(0.5, 4.0);
      const Histogram h = clipped_histogram(px, clip);
      std::uint64_t total = 0;
      for (auto b : h) total += b;
      CHECK(total == static_cast<std::uint64_t>(n));
      const auto lut = equalization_lut(h);
      for (int v = 1; v < 256; ++v) CHECK(lut[v] >= lut[v - 1]);
    }
  }

  TEST_CASE("monotone in the input on a uniform tile grid") {
    // A horizontal ramp stays non-decreasing along each row.
    RasterImage img(64, 64, 1);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) img.at(x, y) = static_cast<std::uint8_t>(x * 4);
    const RasterImage out = clahe(img, {4, 4, 2.0});
    for (int y = 0; y < 64; ++y)
      for (int x = 1; x < 64; ++x) CHECK(out.at(x, y) >= out.at(x - 1, y));
  }

  TEST_CASE("tile grid finer than the image is rejected") {
    CHECK_THROWS_AS(clahe(RasterImage(4, 4, 1), {8, 8, 2.0}), ConfigError);
    CHECK_THROWS_AS(clahe(RasterImage(4, 4, 1), {0, 1, 2.0}), ConfigError);
  }
}

TEST_SUITE("prepare") {
  TEST_CASE("extremes and range") {
    PrepareConfig cfg;
    cfg.height = 32;
    cfg.width = 48;
    const Tensor zeros = prepare(RasterImage(70, 50, 3, 0), cfg);
    CHECK(zeros.shape() == grad::Shape{1, 1, 32, 48});
    for (float v : zeros.values()) CHECK(v == 0.0f);
    const Tensor ones = prepare(RasterImage(70, 50, 3, 255), cfg);
    for (float v : ones.values()) CHECK(v == 1.0f);
    const auto f = vseg::testing::make_fundus(120, 100, 4);
    const Tensor t = prepare(f.rgb, cfg);
    for (float v : t.values()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }

  TEST_CASE("default output is 512 square") {
    CHECK(prepare(random_gray(100, 90, 3)).shape() == grad::Shape{1, 1, 512, 512});
  }

  TEST_CASE("mask resize keeps binary values") {
    const BinaryMask m = vseg::testing::random_mask(30, 20, 0.3, 9);
    const Tensor t = prepare_mask(m, 64, 64);
    for (float v : t.values()) CHECK((v == 0.0f || v == 1.0f));
    const Tensor same = prepare_mask(m, 20, 30);
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 30; ++x) CHECK(same(0, 0, y, x) == (m(x, y) ? 1.0f : 0.0f));
  }
}

TEST_SUITE("augmentation") {
  TEST_CASE("compositions") {
    const Tensor img = random_tensor({1, 1, 7, 5}, 17);
    CHECK(bitwise_equal(apply(AugmentationOp::flip_h, apply(AugmentationOp::flip_h, img)), img));
    CHECK(bitwise_equal(apply(AugmentationOp::flip_v, apply(AugmentationOp::flip_v, img)), img));
    Tensor r = img;
    for (int i = 0; i < 4; ++i) r = apply(AugmentationOp::rotate90, r);
    CHECK(bitwise_equal(r, img));
    CHECK(bitwise_equal(apply(AugmentationOp::flip_h, apply(AugmentationOp::rotate90, img)),
                        apply(AugmentationOp::transpose, img)));
    CHECK(bitwise_equal(apply(AugmentationOp::rotate90, apply(AugmentationOp::rotate90, img)),
                        apply(AugmentationOp::rotate180, img)));
    CHECK(bitwise_equal(apply(AugmentationOp::rotate90, apply(AugmentationOp::rotate180, img)),
                        apply(AugmentationOp::rotate270, img)));
    CHECK(bitwise_equal(apply(AugmentationOp::identity, img), img));
  }

  TEST_CASE("transpose swaps coordinates and rotate90 turns clockwise") {
    const Tensor img = random_tensor({1, 1, 4, 6}, 18);
    const Tensor t = apply(AugmentationOp::transpose, img);
    CHECK(t.shape() == grad::Shape{1, 1, 6, 4});
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 6; ++x) CHECK(t(0, 0, x, y) == img(0, 0, y, x));
    // Top-left corner moves to the top-right.
    const Tensor r = apply(AugmentationOp::rotate90, img);
    CHECK(r(0, 0, 0, 3) == img(0, 0, 0, 0));
  }

  TEST_CASE("image and mask get the same permutation") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const BinaryMask m = vseg::testing::random_mask(9, 6, 0.4, seed);
      Tensor img = prep::prepare_mask(m, 6, 9);
      for (auto op : kAllAugmentations) {
        const auto [ti, tm] = augment(img, m, op);
        CHECK(tm.count() == m.count());
        CHECK(ti.shape().h == tm.height());
        CHECK(ti.shape().w == tm.width());
        for (int y = 0; y < tm.height(); ++y)
          for (int x = 0; x < tm.width(); ++x) CHECK(ti(0, 0, y, x) == (tm(x, y) ? 1.0f : 0.0f));
      }
    }
  }

  TEST_CASE("dimension mismatch") {
    CHECK_THROWS_AS(augment(Tensor({1, 1, 4, 4}), BinaryMask(4, 5), AugmentationOp::flip_h), ShapeError);
  }
}

TEST_SUITE("imageio") {
  TEST_CASE("png and netpbm round trips") {
    const auto dir = vseg::testing::scratch_dir("imageio");
    const auto f = vseg::testing::make_fundus(40, 30, 5);
    io::write_png(dir / "a.png", f.rgb);
    const RasterImage a = io::read_image(dir / "a.png");
    CHECK(a.channels == 3);
    CHECK(a.pixels == f.rgb.pixels);
    io::write_pnm(dir / "a.ppm", f.rgb);
    CHECK(io::read_image(dir / "a.ppm").pixels == f.rgb.pixels);
    const RasterImage g = random_gray(13, 11, 2);
    io::write_pnm(dir / "g.pgm", g);
    const RasterImage gb = io::read_image(dir / "g.pgm");
    CHECK(gb.channels == 1);
    CHECK(gb.pixels == g.pixels);
    const auto size = io::probe_size(dir / "a.png");
    CHECK(size.width == 40);
    CHECK(size.height == 30);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("16-bit png keeps the high byte") {
    const auto dir = vseg::testing::scratch_dir("png16");
    io::write_png16(dir / "w.png", 3, 1, {0x0102, 0xff00, 0x7fff});
    const RasterImage r = io::read_image(dir / "w.png");
    CHECK(r.pixels == std::vector<std::uint8_t>{0x01, 0xff, 0x7f});
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("unreadable files raise DataError") {
    const auto dir = vseg::testing::scratch_dir("badio");
    CHECK_THROWS_AS(io::read_image(dir / "missing.png"), DataError);
    std::ofstream(dir / "junk.png") << "not an image";
    CHECK_THROWS_AS(io::read_image(dir / "junk.png"), DataError);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("mask conversion") {
    RasterImage img(3, 1, 1);
    img.pixels = {0, 255, 0};
    const BinaryMask m = io::to_mask(img);
    CHECK(m.count() == 1);
    CHECK(m(1, 0));
    img.pixels = {0, 1, 2};
    CHECK_THROWS_AS(io::to_mask(img), DataError);
    CHECK(io::threshold_mask(img, 2).count() == 1);
    CHECK(io::from_mask(m).pixels == std::vector<std::uint8_t>{0, 255, 0});
  }
}
