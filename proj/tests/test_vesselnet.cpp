#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>

#include "support/gradcheck.hpp"
#include "support/param_check.hpp"
#include "support/synthetic.hpp"
#include "vseg/error.hpp"
#include "vseg/gradcore/rng.hpp"
#include "vseg/preprocess/preprocess.hpp"
#include "vseg/vesselnet/loss.hpp"
#include "vseg/vesselnet/network.hpp"
#include "vseg/vesselnet/train.hpp"

using namespace vseg;
using namespace vseg::net;
using grad::Shape;
using vseg::testing::random_tensor;

namespace {

NetworkConfig tiny_config(int size = 32) {
  NetworkConfig c;
  c.stage_channels = {2, 3, 4, 4};
  c.head_channels = 2;
  c.input_height = size;
  c.input_width = size;
  c.check_dspp_extent = false;
  return c;
}

double kernel_norm_sq(const ModelParams& p) {
  double acc = 0.0;
  for (const auto& [name, w] : p.weights) {
    if (name.size() > 7 && name.compare(name.size() - 7, 7, ".kernel") == 0) acc += grad::squared_norm(w);
  }
  return acc;
}

// Conv params sized for an isolated block test.
void add_unit(ModelParams& p, const std::string& name, int in, int out, int k, Rng& rng) {
  add_layer_params(p, {name, in, out, k, true}, rng);
}

std::vector<TrainSample> synthetic_samples(int count, int size, std::uint64_t seed) {
  std::vector<TrainSample> out;
  for (int i = 0; i < count; ++i) {
    const auto f = vseg::testing::make_fundus(size + 16, size + 8, seed + static_cast<std::uint64_t>(i));
    prep::PrepareConfig pc;
    pc.clahe = {2, 2, 2.0};
    pc.height = size;
    pc.width = size;
    out.push_back({prep::prepare(f.rgb, pc), prep::prepare_mask(f.vessels, size, size)});
  }
  return out;
}

std::array<Var, kNumScales> constant_maps(const std::array<Tensor, kNumScales>& maps) {
  std::array<Var, kNumScales> out;
  for (int m = 0; m < kNumScales; ++m) out[m] = grad::Tape::constant(maps[m]);
  return out;
}

double loss_of(const std::array<Tensor, kNumScales>& maps, const Tensor& gt, double eps) {
  grad::Tape tape(grad::Tape::Mode::inference);
  const auto vars = constant_maps(maps);
  return dice_loss(tape, vars, gt, {}, {eps, 0.0}).value;
}

}  // namespace

TEST_SUITE("blocks") {
  TEST_CASE("zero-branch residual block is the identity") {
    ModelParams p;
    Rng rng(1);
    add_unit(p, "b.a", 3, 3, 3, rng);
    add_unit(p, "b.b", 3, 3, 3, rng);
    for (const char* k : {"b.a.kernel", "b.b.kernel"}) p.weights[k] = Tensor(p.weights[k].shape());
    const Tensor x = random_tensor({2, 3, 8, 8}, 5);
    for (bool training : {true, false}) {
      grad::Tape tape;
      GraphBuilder g(tape, p, training);
      const Var y = g.dilated_residual_block("b", grad::Tape::constant(x), 2);
      CHECK(bitwise_equal(y.value(), x));
    }
  }

  TEST_CASE("residual block keeps the shape") {
    ModelParams p;
    Rng rng(2);
    add_unit(p, "b.a", 4, 4, 3, rng);
    add_unit(p, "b.b", 4, 4, 3, rng);
    for (int rate : {1, 2, 4}) {
      grad::Tape tape(grad::Tape::Mode::inference);
      GraphBuilder g(tape, p, false);
      CHECK(g.dilated_residual_block("b", grad::Tape::constant(random_tensor({1, 4, 9, 7}, 3)), rate).shape() ==
            Shape{1, 4, 9, 7});
    }
  }

  TEST_CASE("residual block channel mismatch") {
    ModelParams p;
    Rng rng(3);
    add_unit(p, "b.a", 4, 4, 3, rng);
    add_unit(p, "b.b", 4, 4, 3, rng);
    grad::Tape tape;
    GraphBuilder g(tape, p, true);
    CHECK_THROWS_AS(g.dilated_residual_block("b", grad::Tape::constant(Tensor({1, 3, 6, 6})), 1), ShapeError);
  }

  TEST_CASE("residual block gradients match central differences away from kinks") {
    for (bool training : {false, true}) {
      ModelParams p;
      Rng rng(4);
      add_unit(p, "b.a", 2, 2, 3, rng);
      add_unit(p, "b.b", 2, 2, 3, rng);
      const Tensor x = random_tensor({2, 2, 6, 6}, 6);
      const Tensor target = random_tensor({2, 2, 6, 6}, 7);
      const auto report = vseg::testing::check_param_gradients(
          [&](grad::Tape& tape, const ModelParams& params) {
            GraphBuilder g(tape, params, training);
            const Var y = g.dilated_residual_block("b", grad::Tape::constant(x), 2);
            const Var d = grad::add(tape, y, grad::Tape::constant(target));
            double acc = 0.0;
            for (float v : d.value().values()) acc += 0.5 * static_cast<double>(v) * v;
            return std::pair{grad::half_sum_squares(tape, d), acc};
          },
          p, {1e-3, 0.02});
      INFO("training " << training << ", skipped " << report.skipped << " of " << report.elements);
      CHECK(report.skipped * 5 <= report.elements);
      for (const auto& c : report.tensors) {
        INFO(c.name);
        CHECK(c.relative_error <= 1e-2);
      }
    }
  }

  TEST_CASE("output head gradients match central differences") {
    // Head unit, upsampling and sigmoid under the loss, on a coarse feature map.
    ModelParams p;
    Rng rng(3);
    add_unit(p, "h.conv", 4, 2, 3, rng);
    add_layer_params(p, {"h.out", 2, 1, 1, false}, rng);
    const Tensor x = random_tensor({1, 4, 8, 8}, 5);
    const Tensor gt = mask_tensor(vseg::testing::random_mask(32, 32, 0.3, 7));
    const auto report = vseg::testing::check_param_gradients(
        [&](grad::Tape& tape, const ModelParams& params) {
          GraphBuilder g(tape, params, false);
          const Var h = grad::resize_bilinear(tape, g.conv_unit("h.conv", grad::Tape::constant(x)), 32, 32);
          const Var o = grad::sigmoid(tape, g.conv("h.out", h));
          const std::array<Var, kNumScales> maps = {o, o, o, o};
          const LossResult r = dice_loss(tape, maps, gt, {}, {});
          return std::pair{r.total, r.value};
        },
        p);
    CHECK(report.tensors.size() == p.weights.size());
    INFO("worst: " << report.worst_name << " " << report.worst);
    CHECK(report.worst <= 1e-3);
  }

  TEST_CASE("pyramid pooling shape") {
    NetworkConfig cfg;
    const ModelParams p = init_params(cfg, 1);
    grad::Tape tape(grad::Tape::Mode::inference);
    GraphBuilder g(tape, p, false);
    const Var y = g.dspp("dspp", grad::Tape::constant(random_tensor({1, 256, 20, 24}, 9)), cfg.dspp_rates);
    CHECK(y.shape() == Shape{1, 256, 20, 24});
  }

  TEST_CASE("equal branch kernels on constant input agree in the interior") {
    ModelParams p;
    Rng rng(5);
    const std::vector<int> rates = {1, 6, 12, 18};
    for (int i = 0; i < 4; ++i) add_unit(p, "d.branch" + std::to_string(i), 2, 3, 3, rng);
    for (int i = 1; i < 4; ++i) {
      p.weights["d.branch" + std::to_string(i) + ".kernel"] = p.weights["d.branch0.kernel"];
    }
    const Tensor x({1, 2, 48, 48}, 0.6f);
    grad::Tape tape(grad::Tape::Mode::inference);
    GraphBuilder g(tape, p, false);
    std::vector<Tensor> outs;
    for (int i = 0; i < 4; ++i) {
      outs.push_back(g.conv_unit("d.branch" + std::to_string(i), grad::Tape::constant(x), rates[i]).value());
    }
    for (int i = 1; i < 4; ++i)
      for (int c = 0; c < 3; ++c)
        for (int y = 18; y < 30; ++y)
          for (int xx = 18; xx < 30; ++xx) CHECK(outs[i](0, c, y, xx) == outs[0](0, c, y, xx));
  }

  TEST_CASE("dropping the widest branch changes the output") {
    ModelParams p;
    Rng rng(6);
    for (int i = 0; i < 4; ++i) add_unit(p, "d.branch" + std::to_string(i), 3, 3, 3, rng);
    add_unit(p, "d.fuse", 12, 3, 1, rng);
    ModelParams q = p;
    q.weights.erase("d.branch3.kernel");
    // Fuse kernel restricted to the first three branches' channels.
    const Tensor& full = p.weights["d.fuse.kernel"];
    Tensor part({3, 9, 1, 1});
    for (int o = 0; o < 3; ++o)
      for (int i = 0; i < 9; ++i) part(o, i, 0, 0) = full(o, i, 0, 0);
    q.weights["d.fuse.kernel"] = part;
    const Tensor x = random_tensor({1, 3, 40, 40}, 10);
    grad::Tape tape(grad::Tape::Mode::inference);
    GraphBuilder gp(tape, p, false);
    GraphBuilder gq(tape, q, false);
    const std::vector<int> all = {1, 6, 12, 18};
    const std::vector<int> three = {1, 6, 12};
    const Tensor a = gp.dspp("d", grad::Tape::constant(x), all).value();
    const Tensor b = gq.dspp("d", grad::Tape::constant(x), three).value();
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(double(a.data()[i]) - b.data()[i]));
    CHECK(diff > 1e-3);
  }

  TEST_CASE("pyramid pooling rejects maps too small for the widest rate") {
    NetworkConfig cfg;
    cfg.stage_channels = {2, 2, 2, 2};
    const ModelParams p = init_params(cfg, 1);
    grad::Tape tape(grad::Tape::Mode::inference);
    GraphBuilder g(tape, p, false);
    try {
      g.dspp("dspp", grad::Tape::constant(Tensor({1, 2, 16, 30})), cfg.dspp_rates);
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      CHECK(e.axis() == "height");
    }
  }
}

TEST_SUITE("network") {
  TEST_CASE("configuration validation") {
    NetworkConfig c;
    c.input_height = 100;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = NetworkConfig{};
    c.stage_channels[2] = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = NetworkConfig{};
    c.dspp_rates.clear();
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_NOTHROW(NetworkConfig{}.validate());
  }

  TEST_CASE("parameter count matches a per-layer tally") {
    NetworkConfig cfg;
    const std::array<long, 4> c = {32, 64, 128, 256};
    const long head = 8;
    const auto unit = [](long in, long out, long k) { return out * in * k * k + out + 2 * out; };
    long expect = 0;
    for (int k = 0; k < 3; ++k) {
      const long in = k == 0 ? 1 : c[k - 1];
      expect += unit(in, c[k], 3) + unit(c[k], c[k], 3);  // main path
      expect += unit(1, c[k], 3) + unit(c[k], c[k], 3);   // injected image
      expect += 2 * unit(c[k], c[k], 3);                  // residual block
    }
    expect += unit(c[2], c[3], 3) + unit(c[3], c[3], 3);
    expect += 3 * 2 * unit(c[3], c[3], 3);
    expect += 4 * unit(c[3], c[3], 3) + unit(4 * c[3], c[3], 1);
    for (int k = 2; k >= 0; --k) expect += unit(c[k + 1] + c[k], c[k], 3) + unit(c[k], c[k], 3);
    for (int m = 0; m < 4; ++m) expect += unit(c[m], head, 3) + (head * 1 + 1);
    CHECK(init_params(cfg, 0).parameter_count() == static_cast<std::size_t>(expect));
  }

  TEST_CASE("initialization is seeded") {
    const NetworkConfig cfg = tiny_config();
    const ModelParams a = init_params(cfg, 7), b = init_params(cfg, 7), c = init_params(cfg, 8);
    CHECK(bitwise_equal(a.weights.at("enc0.conv_a.kernel"), b.weights.at("enc0.conv_a.kernel")));
    CHECK_FALSE(bitwise_equal(a.weights.at("enc0.conv_a.kernel"), c.weights.at("enc0.conv_a.kernel")));
    for (const auto& [name, w] : a.weights) {
      if (name.ends_with(".bias") || name.ends_with(".beta")) {
        for (float v : w.values()) CHECK(v == 0.0f);
      }
      if (name.ends_with(".gamma")) {
        for (float v : w.values()) CHECK(v == 1.0f);
      }
    }
  }

  TEST_CASE("forward produces four full-resolution maps in (0,1)") {
    const NetworkConfig cfg = tiny_config(64);
    const ModelParams p = init_params(cfg, 3);
    const Tensor img = random_tensor({2, 1, 64, 64}, 4, 0.0, 1.0);
    grad::Tape tape;
    const ForwardPass pass = forward(tape, cfg, p, img, true);
    for (const Var& m : pass.maps) {
      CHECK(m.shape() == Shape{2, 1, 64, 64});
      for (float v : m.value().values()) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
      }
    }
    CHECK(pass.kernels.size() == layer_table(cfg).size());
  }

  TEST_CASE("default network at 512x512") {
    const NetworkConfig cfg;
    const ModelParams p = init_params(cfg, 0);
    const Tensor img = random_tensor({1, 1, 512, 512}, 1, 0.0, 1.0);
    const PredictionSet out = predict(cfg, p, img);
    for (const Tensor& m : out.maps) {
      CHECK(m.shape() == Shape{1, 1, 512, 512});
      bool in_range = true;
      for (float v : m.values()) in_range = in_range && v > 0.0f && v < 1.0f;
      CHECK(in_range);
    }
  }

  TEST_CASE("inference is bitwise repeatable and leaves parameters alone") {
    const NetworkConfig cfg = tiny_config(32);
    const ModelParams p = init_params(cfg, 3);
    const ModelParams copy = p;
    const Tensor img = random_tensor({1, 1, 32, 32}, 5, 0.0, 1.0);
    const PredictionSet a = predict(cfg, p, img);
    const PredictionSet b = predict(cfg, p, img);
    for (int m = 0; m < kNumScales; ++m) CHECK(bitwise_equal(a.maps[m], b.maps[m]));
    for (const auto& [name, w] : p.weights) CHECK(bitwise_equal(w, copy.weights.at(name)));
  }

  TEST_CASE("wrong input size asks for preprocessing") {
    const NetworkConfig cfg = tiny_config(32);
    const ModelParams p = init_params(cfg, 3);
    try {
      predict(cfg, p, Tensor({1, 1, 40, 32}));
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      CHECK(e.axis() == "height");
      CHECK(std::string(e.what()).find("preprocess") != std::string::npos);
    }
    CHECK_THROWS_AS(predict(cfg, p, Tensor({1, 3, 32, 32})), ShapeError);
  }

  TEST_CASE("full network gradients are finite and point uphill") {
    const NetworkConfig cfg = tiny_config(32);
    ModelParams p = init_params(cfg, 11);
    const Tensor img = random_tensor({1, 1, 32, 32}, 12, 0.0, 1.0);
    const Tensor gt = mask_tensor(vseg::testing::random_mask(32, 32, 0.3, 13));
    const auto objective = [&](grad::Tape& tape, const ModelParams& params) {
      const ForwardPass pass = forward(tape, cfg, params, img, true);
      return dice_loss(tape, pass.maps, gt, pass.kernels, {});
    };
    grad::Gradients g;
    double before = 0.0;
    {
      grad::Tape tape;
      const LossResult r = objective(tape, p);
      before = r.value;
      g = tape.backward(r.total);
    }
    CHECK(g.size() == p.weights.size());
    double norm_sq = 0.0;
    for (const auto& [name, w] : p.weights) {
      INFO(name);
      REQUIRE(g.count(name) == 1);
      CHECK(g.at(name).shape() == w.shape());
      for (float v : g.at(name).values()) CHECK(std::isfinite(v));
      norm_sq += grad::squared_norm(g.at(name));
    }
    REQUIRE(norm_sq > 0.0);
    const double step = 1e-3 / std::sqrt(norm_sq);
    for (auto& [name, w] : p.weights) {
      const Tensor& d = g.at(name);
      for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] -= static_cast<float>(step * d.data()[i]);
    }
    grad::Tape tape(grad::Tape::Mode::inference);
    CHECK(objective(tape, p).value < before);
  }
}

TEST_SUITE("loss") {
  TEST_CASE("perfect prediction has zero loss") {
    const Tensor gt = mask_tensor(vseg::testing::random_mask(16, 12, 0.3, 1));
    CHECK(loss_of({gt, gt, gt, gt}, gt, 1e-5) == 0.0);
  }

  TEST_CASE("disjoint prediction costs about one per scale") {
    const BinaryMask g = vseg::testing::bar_mask(20, 20, 0, 20, 0, 5);
    const BinaryMask q = vseg::testing::bar_mask(20, 20, 0, 20, 10, 5);
    const Tensor gt = mask_tensor(g), p = mask_tensor(q);
    const double s = 100.0, eps = 1e-5;
    const double loss = loss_of({p, p, p, p}, gt, eps);
    CHECK(loss == doctest::Approx(4.0 * (1.0 - eps / (2 * s + eps))).epsilon(1e-12));
  }

  TEST_CASE("hand-evaluated overlap of one in two") {
    Tensor gt({1, 1, 1, 4}, {1, 1, 0, 0});
    Tensor p({1, 1, 1, 4}, {1, 0, 0, 0});
    const double loss = loss_of({p, p, p, p}, gt, 1e-12);
    CHECK(std::abs(loss / 4.0 - 1.0 / 3.0) <= 1e-9);
  }

  TEST_CASE("empty ground truth and empty prediction give zero") {
    const Tensor z({1, 1, 3, 3});
    CHECK(loss_of({z, z, z, z}, z, 1e-5) == 0.0);
  }

  TEST_CASE("terms stay in [0,1] and the total is permutation invariant") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Tensor gt = mask_tensor(vseg::testing::random_mask(8, 8, 0.4, seed));
      std::array<Tensor, kNumScales> maps;
      for (int m = 0; m < kNumScales; ++m) maps[m] = random_tensor({1, 1, 8, 8}, seed * 10 + m, 0.001, 0.999);
      grad::Tape tape(grad::Tape::Mode::inference);
      const auto vars = constant_maps(maps);
      const LossResult r = dice_loss(tape, vars, gt, {}, {});
      for (double t : r.scale_terms) {
        CHECK(t >= 0.0);
        CHECK(t <= 1.0);
      }
      // Reverse pixel order in every map and the ground truth.
      const auto reversed = [](const Tensor& t) {
        Tensor out = t;
        std::reverse(out.values().begin(), out.values().end());
        return out;
      };
      std::array<Tensor, kNumScales> rmaps;
      for (int m = 0; m < kNumScales; ++m) rmaps[m] = reversed(maps[m]);
      const double a = loss_of(maps, gt, 1e-5);
      const double b = loss_of(rmaps, reversed(gt), 1e-5);
      CHECK(std::abs(a - b) <= 1e-12);
    }
  }

  TEST_CASE("weight penalty covers kernels only") {
    const NetworkConfig cfg = tiny_config(32);
    const ModelParams p = init_params(cfg, 2);
    const Tensor gt = mask_tensor(vseg::testing::random_mask(32, 32, 0.2, 3));
    const PredictionSet preds = predict(cfg, p, random_tensor({1, 1, 32, 32}, 4, 0.0, 1.0));
    const double with = dice_loss(preds, gt, {1e-5, 0.0008}, p);
    const double without = dice_loss(preds, gt, {1e-5, 0.0}, p);
    CHECK(with - without == doctest::Approx(0.0008 * kernel_norm_sq(p)).epsilon(1e-9));
  }

  TEST_CASE("non-binary ground truth and mismatched shapes are rejected") {
    const Tensor p({1, 1, 2, 2}, 0.5f);
    CHECK_THROWS_AS(loss_of({p, p, p, p}, Tensor({1, 1, 2, 2}, 0.5f), 1e-5), DataError);
    CHECK_THROWS_AS(loss_of({p, p, p, p}, Tensor({1, 1, 2, 3}), 1e-5), ShapeError);
    grad::Tape tape;
    const std::array<Var, 2> two = {grad::Tape::constant(p), grad::Tape::constant(p)};
    CHECK_THROWS_AS(dice_loss(tape, two, Tensor({1, 1, 2, 2}), {}, {}), ShapeError);
    CHECK_THROWS_AS((DiceLossConfig{0.0, 0.1}.validate()), ConfigError);
    CHECK_THROWS_AS((DiceLossConfig{1e-5, -1.0}.validate()), ConfigError);
  }

  TEST_CASE("loss gradients match central differences") {
    const Tensor gt = mask_tensor(vseg::testing::random_mask(6, 5, 0.4, 21));
    std::vector<Tensor> inputs;
    for (int m = 0; m < kNumScales; ++m) inputs.push_back(random_tensor({1, 1, 5, 6}, 30 + m, 0.05, 0.95));
    inputs.push_back(random_tensor({2, 1, 3, 3}, 40));
    const auto report = vseg::testing::check_gradients(
        vseg::testing::ObjectiveBuilder([&](grad::Tape& tape, const std::vector<Var>& v) {
          const std::array<Var, kNumScales> maps = {v[0], v[1], v[2], v[3]};
          const std::array<Var, 1> kernels = {v[4]};
          const LossResult r = dice_loss(tape, maps, gt, kernels, {1e-5, 0.05});
          return std::pair{r.total, r.value};
        }),
        inputs);
    for (const auto& c : report.tensors) {
      INFO(c.name);
      CHECK(c.relative_error <= 1e-3);
    }
  }
}

TEST_SUITE("predict_mask") {
  TEST_CASE("constant maps") {
    PredictionSet s;
    for (auto& m : s.maps) m = Tensor({1, 1, 4, 5}, 0.9f);
    CHECK(predict_mask(s).count() == 20);
    for (auto& m : s.maps) m = Tensor({1, 1, 4, 5}, 0.1f);
    CHECK(predict_mask(s).count() == 0);
  }

  TEST_CASE("foreground count is non-increasing in the threshold") {
    PredictionSet s;
    s.maps[0] = random_tensor({1, 1, 30, 30}, 3, 0.0, 1.0);
    std::size_t prev = std::numeric_limits<std::size_t>::max();
    for (int t = 1; t < 100; ++t) {
      const std::size_t n = predict_mask(s, t / 100.0f).count();
      CHECK(n <= prev);
      prev = n;
    }
  }

  TEST_CASE("uses the full-resolution decoder map") {
    PredictionSet s;
    s.maps = {Tensor({1, 1, 2, 2}, 0.9f), Tensor({1, 1, 2, 2}), Tensor({1, 1, 2, 2}), Tensor({1, 1, 2, 2})};
    CHECK(predict_mask(s).count() == 4);
  }
}

TEST_SUITE("train") {
  TEST_CASE("loss decreases on a two-image subset") {
    const NetworkConfig cfg = tiny_config(32);
    const auto samples = synthetic_samples(2, 32, 100);
    ModelParams p = init_params(cfg, 1);
    grad::AdamState opt;
    opt.config.initial_lr = 1e-2;
    TrainOptions o;
    o.epochs = 15;
    o.augment = false;
    const TrainResult r = train(cfg, {}, p, opt, samples, o);
    REQUIRE(r.epoch_losses.size() == 15);
    CHECK(r.steps == 15);
    CHECK(r.epoch_losses.back() < r.epoch_losses.front());
  }

  TEST_CASE("same seed gives identical histories and parameters") {
    const NetworkConfig cfg = tiny_config(32);
    const auto samples = synthetic_samples(3, 32, 200);
    TrainOptions o;
    o.epochs = 2;
    o.seed = 42;
    ModelParams a = init_params(cfg, 5), b = init_params(cfg, 5);
    grad::AdamState sa, sb;
    const TrainResult ra = train(cfg, {}, a, sa, samples, o);
    const TrainResult rb = train(cfg, {}, b, sb, samples, o);
    CHECK(ra.epoch_losses == rb.epoch_losses);
    for (const auto& [name, w] : a.weights) CHECK(bitwise_equal(w, b.weights.at(name)));
    for (const auto& [name, st] : a.batch_norm) {
      CHECK(st.running_mean == b.batch_norm.at(name).running_mean);
      CHECK(st.running_var == b.batch_norm.at(name).running_var);
    }
    CHECK(ra.steps == 4);  // ceil(3 / 2) per epoch
  }

  TEST_CASE("weight decay shrinks the kernels") {
    const NetworkConfig cfg = tiny_config(32);
    const auto samples = synthetic_samples(2, 32, 300);
    TrainOptions o;
    o.epochs = 100;
    o.seed = 1;
    ModelParams a = init_params(cfg, 9), b = init_params(cfg, 9);
    grad::AdamState sa, sb;
    train(cfg, {1e-5, 0.0}, a, sa, samples, o);
    train(cfg, {1e-5, 0.0008}, b, sb, samples, o);
    CHECK(sa.step_count == 100);
    CHECK(kernel_norm_sq(b) < kernel_norm_sq(a));
  }

  TEST_CASE("step limit and observer stop") {
    const NetworkConfig cfg = tiny_config(32);
    const auto samples = synthetic_samples(4, 32, 400);
    ModelParams p = init_params(cfg, 1);
    grad::AdamState opt;
    TrainOptions o;
    o.epochs = 5;
    o.max_steps = 3;
    CHECK(train(cfg, {}, p, opt, samples, o).steps == 3);
    o.max_steps = 0;
    int calls = 0;
    const TrainResult r = train(cfg, {}, p, opt, samples, o, [&](const StepInfo& s) {
      ++calls;
      CHECK(std::isfinite(s.loss));
      return s.step < 2;
    });
    CHECK(calls == 2);
    CHECK(r.stopped_early);
  }

  TEST_CASE("non-finite loss reports epoch and step") {
    const NetworkConfig cfg = tiny_config(32);
    const auto samples = synthetic_samples(2, 32, 500);
    ModelParams p = init_params(cfg, 1);
    p.weights["head0.out.bias"] = Tensor({1, 1, 1, 1}, std::numeric_limits<float>::quiet_NaN());
    grad::AdamState opt;
    try {
      train(cfg, {}, p, opt, samples, {});
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("epoch") != std::string::npos);
      CHECK(msg.find("step") != std::string::npos);
    }
  }

  TEST_CASE("empty dataset is rejected") {
    const NetworkConfig cfg = tiny_config(32);
    ModelParams p = init_params(cfg, 1);
    grad::AdamState opt;
    CHECK_THROWS_AS(train(cfg, {}, p, opt, {}, {}), DataError);
  }

  TEST_CASE("sample seeds differ across samples and epochs") {
    CHECK(sample_seed(1, 0, 0) != sample_seed(1, 1, 0));
    CHECK(sample_seed(1, 0, 0) != sample_seed(1, 0, 1));
    CHECK(sample_seed(1, 0, 0) != sample_seed(2, 0, 0));
    CHECK(sample_seed(1, 3, 2) == sample_seed(1, 3, 2));
  }
}
