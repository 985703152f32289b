#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "sase/error.hpp"
#include "sase/flop_counter.hpp"
#include "sase/gradcheck.hpp"
#include "sase/module.hpp"
#include "sase/nn.hpp"
#include "sase/ops.hpp"
#include "test_helpers.hpp"

namespace sase {
namespace {

using testing::bitwise_equal;
using testing::max_abs_diff;
using testing::values;

double inner(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

// Cyclic shift of the spatial axes by (dy, dx).
Tensor roll(const Tensor& x, std::int64_t dy, std::int64_t dx) {
  const auto& s = x.shape();
  const std::int64_t h = s[2], w = s[3];
  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  for (std::int64_t p = 0; p < s[0] * s[1]; ++p) {
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t z = 0; z < w; ++z) {
        const std::int64_t ty = ((y + dy) % h + h) % h, tz = ((z + dx) % w + w) % w;
        out[p * h * w + ty * w + tz] = x.data()[p * h * w + y * w + z];
      }
    }
  }
  return Tensor::from_values(s, std::move(out));
}

TEST(Conv2d, Examples) {
  Conv2dSpec spec;
  spec.kernel = {1, 1};
  const Tensor y = conv2d(Tensor::ones(Shape{1, 1, 3, 3}), Tensor::full(Shape{1, 1, 1, 1}, 2.0),
                          Tensor(), spec);
  EXPECT_EQ(values(y), std::vector<double>(9, 2.0));

  Conv2dSpec s3 = Conv2dSpec::same(1, 1, 3);
  s3.bias = true;
  const Tensor z = conv2d(Tensor::randn(Shape{1, 1, 5, 5}, 1), Tensor::zeros(Shape{1, 1, 3, 3}),
                          Tensor::full(Shape{1}, 0.75), s3);
  EXPECT_EQ(values(z), std::vector<double>(25, 0.75));
}

TEST(Conv2d, DilatedMatchesOracle) {
  Conv2dSpec spec;
  spec.in_channels = 4;
  spec.out_channels = 5;
  spec.padding = {1, 1};
  spec.dilation = {2, 2};
  const Tensor x = Tensor::randn(Shape{1, 4, 8, 8}, 3);
  const Tensor w = Tensor::randn(spec.weight_shape(), 4);
  EXPECT_LE(max_abs_diff(conv2d(x, w, Tensor(), spec), conv2d_naive_oracle(x, w, Tensor(), spec)),
            1e-12);
}

TEST(Conv2d, TwoHundredRandomSpecsMatchOracle) {
  std::mt19937 gen(2024);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen); };
  int checked = 0;
  double worst = 0.0;
  while (checked < 200) {
    Conv2dSpec s;
    s.groups = pick(1, 3);
    s.in_channels = s.groups * pick(1, 3);
    s.out_channels = s.groups * pick(1, 3);
    s.kernel = {pick(1, 4), pick(1, 4)};
    s.stride = {pick(1, 3), pick(1, 3)};
    s.dilation = {pick(1, 3), pick(1, 3)};
    s.padding = {pick(0, 3), pick(0, 3)};
    s.bias = pick(0, 1) == 1;
    s.padding_mode = pick(0, 3) == 0 ? PaddingMode::circular : PaddingMode::zeros;
    const std::int64_t h = pick(1, 12), w = pick(1, 12);
    if (s.padding_mode == PaddingMode::circular && (s.padding.first > h || s.padding.second > w)) {
      continue;
    }
    try {
      s.output_extent(h, w);
    } catch (const ShapeError&) {
      continue;
    }
    const Tensor x = Tensor::randn(Shape{pick(1, 2), s.in_channels, h, w}, checked);
    const Tensor wt = Tensor::randn(s.weight_shape(), checked + 1000);
    const Tensor b = s.bias ? Tensor::randn(Shape{s.out_channels}, checked + 2000) : Tensor();
    worst = std::max(worst, max_abs_diff(conv2d(x, wt, b, s), conv2d_naive_oracle(x, wt, b, s)));
    ++checked;
  }
  EXPECT_LE(worst, 1e-11);
}

TEST(Conv2d, CircularPaddingCommutesWithShift) {
  Conv2dSpec s = Conv2dSpec::same(3, 4, 3, 2);
  s.padding_mode = PaddingMode::circular;
  const Tensor x = Tensor::randn(Shape{2, 3, 9, 7}, 5);
  const Tensor w = Tensor::randn(s.weight_shape(), 6);
  for (auto [dy, dx] : {std::pair{1, 0}, {0, 3}, {-2, 5}, {4, -1}}) {
    EXPECT_LE(max_abs_diff(conv2d(roll(x, dy, dx), w, Tensor(), s),
                           roll(conv2d(x, w, Tensor(), s), dy, dx)),
              1e-12);
  }
}

TEST(Conv2d, DepthwiseEqualsPerChannelConvs) {
  const std::int64_t c = 5;
  Conv2dSpec s = Conv2dSpec::same(c, c, 3);
  s.groups = c;
  const Tensor x = Tensor::randn(Shape{1, c, 6, 6}, 1);
  const Tensor w = Tensor::randn(s.weight_shape(), 2);
  const Tensor y = conv2d(x, w, Tensor(), s);
  const auto xs = split(x, 1, c), ws = split(w, 0, c), ys = split(y, 1, c);
  const Conv2dSpec single = Conv2dSpec::same(1, 1, 3);
  for (std::int64_t i = 0; i < c; ++i) {
    EXPECT_LE(max_abs_diff(ys[i], conv2d(xs[i], ws[i], Tensor(), single)), 1e-13);
  }
}

TEST(Conv2d, Errors) {
  Conv2dSpec s = Conv2dSpec::same(3, 4, 3);
  s.groups = 2;
  EXPECT_THROW(s.validate(), ShapeError);
  Conv2dSpec t;
  t.kernel = {5, 5};
  EXPECT_THROW(conv2d(Tensor::zeros(Shape{1, 1, 3, 3}), Tensor::zeros(t.weight_shape()), Tensor(),
                      t),
               ShapeError);
  EXPECT_THROW(conv2d(Tensor::zeros(Shape{1, 2, 3, 3}), Tensor::zeros(t.weight_shape()), Tensor(),
                      t),
               ShapeError);
}

TEST(ConvTranspose2d, Examples) {
  ConvTranspose2dSpec s;
  s.in_channels = 256;
  s.out_channels = 32;
  s.kernel = {4, 4};
  const Tensor y = conv_transpose2d(Tensor::randn(Shape{1, 256, 1, 1}, 1),
                                    Tensor::randn(s.weight_shape(), 2), Tensor(), s);
  EXPECT_EQ(y.shape(), (Shape{1, 32, 4, 4}));

  ConvTranspose2dSpec one;
  one.kernel = {2, 2};
  const Tensor z = conv_transpose2d(Tensor::full(Shape{1, 1, 1, 1}, 1.25),
                                    Tensor::ones(one.weight_shape()), Tensor(), one);
  EXPECT_EQ(values(z), std::vector<double>(4, 1.25));
}

TEST(ConvTranspose2d, IsAdjointOfConv2d) {
  for (int trial = 0; trial < 6; ++trial) {
    const std::int64_t stride = 1 + trial % 3, pad = trial % 2, k = 3 + trial % 2;
    const std::int64_t groups = trial % 3 == 2 ? 2 : 1;
    Conv2dSpec f;
    f.in_channels = 2 * groups;
    f.out_channels = 3 * groups;
    f.kernel = {k, k};
    f.stride = {stride, stride};
    f.padding = {pad, pad};
    f.groups = groups;
    ConvTranspose2dSpec t;
    t.in_channels = f.out_channels;
    t.out_channels = f.in_channels;
    t.kernel = f.kernel;
    t.stride = f.stride;
    t.padding = f.padding;
    t.groups = groups;
    const std::int64_t h = k - 2 * pad + stride * 3;  // exact tiling
    const Tensor x = Tensor::randn(Shape{2, f.in_channels, h, h}, trial);
    const Tensor w = Tensor::randn(f.weight_shape(), trial + 10);
    const Tensor cx = conv2d(x, w, Tensor(), f);
    const Tensor y = Tensor::randn(cx.shape(), trial + 20);
    const Tensor ty = conv_transpose2d(y, w, Tensor(), t);
    ASSERT_EQ(ty.shape(), x.shape());
    EXPECT_NEAR(inner(cx, y), inner(x, ty), 1e-10 * std::max(1.0, std::abs(inner(cx, y))));
  }
}

TEST(Pooling, Examples) {
  const Tensor g = global_avg_pool(Tensor::from_values(Shape{1, 1, 2, 2}, {1, 3, 5, 7}));
  EXPECT_EQ(g.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(g.item(), 4.0);

  std::vector<double> ramp(16);
  for (int i = 0; i < 16; ++i) ramp[i] = i;
  const Tensor a = adaptive_avg_pool(Tensor::from_values(Shape{1, 1, 4, 4}, ramp), 2, 2);
  // Quadrant means of the 0..15 ramp.
  EXPECT_EQ(values(a), (std::vector<double>{(0 + 1 + 4 + 5) / 4.0, (2 + 3 + 6 + 7) / 4.0,
                                            (8 + 9 + 12 + 13) / 4.0, (10 + 11 + 14 + 15) / 4.0}));
  const Tensor c = adaptive_avg_pool(Tensor::full(Shape{2, 3, 7, 5}, -1.5), 4, 4);
  for (double v : c.data()) EXPECT_DOUBLE_EQ(v, -1.5);
  EXPECT_THROW(adaptive_avg_pool(Tensor::zeros(Shape{1, 1, 3, 3}), 4, 4), ShapeError);
}

TEST(Pooling, AdaptiveFloorPartition) {
  // 5 rows into 2 bins: rows [0,2) and [2,5).
  std::vector<double> col{1, 2, 3, 4, 5};
  const Tensor a = adaptive_avg_pool(Tensor::from_values(Shape{1, 1, 5, 1}, col), 2, 1);
  EXPECT_DOUBLE_EQ(a.at({0, 0, 0, 0}), 1.5);
  EXPECT_DOUBLE_EQ(a.at({0, 0, 1, 0}), 4.0);
}

TEST(Pooling, MaxAndAverageWindows) {
  std::vector<double> ramp(16);
  for (int i = 0; i < 16; ++i) ramp[i] = i;
  const Tensor x = Tensor::from_values(Shape{1, 1, 4, 4}, ramp);
  EXPECT_EQ(values(avg_pool2d(x, 2, 2)), (std::vector<double>{2.5, 4.5, 10.5, 12.5}));
  EXPECT_EQ(values(max_pool2d(x, 2, 2, 0)), (std::vector<double>{5, 7, 13, 15}));
  EXPECT_EQ(max_pool2d(Tensor::zeros(Shape{1, 1, 112, 112}), 3, 2, 1).shape(),
            (Shape{1, 1, 56, 56}));
}

TEST(Glu, Examples) {
  const Tensor a = Tensor::randn(Shape{1, 3, 2, 2}, 1);
  const Tensor half = glu(concat({a, Tensor::zeros(a.shape())}, 1));
  EXPECT_LE(max_abs_diff(half, scale(a, 0.5)), 0.0);
  const Tensor sat = glu(concat({a, Tensor::full(a.shape(), 30.0)}, 1));
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    EXPECT_LT(std::abs(sat.data()[i] - a.data()[i]), 1e-12 * std::abs(a.data()[i]));
  }
  const Tensor x = Tensor::randn(Shape{2, 6, 3, 3}, 2);
  const auto halves = split(x, 1, 2);
  EXPECT_LE(max_abs_diff(glu(x), mul(halves[0], sigmoid(halves[1]))), 1e-15);
  EXPECT_THROW(glu(Tensor::zeros(Shape{1, 3, 2, 2})), ShapeError);
}

TEST(Upsample, Nearest) {
  const Tensor y = upsample(Tensor::from_values(Shape{1, 1, 2, 2}, {1, 2, 3, 4}), 2,
                            UpsampleMode::nearest);
  EXPECT_EQ(values(y), (std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
  EXPECT_THROW(upsample_nearest(Tensor::zeros(Shape{1, 1, 2, 2}), 1), ShapeError);
}

// Half-pixel bilinear interpolation written from the definition.
double bilinear_oracle(const std::vector<double>& img, std::int64_t h, std::int64_t w,
                       std::int64_t oh, std::int64_t ow, std::int64_t y, std::int64_t x) {
  const double sy = std::max(0.0, (y + 0.5) * h / oh - 0.5);
  const double sx = std::max(0.0, (x + 0.5) * w / ow - 0.5);
  const std::int64_t y0 = std::min<std::int64_t>(static_cast<std::int64_t>(sy), h - 1);
  const std::int64_t x0 = std::min<std::int64_t>(static_cast<std::int64_t>(sx), w - 1);
  const std::int64_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = sy - y0, fx = sx - x0;
  return (1 - fy) * ((1 - fx) * img[y0 * w + x0] + fx * img[y0 * w + x1]) +
         fy * ((1 - fx) * img[y1 * w + x0] + fx * img[y1 * w + x1]);
}

TEST(Upsample, Bilinear) {
  const Tensor c = upsample(Tensor::full(Shape{1, 2, 3, 5}, 2.5), 3, UpsampleMode::bilinear);
  for (double v : c.data()) EXPECT_NEAR(v, 2.5, 1e-15);

  // 2x2 ramp [[0,1],[2,3]] doubled: interior samples sit at quarter offsets.
  const Tensor r = upsample(Tensor::from_values(Shape{1, 1, 2, 2}, {0, 1, 2, 3}), 2,
                            UpsampleMode::bilinear);
  const std::vector<double> expected{0,   0.25, 0.75, 1,    0.5, 0.75, 1.25, 1.5,
                                     1.5, 1.75, 2.25, 2.5,  2,   2.25, 2.75, 3};
  EXPECT_LE(max_abs_diff(r.data(), expected), 1e-15);

  const Tensor x = Tensor::randn(Shape{1, 1, 5, 3}, 7);
  const Tensor y = resize_bilinear(x, 8, 11);
  const auto img = values(x);
  for (std::int64_t i = 0; i < 8; ++i) {
    for (std::int64_t j = 0; j < 11; ++j) {
      EXPECT_NEAR(y.at({0, 0, i, j}), bilinear_oracle(img, 5, 3, 8, 11, i, j), 1e-14);
    }
  }
}

TEST(Noise, IdentityAndDeterminism) {
  const Tensor x = Tensor::randn(Shape{1, 2, 4, 4}, 1);
  EXPECT_TRUE(bitwise_equal(inject_noise(x, 5, 0.0), x));
  EXPECT_TRUE(bitwise_equal(inject_noise(x, 5, 0.3), inject_noise(x, 5, 0.3)));
  EXPECT_FALSE(bitwise_equal(inject_noise(x, 5, 0.3), inject_noise(x, 6, 0.3)));
  EXPECT_THROW(inject_noise(x, 5, -1.0), ConfigError);
}

TEST(Noise, StandardNormalStatistics) {
  const double stddev = 0.5;
  const Tensor x = Tensor::randn(Shape{1, 1, 1000, 1000}, 3);
  const Tensor y = inject_noise(x, 11, stddev);
  double s = 0.0, s2 = 0.0;
  const auto n = static_cast<double>(x.numel());
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double e = (y.data()[i] - x.data()[i]) / stddev;
    s += e;
    s2 += e * e;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  EXPECT_LE(std::abs(mean), 0.005);
  EXPECT_GE(var, 0.99);
  EXPECT_LE(var, 1.01);
}

TEST(BatchNorm, EvalIdentity) {
  auto state = BatchNormState::create(3);
  state.training = false;
  const Tensor x = Tensor::randn(Shape{1, 3, 4, 4}, 1);
  const Tensor y = batchnorm(x, state);
  const double factor = 1.0 / std::sqrt(1.0 + state.eps);
  EXPECT_LE(max_abs_diff(y, scale(x, factor)), 1e-15);
  EXPECT_LE(std::abs(factor - 1.0), 1e-5);
}

TEST(BatchNorm, TrainNormalisesAndAffine) {
  auto state = BatchNormState::create(3);
  const Tensor x = Tensor::randn(Shape{4, 3, 5, 5}, 2, 1.5, 3.0);
  const Tensor y = batchnorm(x, state);
  const Tensor m = mean(y, {0, 2, 3});
  const Tensor v = mean(mul(y, y), {0, 2, 3});
  for (std::int64_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(m.at({c}), 0.0, 1e-6);
    EXPECT_NEAR(v.at({c}), 1.0, 1e-4);
  }
  for (double r : state.running_var.data()) EXPECT_GT(r, 0.0);
  // Momentum 0.1 from a zero start: running mean is a tenth of the batch mean.
  const Tensor batch_mean = mean(x, {0, 2, 3});
  for (std::int64_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(state.running_mean.at({c}), 0.1 * batch_mean.at({c}), 1e-14);
  }

  auto affine = BatchNormState::create(3);
  std::fill(affine.gamma.mutable_data().begin(), affine.gamma.mutable_data().end(), 2.0);
  std::fill(affine.beta.mutable_data().begin(), affine.beta.mutable_data().end(), 3.0);
  const Tensor z = batchnorm(x, affine);
  const Tensor zm = mean(z, {0, 2, 3});
  const Tensor zc = add_scalar(z, -3.0);
  const Tensor zv = mean(mul(zc, zc), {0, 2, 3});
  for (std::int64_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(zm.at({c}), 3.0, 1e-6);
    EXPECT_NEAR(std::sqrt(zv.at({c})), 2.0, 1e-4);
  }
}

TEST(BatchNorm, RejectsSingleSampleInTraining) {
  auto state = BatchNormState::create(2);
  EXPECT_THROW(batchnorm(Tensor::zeros(Shape{1, 2, 3, 3}), state), ShapeError);
  state.training = false;
  EXPECT_NO_THROW(batchnorm(Tensor::zeros(Shape{1, 2, 3, 3}), state));
}

TEST(Linear, MatchesManualProduct) {
  const Tensor x = Tensor::randn(Shape{3, 4}, 1);
  const Tensor w = Tensor::randn(Shape{2, 4}, 2);
  const Tensor b = Tensor::randn(Shape{2}, 3);
  EXPECT_LE(max_abs_diff(linear(x, w, b), add(matmul(x, transpose(w)), b)), 1e-14);
}

// Gradient checks of every layer primitive.
TEST(LayerGradcheck, Primitives) {
  Tensor x = Tensor::randn(Shape{2, 4, 6, 6}, 1);
  Tensor w3 = Tensor::randn(Shape{6, 2, 3, 3}, 2);
  Tensor b6 = Tensor::randn(Shape{6}, 3);
  Tensor wt = Tensor::randn(Shape{4, 3, 4, 4}, 4);
  Tensor small = Tensor::randn(Shape{2, 4, 3, 3}, 5);
  auto bn = BatchNormState::create(4);
  auto bn_eval = BatchNormState::create(4);
  bn_eval.training = false;
  std::copy_n(Tensor::uniform(Shape{4}, 9, 0.5, 2.0).data().begin(), 4,
              bn_eval.running_var.mutable_data().begin());
  Tensor lw = Tensor::randn(Shape{3, 5}, 6);
  Tensor lx = Tensor::randn(Shape{2, 5}, 7);
  Tensor lb = Tensor::randn(Shape{3}, 8);

  Conv2dSpec grouped = Conv2dSpec::same(4, 6, 3, 2, 2);
  grouped.groups = 2;
  grouped.bias = true;
  Conv2dSpec circ = grouped;
  circ.padding_mode = PaddingMode::circular;
  circ.stride = {1, 1};
  ConvTranspose2dSpec up;
  up.in_channels = 4;
  up.out_channels = 3;
  up.kernel = {4, 4};
  up.stride = {2, 2};
  up.padding = {1, 1};

  const std::vector<std::pair<const char*, std::function<Tensor()>>> cases = {
      {"conv2d", [&] { return mul(conv2d(x, w3, b6, grouped), conv2d(x, w3, b6, grouped)); }},
      {"conv2d_circular", [&] { return exp(scale(conv2d(x, w3, b6, circ), 0.2)); }},
      {"conv_transpose2d", [&] { return exp(scale(conv_transpose2d(small, wt, Tensor(), up), 0.2)); }},
      {"global_avg_pool", [&] { return exp(global_avg_pool(x)); }},
      {"adaptive_avg_pool", [&] { return exp(adaptive_avg_pool(x, 4, 4)); }},
      {"avg_pool2d", [&] { return exp(avg_pool2d(x, 2, 2)); }},
      {"max_pool2d", [&] { return exp(max_pool2d(x, 3, 2, 1)); }},
      {"glu", [&] { return mul(glu(x), glu(x)); }},
      {"upsample_nearest", [&] { return exp(upsample_nearest(small, 2)); }},
      {"resize_bilinear", [&] { return exp(resize_bilinear(small, 7, 5)); }},
      {"inject_noise", [&] { return mul(inject_noise(small, 3, 0.7), small); }},
      {"batchnorm_train", [&] { return mul(batchnorm(x, bn), x); }},
      {"batchnorm_eval", [&] { return mul(batchnorm(x, bn_eval), x); }},
      {"linear", [&] { return mul(linear(lx, lw, lb), linear(lx, lw, lb)); }},
  };
  const std::vector<NamedTensor> wrt = {
      {"x", x},         {"w3", w3},          {"b6", b6},
      {"wt", wt},       {"small", small},    {"gamma", bn.gamma},
      {"beta", bn.beta}, {"gamma_eval", bn_eval.gamma}, {"lw", lw},
      {"lx", lx},       {"lb", lb}};
  for (const auto& [name, fn] : cases) {
    const auto report = gradcheck(fn, wrt);
    EXPECT_TRUE(report.passed) << name << " max_rel_err " << report.max_rel_err << "\n"
                               << report.to_json();
  }
}

TEST(Layers, TraceMatchesRuntimeCounter) {
  InitRng rng(1);
  Conv2dSpec s = Conv2dSpec::same(4, 6, 3, 1, 2);
  s.bias = true;
  Conv2d conv(s, rng);
  BatchNorm2d bn(6);
  Linear fc(5, 3, true, rng);
  ConvTranspose2dSpec ts;
  ts.in_channels = 4;
  ts.out_channels = 2;
  ts.kernel = {4, 4};
  ConvTranspose2d tconv(ts, rng);

  CostReport report;
  const Shape c_out = conv.trace(Shape{2, 4, 8, 8}, report, "conv");
  bn.trace(c_out, report, "bn");
  fc.trace(Shape{2, 5}, report, "fc");
  tconv.trace(Shape{2, 4, 1, 1}, report, "tconv");

  flops::Scope scope;
  (void)bn.forward(conv.forward(Tensor::randn(Shape{2, 4, 8, 8}, 1)));
  (void)fc.forward(Tensor::randn(Shape{2, 5}, 2));
  (void)tconv.forward(Tensor::randn(Shape{2, 4, 1, 1}, 3));
  EXPECT_EQ(scope.elapsed(), report.total_flops());
  EXPECT_EQ(report.total_params(),
            static_cast<std::uint64_t>(6 * 4 * 9 + 6 + 12 + 15 + 3 + 4 * 2 * 16));

  const ParamStore store = conv.parameters();
  EXPECT_EQ(store.trainable_count(), 6 * 4 * 9 + 6);
  EXPECT_EQ(bn.parameters().size(), 4u);
  EXPECT_EQ(bn.parameters().trainable_count(), 12);
}

TEST(Cost, ClosedFormExamples) {
  InitRng rng(0);
  Linear fc(64, 4, true, rng);
  CostReport a;
  fc.trace(Shape{1, 64}, a, "fc");
  EXPECT_EQ(a.total_params(), 260u);

  Conv2dSpec s = Conv2dSpec::same(64, 64, 3);
  s.bias = true;
  Conv2d conv(s, rng);
  CostReport b;
  conv.trace(Shape{1, 64, 56, 56}, b, "conv");
  EXPECT_EQ(b.total_params(), 36928u);
  EXPECT_EQ(b.total_flops() - 64u * 56 * 56, 115605504u);
}

TEST(Init, KaimingBoundAndDeterminism) {
  InitRng a(42), b(42);
  const Tensor wa = a.kaiming_uniform(Shape{8, 16, 3, 3}, 144);
  const Tensor wb = b.kaiming_uniform(Shape{8, 16, 3, 3}, 144);
  EXPECT_TRUE(bitwise_equal(wa, wb));
  const double bound = std::sqrt(6.0 / 144.0);
  for (double v : wa.data()) EXPECT_LE(std::abs(v), bound);
}

}  // namespace
}  // namespace sase
