#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "sase/checkpoint.hpp"
#include "sase/config.hpp"
#include "sase/ops.hpp"
#include "sase/optim.hpp"
#include "sase/train.hpp"
#include "test_helpers.hpp"

namespace sase {
namespace {

// ---------------------------------------------------------------- config

TEST(Config, ParsesSectionsAndComments) {
  const Config c = Config::parse(
      "seed = 4\n"
      "# comment\n"
      "[train]\n"
      "steps = 20   ; trailing\n"
      "lr=0.5\n"
      "timing = yes\n"
      "\n"
      "[model]\n"
      "sizes = 4, 8,16\n");
  EXPECT_EQ(c.get_u64("seed", 0), 4u);
  EXPECT_EQ(c.get_int("train.steps", 0), 20);
  EXPECT_DOUBLE_EQ(c.get_double("train.lr", 0.0), 0.5);
  EXPECT_TRUE(c.get_bool("train.timing", false));
  EXPECT_EQ(c.get_int_list("model.sizes", {}), (std::vector<std::int64_t>{4, 8, 16}));
  EXPECT_EQ(c.get_int("train.missing", 7), 7);
}

TEST(Config, FlagsOverrideFile) {
  Config c = Config::parse("[train]\nsteps = 20\n");
  c.set("train.steps", "30");
  EXPECT_EQ(c.get_int("train.steps", 0), 30);
}

TEST(Config, RoundTripsThroughText) {
  Config c = Config::parse("seed = 1\n[b]\ny = 2\n[a]\nx = 3\n");
  const Config d = Config::parse(c.to_string());
  EXPECT_EQ(c.values(), d.values());
}

TEST(Config, Errors) {
  EXPECT_THROW(Config::parse("[train\n"), ConfigError);
  EXPECT_THROW(Config::parse("novalue\n"), ConfigError);
  EXPECT_THROW(Config::parse("a = 1\na = 2\n"), ConfigError);
  const Config c = Config::parse("n = 12x\nb = maybe\n");
  EXPECT_THROW(c.get_int("n", 0), ConfigError);
  EXPECT_THROW(c.get_bool("b", false), ConfigError);
  EXPECT_THROW(Config::load("/nonexistent/config.ini"), ConfigError);
}

// ---------------------------------------------------------------- optimizers

TEST(Adam, ZeroBetasGiveScaledSignStep) {
  for (double g0 : {3.0, -0.25, 1e-9}) {
    Tensor w = Tensor::from_values({1}, {1.0}).set_requires_grad(true);
    AdamOptions o{0.1, 0.0, 0.0, 1e-8};
    Adam adam({w}, o);
    sum_all(scale(w, g0)).backward();
    adam.step();
    EXPECT_NEAR(w.item(), 1.0 - 0.1 * g0 / (std::abs(g0) + 1e-8), 1e-15) << g0;
  }
}

TEST(Adam, BiasCorrectedFirstStepAndSequence) {
  // Independent scalar transcription of the update rule.
  Tensor w = Tensor::from_values({1}, {0.5}).set_requires_grad(true);
  AdamOptions o{0.05, 0.9, 0.999, 1e-8};
  Adam adam({w}, o);
  double x = 0.5, m = 0.0, v = 0.0;
  for (int t = 1; t <= 5; ++t) {
    adam.zero_grad();
    sum_all(mul(w, w)).backward();  // grad 2w
    adam.step();
    const double g = 2.0 * x;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.05 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(w.item(), x, 1e-15) << t;
  }
  EXPECT_EQ(AdamOptions::generator_defaults().beta1, 0.5);
  EXPECT_EQ(AdamOptions::generator_defaults().beta2, 0.999);
}

TEST(SGD, MomentumSequence) {
  Tensor w = Tensor::from_values({2}, {1.0, -2.0}).set_requires_grad(true);
  SGD sgd({w}, {0.1, 0.5});
  double x[2] = {1.0, -2.0}, v[2] = {0.0, 0.0};
  for (int t = 0; t < 4; ++t) {
    sgd.zero_grad();
    sum_all(mul(w, w)).backward();
    EXPECT_NEAR(sgd.grad_norm(), std::hypot(2 * x[0], 2 * x[1]), 1e-14);
    sgd.step();
    for (int i = 0; i < 2; ++i) {
      v[i] = 0.5 * v[i] + 2.0 * x[i];
      x[i] -= 0.1 * v[i];
      EXPECT_NEAR(w.data()[i], x[i], 1e-15);
    }
  }
}

TEST(Optimizer, RejectsBadOptions) {
  Tensor w = Tensor::zeros({1}).set_requires_grad(true);
  EXPECT_THROW(Adam({w}, AdamOptions{0.1, 1.0, 0.9, 1e-8}), ConfigError);
  EXPECT_THROW(SGD({w}, SGDOptions{-1.0, 0.0}), ConfigError);
}

// ---------------------------------------------------------------- checkpoint

TEST(Checkpoint, RoundTripReproducesForwardBitwise) {
  InitRng r1(3), r2(99);
  ResNet a(tiny_classifier_spec(BlockVariant::sase), r1);
  ResNet b(tiny_classifier_spec(BlockVariant::sase), r2);
  // Move running statistics away from their initial values.
  (void)a.forward(Tensor::randn({4, 1, 16, 16}, 5));
  a.set_training(false);
  b.set_training(false);
  const std::string blob = encode_checkpoint(a.parameters());
  EXPECT_EQ(blob.substr(0, 5), "SASE1");
  decode_checkpoint(blob, b.parameters());
  const Tensor x = Tensor::randn({3, 1, 16, 16}, 8);
  EXPECT_TRUE(testing::bitwise_equal(a.forward(x), b.forward(x)));

  const auto manifest = read_checkpoint_manifest(blob);
  ASSERT_EQ(manifest.size(), a.parameters().size());
  EXPECT_EQ(manifest[0].offset, 0u);
  EXPECT_EQ(manifest[1].offset, manifest[0].bytes);
}

TEST(Checkpoint, FileRoundTripAndSinglePrecision) {
  const auto path = std::filesystem::temp_directory_path() / "sase_ckpt_test.bin";
  ParamStore src, dst;
  src.add("w", Tensor::randn({2, 3}, 1, 0.0, 1.0, DType::f32));
  src.add("b", Tensor::randn({3}, 2), ParamKind::buffer);
  dst.add("w", Tensor::zeros({2, 3}, DType::f32));
  dst.add("b", Tensor::zeros({3}), ParamKind::buffer);
  save_checkpoint(path.string(), src);
  load_checkpoint(path.string(), dst);
  EXPECT_TRUE(testing::bitwise_equal(src.at("w").tensor, dst.at("w").tensor));
  EXPECT_TRUE(testing::bitwise_equal(src.at("b").tensor, dst.at("b").tensor));
  const auto manifest = read_checkpoint_manifest(encode_checkpoint(src));
  EXPECT_EQ(manifest[0].bytes, 24u);
  EXPECT_EQ(manifest[1].kind, ParamKind::buffer);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsMismatches) {
  ParamStore src, other;
  src.add("w", Tensor::randn({2, 3}, 1));
  other.add("w", Tensor::zeros({3, 2}));
  const std::string blob = encode_checkpoint(src);
  EXPECT_THROW(decode_checkpoint(blob, other), ConfigError);
  ParamStore extra;
  extra.add("w", Tensor::zeros({2, 3}));
  extra.add("v", Tensor::zeros({1}));
  EXPECT_THROW(decode_checkpoint(blob, extra), ConfigError);
  EXPECT_THROW(decode_checkpoint("SASE2" + blob.substr(5), src), ConfigError);
  EXPECT_THROW(decode_checkpoint(blob.substr(0, blob.size() - 4), src), ConfigError);
}

// ---------------------------------------------------------------- blob task

TEST(BlobDataset, BalancedAndDeterministic) {
  const auto a = make_blob_dataset(7, 400);
  const auto b = make_blob_dataset(7, 400);
  EXPECT_TRUE(testing::bitwise_equal(a.images, b.images));
  std::int64_t hist[4] = {0, 0, 0, 0};
  for (auto l : a.labels) ++hist[l];
  for (auto h : hist) EXPECT_EQ(h, 100);
  EXPECT_FALSE(testing::bitwise_equal(a.images, make_blob_dataset(8, 400).images));
  EXPECT_THROW(make_blob_dataset(1, 0), ConfigError);
}

TEST(BlobDataset, CentreIsArgmaxOfNoiselessSample) {
  BlobOptions o;
  o.noise_std = 0.0;
  const auto ds = make_blob_dataset(3, 40, o);
  const std::int64_t s = o.size;
  for (std::int64_t i = 0; i < 40; ++i) {
    const double* img = ds.images.data().data() + i * s * s;
    const std::int64_t arg = std::max_element(img, img + s * s) - img;
    const auto [cy, cx] = ds.centers[static_cast<std::size_t>(i)];
    EXPECT_EQ(arg, cy * s + cx);
    const std::int64_t label = ds.labels[static_cast<std::size_t>(i)];
    EXPECT_EQ(label, (cy >= s / 2 ? 2 : 0) + (cx >= s / 2 ? 1 : 0));
  }
}

// ---------------------------------------------------------------- training

TrainResult short_run(const TrainOptions& o) {
  InitRng rng(o.seed);
  ResNet model(tiny_classifier_spec(o.variant), rng);
  return train_classifier(o, model);
}

TEST(Train, ZeroLearningRateKeepsLoss) {
  for (const char* opt : {"adam", "sgd"}) {
    TrainOptions o;
    o.steps = 4;
    o.samples = 16;
    o.optimizer = opt;
    o.adam.lr = 0.0;
    o.sgd.lr = 0.0;
    const auto r = short_run(o);
    for (const auto& rec : r.records) EXPECT_NEAR(rec.loss, r.initial_loss, 1e-12) << opt;
  }
}

TEST(Train, BitwiseReproducibleMetrics) {
  TrainOptions o;
  o.steps = 5;
  o.samples = 16;
  o.batch_size = 8;
  const auto a = short_run(o);
  const auto b = short_run(o);
  EXPECT_EQ(a.metrics_csv(), b.metrics_csv());
  EXPECT_EQ(a.metrics_csv().substr(0, 30), "step,loss,acc,grad_norm,wall_m");
  EXPECT_EQ(a.records.size(), 5u);
  EXPECT_EQ(a.records.back().wall_ms, 0.0);
}

TEST(Train, LossDecreasesOnShortRun) {
  TrainOptions o;
  o.steps = 30;
  o.samples = 16;
  const auto r = short_run(o);
  EXPECT_LT(r.records.back().loss, r.initial_loss);
}

TEST(Train, DivergenceReportsLastGoodStep) {
  TrainOptions o;
  o.steps = 50;
  o.samples = 16;
  o.optimizer = "sgd";
  o.sgd = {1e300, 0.0};
  try {
    short_run(o);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.last_good_step(), 0);
    EXPECT_LT(e.last_good_step(), 50);
  }
}

TEST(Train, RejectsBadOptions) {
  TrainOptions o;
  o.optimizer = "rmsprop";
  EXPECT_THROW(o.validate(), ConfigError);
  o.optimizer = "adam";
  o.batch_size = 1;
  EXPECT_THROW(o.validate(), ConfigError);
}

}  // namespace
}  // namespace sase
