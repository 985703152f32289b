// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <string>

#include "cli_helpers.hpp"
#include "sase/arch.hpp"
#include "sase/attention.hpp"
#include "sase/error.hpp"
#include "sase/flop_counter.hpp"
#include "sase/gradcheck.hpp"
#include "sase/nn.hpp"
#include "sase/ops.hpp"
#include "sase/scaling.hpp"
#include "test_helpers.hpp"

namespace sase {
namespace {

namespace fs = std::filesystem;
using testing::max_abs_diff;
using testing::read_bytes;
using testing::read_f64;
using testing::read_json;
using testing::recog_loop_oracle;
using testing::run_cli;
using testing::scratch_dir;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool within(double value, double target, double rel) {
  return std::abs(value / target - 1.0) <= rel;
}

// ---------------------------------------------------------------- 1-3

Outcome resnet_params(const std::string& variant, double target, double rel) {
  Outcome o;
  const fs::path out = scratch_dir("acc_count_" + variant);
  const int rc = run_cli({"count", "--arch", "resnet50", "--variant", variant, "--out",
                          out.string()});
  o.require(rc == 0, "count exit code " + std::to_string(rc));
  if (rc != 0) return o;
  const auto doc = read_json(out / "count.json");
  const double params = doc["total_params"].get<double>();
  o.note("params " + fmt("%.4fM", params / 1e6) + " vs " + fmt("%.2fM", target / 1e6) + " (" +
         fmt("%+.3f%%", 100.0 * (params / target - 1.0)) + ")");
  o.require(within(params, target, rel), "tolerance " + fmt("%.1f%%", 100 * rel));
  return o;
}

Outcome criterion3() {
  Outcome o = resnet_params("sase", 18.66e6, 0.05);
  const auto doc = read_json(fs::temp_directory_path() / "sase_acc_count_sase" / "count.json");
  std::uint64_t itemized = 0;
  for (const auto& [name, c] : doc["components"].items()) itemized += c["params"].get<std::uint64_t>();
  o.require(itemized == doc["total_params"].get<std::uint64_t>(), "per-component itemization");
  o.require(doc["layers"].size() > 100, "per-layer table");
  o.note("core.key " + fmt("%.3fM", doc["components"]["core.key"]["params"].get<double>() / 1e6) +
         ", core.value " +
         fmt("%.3fM", doc["components"]["core.value"]["params"].get<double>() / 1e6));
  return o;
}

// ---------------------------------------------------------------- 4

ResNetSpec micro_spec(BlockVariant variant) {
  ResNetSpec s;
  s.variant = variant;
  s.depths = {1, 1, 1};
  s.widths = {16, 16, 32};
  s.strides = {1, 2, 2};
  s.bottleneck_ratio = 2;
  s.in_channels = 2;
  s.stem_channels = 8;
  s.stem_kernel = 3;
  s.stem_stride = 1;
  s.stem_pool = false;
  s.num_classes = 3;
  s.se_reduction = 4;
  s.heads = 2;
  s.query_reduction = 2;
  s.key_reduction = 2;
  s.mhsa_stages = {2};
  return s;
}

Outcome criterion4() {
  Outcome o;
  const fs::path out = scratch_dir("acc_flops");
  o.require(run_cli({"count", "--arch", "resnet50", "--variant", "vanilla", "--out",
                     out.string()}) == 0,
            "count exit code");
  const double flops = read_json(out / "count.json")["total_flops"].get<double>();
  o.note("ResNet-50 " + fmt("%.3fG", flops / 1e9));
  o.require(within(flops, 4.10e9, 0.03), "4.10G +-3%");
  for (auto variant : {BlockVariant::vanilla, BlockVariant::se, BlockVariant::mhsa,
                       BlockVariant::sase}) {
    InitRng rng(2);
    ResNet net(micro_spec(variant), rng);
    CostReport report;
    net.trace({2, 2, 8, 8}, report, "");
    flops::Scope scope;
    net.forward(Tensor::randn({2, 2, 8, 8}, 4));
    o.require(scope.elapsed() == report.total_flops(),
              "micro-net " + to_string(variant) + " counter " + std::to_string(scope.elapsed()) +
                  " != trace " + std::to_string(report.total_flops()));
  }
  o.note("micro-net counter == trace for 4 variants");
  return o;
}

// ---------------------------------------------------------------- 5

Outcome criterion5() {
  Outcome o;
  const auto sizes = default_scaling_sizes();
  const ScalingCurve mhsa = scaling_bench(ScalingMechanism::mhsa, 64, sizes, 4);
  const ScalingCurve sase = scaling_bench(ScalingMechanism::sase_recog, 64, sizes, 4);
  o.note("mhsa slope " + fmt("%.4f", mhsa.fit.slope) + " (all points " +
         fmt("%.4f", mhsa.raw.slope) + ", core " + fmt("%.4f", mhsa.core.slope) + ")");
  o.note("sase slope " + fmt("%.4f", sase.fit.slope));
  o.require(mhsa.fit.slope >= 1.7, "mhsa slope >= 1.7");
  o.require(sase.fit.slope >= 0.95 && sase.fit.slope <= 1.05, "sase slope in [0.95,1.05]");
  double worst_core = 0.0, worst_sase = 0.0;
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    const double core = static_cast<double>(mhsa.points[i].core_flops) /
                        static_cast<double>(mhsa.points[i - 1].core_flops);
    const double total = static_cast<double>(sase.points[i].flops) /
                         static_cast<double>(sase.points[i - 1].flops);
    worst_core = std::max(worst_core, std::abs(core / 16.0 - 1.0));
    worst_sase = std::max(worst_sase, std::abs(total / 4.0 - 1.0));
  }
  o.note("doubling: mhsa core within " + fmt("%.2f%%", 100 * worst_core) + " of 16x, sase within " +
         fmt("%.2f%%", 100 * worst_sase) + " of 4x");
  o.require(worst_core <= 0.05, "mhsa core ratio 16 +-5%");
  o.require(worst_sase <= 0.10, "sase ratio 4 +-10%");
  return o;
}

// ---------------------------------------------------------------- 6

Outcome criterion6() {
  Outcome o;
  std::mt19937 gen(2024);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen); };

  double conv_worst = 0.0;
  for (int checked = 0; checked < 200;) {
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
    conv_worst = std::max(conv_worst, max_abs_diff(conv2d(x, wt, b, s),
                                                   conv2d_naive_oracle(x, wt, b, s)));
    ++checked;
  }

  double mhsa_worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::int64_t g = pick(1, 4);
    MHSAConfig cfg{g * pick(1, 4), g};
    InitRng rng(trial);
    MultiHeadSelfAttention m(cfg, rng);
    const Tensor x = Tensor::randn(Shape{pick(1, 2), cfg.channels, pick(1, 6), pick(1, 6)}, trial);
    mhsa_worst = std::max(mhsa_worst,
                          max_abs_diff(m.forward(x), mhsa_naive_oracle(x, m.wq(), m.wk(), m.wv(), g)));
  }

  double recog_worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    SASERecogConfig cfg;
    cfg.heads = pick(1, 4);
    cfg.query_reduction = pick(1, 2);
    cfg.key_reduction = pick(1, 2);
    cfg.channels = cfg.heads * cfg.query_reduction * pick(1, 3);
    cfg.stride = pick(1, 2);
    InitRng rng(trial);
    SASERecog m(cfg, rng);
    const Tensor x =
        Tensor::randn(Shape{pick(2, 3), cfg.channels, 2 * pick(1, 4), 2 * pick(1, 4)}, trial);
    const auto r = m.forward_full(x);
    recog_worst = std::max(recog_worst, max_abs_diff(r.output, recog_loop_oracle(r)));
  }
  o.note("conv " + fmt("%.2e", conv_worst) + ", mhsa " + fmt("%.2e", mhsa_worst) + ", sase_recog " +
         fmt("%.2e", recog_worst));
  o.require(conv_worst <= 1e-11, "conv2d oracle");
  o.require(mhsa_worst <= 1e-11, "mhsa oracle");
  o.require(recog_worst <= 1e-11, "sase_recog oracle");
  return o;
}

// ---------------------------------------------------------------- 7

std::vector<NamedTensor> trainable_of(const Module& m, std::vector<NamedTensor> extra) {
  const ParamStore store = m.parameters();
  for (const auto& p : store.entries()) {
    if (p.kind == ParamKind::trainable) extra.push_back(p);
  }
  return extra;
}

using Case = std::pair<std::string, std::function<GradcheckReport()>>;

void mechanism_checks(std::uint64_t seed, const GradcheckOptions& opt,
                      const std::function<void(const std::string&, const GradcheckReport&)>& sink) {
  InitRng rng(seed);
  Tensor y = Tensor::randn(Shape{2, 8, 4, 4}, seed);
  SqueezeExcitation se({8, 2}, rng);
  sink("se", gradcheck([&] { return se.forward(y); }, trainable_of(se, {{"y", y}}), opt));

  Tensor xs = Tensor::randn(Shape{2, 8, 4, 4}, seed + 1);
  Tensor xt = Tensor::randn(Shape{2, 4, 8, 8}, seed + 2);
  SkipLayerExcitation sle({8, 4}, rng);
  sink("sle", gradcheck([&] { return sle.forward(xs, xt); },
                        trainable_of(sle, {{"source", xs}, {"target", xt}}), opt));

  SASESynthConfig sc;
  sc.heads = 4;
  sc.source_channels = 8;
  sc.target_channels = 4;
  sc.noise_std = 0.5;
  sc.noise_seed = seed;
  sc.dilation = 2;
  SASESynth synth(sc, rng);
  sink("sase_synth", gradcheck([&] { return synth.forward(xs, xt); },
                               trainable_of(synth, {{"source", xs}, {"target", xt}}), opt));

  SASERecogConfig rc;
  rc.channels = 8;
  rc.heads = 2;
  rc.query_reduction = 1;
  rc.key_reduction = 1;
  rc.stride = seed % 2 == 0 ? 1 : 2;
  SASERecog rec(rc, rng);
  Tensor xr = Tensor::randn(Shape{2, 8, 4, 4}, seed + 3);
  sink("sase_recog", gradcheck([&] { return rec.forward(xr); }, trainable_of(rec, {{"x", xr}}), opt));

  MultiHeadSelfAttention mhsa({8, 2}, rng);
  Tensor xm = Tensor::randn(Shape{1, 8, 3, 3}, seed + 4);
  sink("mhsa", gradcheck([&] { return mhsa.forward(xm); }, trainable_of(mhsa, {{"x", xm}}), opt));
}

void primitive_checks(std::uint64_t seed, const GradcheckOptions& opt,
                      const std::function<void(const std::string&, const GradcheckReport&)>& sink) {
  const std::uint64_t s = 100 * seed;
  Tensor x = Tensor::randn(Shape{2, 4, 6, 6}, s + 1);
  Tensor w3 = Tensor::randn(Shape{6, 2, 3, 3}, s + 2);
  Tensor b6 = Tensor::randn(Shape{6}, s + 3);
  Tensor wt = Tensor::randn(Shape{4, 3, 4, 4}, s + 4);
  Tensor small = Tensor::randn(Shape{2, 4, 3, 3}, s + 5);
  Tensor lw = Tensor::randn(Shape{3, 5}, s + 6);
  Tensor lx = Tensor::randn(Shape{2, 5}, s + 7);
  Tensor lb = Tensor::randn(Shape{3}, s + 8);
  Tensor sm = Tensor::randn(Shape{2, 5, 3}, s + 9);
  auto bn = BatchNormState::create(4);
  std::copy_n(Tensor::uniform(Shape{4}, s + 10, 0.5, 1.5).data().begin(), 4,
              bn.gamma.mutable_data().begin());
  auto bn_eval = BatchNormState::create(4);
  bn_eval.training = false;
  std::copy_n(Tensor::uniform(Shape{4}, s + 11, 0.5, 2.0).data().begin(), 4,
              bn_eval.running_var.mutable_data().begin());

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
      {"conv_transpose2d",
       [&] { return exp(scale(conv_transpose2d(small, wt, Tensor(), up), 0.2)); }},
      {"global_avg_pool", [&] { return exp(global_avg_pool(x)); }},
      {"adaptive_avg_pool", [&] { return exp(adaptive_avg_pool(x, 4, 4)); }},
      {"avg_pool2d", [&] { return exp(avg_pool2d(x, 2, 2)); }},
      {"max_pool2d", [&] { return exp(max_pool2d(x, 3, 2, 1)); }},
      {"glu", [&] { return mul(glu(x), glu(x)); }},
      {"upsample_nearest", [&] { return exp(upsample_nearest(small, 2)); }},
      {"resize_bilinear", [&] { return exp(resize_bilinear(small, 7, 5)); }},
      {"inject_noise", [&] { return mul(inject_noise(small, seed, 0.7), small); }},
      {"batchnorm_train", [&] { return mul(batchnorm(x, bn), x); }},
      {"batchnorm_eval", [&] { return mul(batchnorm(x, bn_eval), x); }},
      {"linear", [&] { return mul(linear(lx, lw, lb), linear(lx, lw, lb)); }},
      {"relu", [&] { return mul(relu(x), x); }},
      {"leaky_relu", [&] { return mul(leaky_relu(x, 0.1), x); }},
      {"sigmoid", [&] { return mul(sigmoid(x), x); }},
      {"tanh", [&] { return mul(tanh(x), x); }},
      {"softmax", [&] { return mul(softmax(sm, 1), sm); }},
      {"matmul", [&] { return mul(matmul(lx, transpose(lw)), matmul(lx, transpose(lw))); }},
  };
  const std::vector<NamedTensor> wrt = {
      {"x", x},   {"w3", w3},   {"b6", b6},     {"wt", wt},          {"small", small},
      {"lw", lw}, {"lx", lx},   {"lb", lb},     {"sm", sm},          {"gamma", bn.gamma},
      {"beta", bn.beta},        {"gamma_eval", bn_eval.gamma}};
  for (const auto& [name, fn] : cases) sink(name, gradcheck(fn, wrt, opt));
}

Outcome criterion7() {
  Outcome o;
  std::map<std::string, double> worst;
  std::map<std::string, int> passes;
  auto sink = [&](const std::string& name, const GradcheckReport& r) {
    worst[name] = std::max(worst[name], r.max_rel_err);
    passes[name] += r.passed && r.max_rel_err <= 1e-4 ? 1 : 0;
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GradcheckOptions opt;
    opt.seed = seed;
    opt.tolerance = 1e-4;
    mechanism_checks(seed, opt, sink);
    primitive_checks(seed, opt, sink);
  }
  double overall = 0.0;
  for (const auto& [name, w] : worst) {
    overall = std::max(overall, w);
    o.require(passes[name] == 10, name + " (" + std::to_string(passes[name]) + "/10, max " +
                                      fmt("%.2e", w) + ")");
  }
  o.note(std::to_string(worst.size()) + " checks x 10 seeds, max rel err " + fmt("%.2e", overall));
  return o;
}

// ---------------------------------------------------------------- 8

Outcome criterion8() {
  Outcome o;
  // g = 1: W collapses to the single query up to eps / K.
  double single_head_excess = -INFINITY;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    InitRng rng(seed);
    SASESynthConfig c;
    c.heads = 1;
    c.source_channels = 16;
    c.target_channels = 8;
    SASESynth m(c, rng);
    const auto r = m.forward_full(Tensor::randn(Shape{2, 16, 8, 8}, seed + 1),
                                  Tensor::randn(Shape{2, 8, 16, 16}, seed + 2));
    for (std::int64_t b = 0; b < 2; ++b) {
      for (std::int64_t ch = 0; ch < 8; ++ch) {
        for (std::int64_t i = 0; i < 16; ++i) {
          for (std::int64_t j = 0; j < 16; ++j) {
            const double k = r.keys[0].at({b, 0, i, j});
            const double gap = std::abs(r.weight.at({b, ch, i, j}) - r.queries[0].at({b, ch, 0, 0}));
            single_head_excess = std::max(single_head_excess, gap - c.epsilon / k);
          }
        }
      }
    }
  }
  o.require(single_head_excess <= 0.0, "g=1 within eps/K");

  double sle_gap = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    InitRng rng(seed);
    SqueezeExcitation se({32, 4}, rng);
    SLEConfig cfg;
    cfg.source_channels = 32;
    cfg.target_channels = 32;
    cfg.pool_size = 1;
    cfg.leaky_slope = 0.0;
    cfg.hidden = 8;
    cfg.bias = true;
    SkipLayerExcitation sle(cfg, rng);
    auto b1 = se.fc1().bias().mutable_data();
    for (std::size_t i = 0; i < b1.size(); ++i) b1[i] = 0.1 * static_cast<double>(i) - 0.3;
    match_sle_to_se(se, sle);
    const Tensor y = Tensor::randn(Shape{2, 32, 6, 5}, seed + 10);
    sle_gap = std::max(sle_gap, max_abs_diff(sle.forward(y, y), se.forward(y)));
  }
  o.require(sle_gap <= 1e-12, "SLE(X=Y) == SE");

  const auto q = [](double v) { return Tensor::full(Shape{1, 1, 1, 1}, v); };
  const double hand = combine_heads({q(0.2), q(0.8)}, {q(1.0), q(3.0)}, 0.0).item();
  o.require(hand == (0.2 * 1.0 + 0.8 * 3.0) / 4.0 && std::abs(hand - 0.65) <= 1e-15,
            "hand example 0.65");
  o.note("g=1 slack " + fmt("%.2e", -single_head_excess) + ", SLE-SE " + fmt("%.2e", sle_gap) +
         ", hand W=" + fmt("%.17g", hand));
  return o;
}

// ---------------------------------------------------------------- 9

Outcome criterion9() {
  Outcome o;
  std::mt19937 gen(11);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen); };
  double norm_worst = 0.0;
  int out_of_range = 0;
  for (int trial = 0; trial < 50; ++trial) {
    SASERecogConfig cfg;
    cfg.heads = pick(1, 4);
    cfg.query_reduction = pick(1, 2);
    cfg.key_reduction = pick(1, 2);
    cfg.channels = cfg.heads * cfg.query_reduction * pick(1, 3);
    cfg.stride = pick(1, 2);
    InitRng rng(trial);
    SASERecog m(cfg, rng);
    const auto r = m.forward_full(
        Tensor::randn(Shape{pick(2, 3), cfg.channels, 2 * pick(1, 4), 2 * pick(1, 4)}, trial));
    for (const auto& a : r.attention) {
      for (double v : a.data()) out_of_range += v >= 0.0 && v <= 1.0 ? 0 : 1;
      const Tensor total = sum(a, {1});
      for (double v : total.data()) norm_worst = std::max(norm_worst, std::abs(v - 1.0));
    }
  }
  o.require(norm_worst <= 1e-10, "recognition softmax normalization");
  o.require(out_of_range == 0, "attention weights in [0,1]");

  int violations = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::int64_t g = pick(1, 4);
    SASESynthConfig cfg;
    cfg.heads = g;
    cfg.source_channels = g * pick(1, 4);
    cfg.target_channels = pick(1, 6);
    cfg.dilation = pick(1, 2);
    if (trial % 3 == 0) {
      cfg.noise_std = 0.5;
      cfg.noise_seed = trial;
    }
    InitRng rng(trial);
    SASESynth m(cfg, rng);
    const std::int64_t hs = pick(4, 8);
    const auto r = m.forward_full(Tensor::randn(Shape{1, cfg.source_channels, hs, hs}, trial),
                                  Tensor::randn(Shape{1, cfg.target_channels, 2 * hs, 2 * hs}, trial + 1));
    Tensor key_sum = r.keys[0];
    for (std::size_t i = 1; i < r.keys.size(); ++i) key_sum = add(key_sum, r.keys[i]);
    for (std::int64_t c = 0; c < cfg.target_channels; ++c) {
      double lo = 1.0, hi = 0.0;
      for (const auto& qv : r.queries) {
        lo = std::min(lo, qv.at({0, c, 0, 0}));
        hi = std::max(hi, qv.at({0, c, 0, 0}));
      }
      for (std::int64_t i = 0; i < 2 * hs; ++i) {
        for (std::int64_t j = 0; j < 2 * hs; ++j) {
          const double w = r.weight.at({0, c, i, j});
          const double s = key_sum.at({0, 0, i, j});
          if (w < lo - cfg.epsilon / s || w > hi + 1e-15) ++violations;
        }
      }
    }
  }
  o.require(violations == 0, std::to_string(violations) + " convex-bound violations");
  o.note("max |sum A - 1| " + fmt("%.2e", norm_worst) + ", convex bounds on 50 synth configs");
  return o;
}

// ---------------------------------------------------------------- 10

Outcome criterion10() {
  Outcome o;
  const fs::path out = scratch_dir("acc_gen");
  std::map<std::string, std::uint64_t> params;
  for (const std::string kind : {"sle", "sase"}) {
    for (const std::string target : {"256", "1024"}) {
      const fs::path dir = out / (kind + target);
      o.require(run_cli({"count", "--arch", "generator", "--skips", kind, "--target", target,
                         "--out", dir.string()}) == 0,
                "count generator");
      params[kind + target] = read_json(dir / "count.json")["total_params"].get<std::uint64_t>();
    }
  }
  o.require(params["sase256"] < params["sle256"], "sase < sle params at 256");
  o.require(params["sase1024"] < params["sle1024"], "sase < sle params at 1024");
  o.note("params sase/sle " + fmt("%.3fM", params["sase1024"] / 1e6) + "/" +
         fmt("%.3fM", params["sle1024"] / 1e6) + " at 1024");

  const auto start = std::chrono::steady_clock::now();
  const int rc = run_cli({"gen-forward", "--seed", "0", "--latent", "256", "--target", "256",
                          "--skips", "sase", "--out", (out / "fwd").string()});
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.require(rc == 0, "gen-forward exit code");
  if (rc != 0) return o;
  o.require(seconds < 10.0, "forward under 10 s");
  const auto doc = read_json(out / "fwd" / "gen_forward.json");
  o.require(doc["image"]["shape"] == nlohmann::json::array({3, 256, 256}), "image shape");
  for (double v : read_f64(out / "fwd" / "image.f64")) {
    if (!std::isfinite(v) || v <= -1.0 || v >= 1.0) {
      o.require(false, "image finite in (-1,1)");
      break;
    }
  }
  std::map<std::string, int> heads_per_skip;
  for (const auto& m : doc["masks"]) {
    const std::int64_t target = m["target"];
    heads_per_skip[std::to_string(m["source"].get<int>()) + "_" + std::to_string(target)]++;
    o.require(m["shape"] == nlohmann::json::array({1, 1, target, target}), "mask shape");
    o.require(m["min"].get<double>() > 0.0 && m["max"].get<double>() < 1.0, "mask range");
  }
  o.require(heads_per_skip.size() == 2, "two skip pairs at 256");
  for (const auto& [skip, n] : heads_per_skip) o.require(n == 4, "4 masks for skip " + skip);
  o.note("forward " + fmt("%.2f s", seconds) + ", " + std::to_string(doc["masks"].size()) +
         " masks");
  return o;
}

// ---------------------------------------------------------------- 11

Outcome criterion11() {
  Outcome o;
  const fs::path a = scratch_dir("acc_train_a"), b = scratch_dir("acc_train_b");
  for (const auto& dir : {a, b}) {
    const int rc = run_cli({"train", "--variant", "sase", "--steps", "500", "--seed", "1", "--out",
                            dir.string()});
    o.require(rc == 0, "train exit code " + std::to_string(rc));
    if (rc != 0) return o;
  }
  const auto summary = read_json(a / "summary.json");
  const double initial = summary["initial_loss"], final_loss = summary["final_loss"];
  const double acc = summary["final_acc"];
  o.note("loss " + fmt("%.4f", initial) + " -> " + fmt("%.4f", final_loss) + ", acc " +
         fmt("%.3f", acc));
  o.require(final_loss <= 0.5 * initial, "loss <= 0.5x initial");
  o.require(acc >= 0.85, "accuracy >= 85%");
  o.require(read_bytes(a / "metrics.csv") == read_bytes(b / "metrics.csv"), "bitwise metrics");
  o.require(read_bytes(a / "checkpoint.sase") == read_bytes(b / "checkpoint.sase"),
            "bitwise checkpoint");
  return o;
}

}  // namespace
}  // namespace sase

int main() {
  using namespace sase;
  struct Criterion {
    int id;
    const char* title;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "ResNet-50 params", 5, [] { return resnet_params("vanilla", 25.56e6, 0.005); }},
      {2, "SE-ResNet-50 params", 5, [] { return resnet_params("se", 28.09e6, 0.005); }},
      {3, "SASE-ResNet-50 params", 10, criterion3},
      {4, "FLOP accounting", 60, criterion4},
      {5, "complexity scaling", 30, criterion5},
      {6, "oracle equivalence", 120, criterion6},
      {7, "gradient suite", 300, criterion7},
      {8, "degeneracy ladder", 60, criterion8},
      {9, "normalization and convex bounds", 60, criterion9},
      {10, "generator structure", 60, criterion10},
      {11, "learning smoke test", 180, criterion11},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail += std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (seconds > c.budget_s) {
      o.pass = false;
      o.detail += "; over time budget " + std::to_string(static_cast<int>(c.budget_s)) + " s";
    }
    failed += o.pass ? 0 : 1;
    std::printf("[%s] %2d %-32s %7.2f s  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.title, seconds,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
