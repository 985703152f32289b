#include "cli.hpp"

#include <CLI11.hpp>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "sase/arch.hpp"
#include "sase/checkpoint.hpp"
#include "sase/config.hpp"
#include "sase/error.hpp"
#include "sase/gradcheck.hpp"
#include "sase/ops.hpp"
#include "sase/scaling.hpp"
#include "sase/train.hpp"

namespace sase::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A subcommand flag mirrored by a config key; flags override the file.
struct Binding {
  CLI::Option* option = nullptr;
  std::string key;
  std::string* value = nullptr;
};

class Command {
 public:
  Command(CLI::App& app, const std::string& name, const std::string& help)
      : sub_(app.add_subcommand(name, help)) {
    bind("--seed", "seed", "Random seed (u64)");
    bind("--out", "out", "Output directory");
    sub_->add_option("--config", config_path_, "Sectioned key=value config file");
  }

  void bind(const std::string& flag, const std::string& key, const std::string& help) {
    storage_.emplace_back();
    std::string* slot = &storage_.back();
    bindings_.push_back({sub_->add_option(flag, *slot, help + " [" + key + "]"), key, slot});
  }

  void add_flag(const std::string& flag, const std::string& key, const std::string& help) {
    storage_.emplace_back();
    std::string* slot = &storage_.back();
    CLI::Option* opt = sub_->add_flag(flag)->description(help + " [" + key + "]");
    bindings_.push_back({opt, key, slot});
    flags_.push_back(opt);
  }

  CLI::App* app() const { return sub_; }

  Config resolve() const {
    Config cfg = config_path_.empty() ? Config() : Config::load(config_path_);
    for (const auto& b : bindings_) {
      if (b.option->count() == 0) continue;
      const bool is_flag = std::find(flags_.begin(), flags_.end(), b.option) != flags_.end();
      cfg.set(b.key, is_flag ? "true" : *b.value);
    }
    return cfg;
  }

 private:
  CLI::App* sub_;
  std::string config_path_;
  std::deque<std::string> storage_;
  std::vector<Binding> bindings_;
  std::vector<CLI::Option*> flags_;
};

std::uint64_t require_seed(const Config& cfg, const char* command) {
  if (!cfg.has("seed")) {
    throw UsageError(std::string(command) + ": a seed is required (--seed or 'seed' in config)");
  }
  return cfg.get_u64("seed", 0);
}

fs::path output_dir(const Config& cfg) {
  fs::path out = cfg.get_string("out", ".");
  fs::create_directories(out);
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f << content;
}

void write_raw(const fs::path& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  auto d = t.data();
  f.write(reinterpret_cast<const char*>(d.data()),
          static_cast<std::streamsize>(d.size() * sizeof(double)));
}

// ---------------------------------------------------------------- gradcheck

const std::vector<std::string>& gradcheck_modules() {
  static const std::vector<std::string> names{
      "se", "sle", "sase_synth", "sase_recog", "mhsa", "bottleneck_vanilla", "bottleneck_se",
      "bottleneck_mhsa", "bottleneck_sase"};
  return names;
}

std::vector<NamedTensor> with_params(std::vector<NamedTensor> inputs, const Module& m) {
  const ParamStore store = m.parameters();
  for (const auto& e : store.entries()) {
    if (e.kind == ParamKind::trainable) inputs.push_back(e);
  }
  return inputs;
}

GradcheckReport run_gradcheck(const std::string& name, std::uint64_t seed,
                              const GradcheckOptions& options) {
  InitRng rng(seed);
  if (name == "se") {
    SqueezeExcitation m({16, 4}, rng);
    return gradcheck_layer(m, {2, 16, 5, 5}, options);
  }
  if (name == "sle" || name == "sase_synth") {
    std::unique_ptr<SkipModule> m;
    if (name == "sle") {
      m = std::make_unique<SkipLayerExcitation>(SLEConfig{8, 6}, rng);
    } else {
      SASESynthConfig c;
      c.heads = 4;
      c.source_channels = 8;
      c.target_channels = 6;
      c.channel_reduction = 2;
      c.spatial_reduction = 2;
      c.dilation = 2;
      m = std::make_unique<SASESynth>(c, rng);
    }
    Tensor xs = Tensor::randn({2, 8, 8, 8}, seed + 1);
    Tensor xt = Tensor::randn({2, 6, 16, 16}, seed + 2);
    return gradcheck([&] { return m->forward(xs, xt); },
                     with_params({{"source", xs}, {"target", xt}}, *m), options);
  }
  if (name == "sase_recog") {
    SASERecogConfig c;
    c.channels = 8;
    c.heads = 2;
    c.query_reduction = 2;
    c.key_reduction = 2;
    SASERecog m(c, rng);
    return gradcheck_layer(m, {2, 8, 5, 5}, options);
  }
  if (name == "mhsa") {
    MultiHeadSelfAttention m({8, 2}, rng);
    return gradcheck_layer(m, {2, 8, 3, 3}, options);
  }
  if (name.starts_with("bottleneck_")) {
    BlockSpec s;
    s.variant = parse_block_variant(name.substr(11));
    s.in_channels = 16;
    s.channels = 16;
    s.bottleneck_ratio = 2;
    s.se_reduction = 4;
    s.heads = 2;
    s.query_reduction = 2;
    s.key_reduction = 2;
    Bottleneck m(s, rng);
    return gradcheck_layer(m, {2, 16, 4, 4}, options);
  }
  std::string known;
  for (const auto& n : gradcheck_modules()) known += (known.empty() ? "" : ", ") + n;
  throw UsageError("gradcheck: unknown module '" + name + "' (expected one of " + known + ")");
}

int cmd_gradcheck(const Config& cfg) {
  const std::string module = cfg.get_string("gradcheck.module", "");
  if (module.empty()) throw UsageError("gradcheck: --module is required");
  if (parse_dtype(cfg.get_string("gradcheck.dtype", "f64")) != DType::f64) {
    throw UsageError("gradcheck: finite differences need f64; refusing dtype " +
                     cfg.get_string("gradcheck.dtype", ""));
  }
  const std::uint64_t seed = require_seed(cfg, "gradcheck");
  GradcheckOptions opt;
  opt.seed = seed;
  opt.tolerance = cfg.get_double("gradcheck.tolerance", opt.tolerance);
  const GradcheckReport report = run_gradcheck(module, seed, opt);

  ojson doc;
  doc["module"] = module;
  doc["seed"] = seed;
  doc["dtype"] = "f64";
  doc["report"] = ojson::parse(report.to_json());
  const fs::path path = output_dir(cfg) / ("gradcheck_" + module + ".json");
  write_file(path, doc.dump(2) + "\n");
  std::cout << "gradcheck " << module << ": " << (report.passed ? "pass" : "FAIL")
            << " max_rel_err=" << report.max_rel_err << " -> " << path.string() << "\n";
  if (!report.failure.empty()) std::cerr << "non-finite gradient at " << report.failure << "\n";
  return report.passed ? kOk : kNumeric;
}

// ---------------------------------------------------------------- count

// Coarse component of a ResNet layer path, e.g. "layer2.1.core.head0.key.bn"
// -> "core.key".
std::string component_of(const std::string& name) {
  if (!name.starts_with("layer")) return name.substr(0, name.find('.'));
  std::vector<std::string> parts;
  std::stringstream ss(name);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  if (parts.size() < 3) return name;
  if (parts[2] == "core" && parts.size() > 4 && parts[3].starts_with("head")) {
    return "core." + parts[4];
  }
  if (parts[2] == "core" && parts.size() > 3 && parts[3].ends_with("_proj")) return "core.proj";
  if (parts[2] == "core" && parts.size() > 3 && parts[3] == "core") return "core.attention";
  if (parts[2] == "conv1" || parts[2] == "bn1") return "reduce";
  if (parts[2] == "conv3" || parts[2] == "bn3") return "expand";
  return parts[2];
}

double resnet50_target(BlockVariant v) {
  switch (v) {
    case BlockVariant::vanilla:
      return 25.56e6;
    case BlockVariant::se:
      return 28.09e6;
    case BlockVariant::sase:
      return 18.66e6;
    case BlockVariant::mhsa:
      return 0.0;
  }
  return 0.0;
}

GeneratorSpec generator_spec(const Config& cfg) {
  GeneratorSpec g;
  g.latent_dim = cfg.get_int("generator.latent", g.latent_dim);
  g.resolution = cfg.get_int("generator.target", g.resolution);
  g.ngf = cfg.get_int("generator.ngf", g.ngf);
  g.skip_kind = parse_skip_kind(cfg.get_string("generator.skips", "sle"));
  g.sase_heads = cfg.get_int("generator.heads", g.sase_heads);
  if (cfg.has("generator.skip_pairs")) {
    const auto flat = cfg.get_int_list("generator.skip_pairs", {});
    if (flat.size() % 2 != 0) throw ConfigError("generator.skip_pairs needs source,target pairs");
    std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
    for (std::size_t i = 0; i < flat.size(); i += 2) pairs.emplace_back(flat[i], flat[i + 1]);
    g.skip_pairs = pairs;
  }
  if (cfg.has("generator.mask_noise")) g.mask_noise_std = cfg.get_double("generator.mask_noise", 0);
  g.block_noise_std = cfg.get_double("generator.block_noise", 0.0);
  return g;
}

int cmd_count(const Config& cfg) {
  const std::string arch = cfg.get_string("count.arch", "resnet50");
  const fs::path out = output_dir(cfg);
  CostReport report;
  ojson doc;
  doc["arch"] = arch;
  if (arch == "resnet50") {
    const BlockVariant variant = parse_block_variant(cfg.get_string("count.variant", "vanilla"));
    const std::int64_t input = cfg.get_int("count.input", 224);
    InitRng rng(0);
    ResNet net(ResNetSpec::resnet50(variant), rng);
    net.trace(Shape{1, 3, input, input}, report, "");
    doc["variant"] = to_string(variant);
    doc["input"] = {1, 3, input, input};
    doc["total_params"] = report.total_params();
    doc["total_flops"] = report.total_flops();
    if (const double target = resnet50_target(variant); target > 0.0) {
      doc["target_params"] = target;
      doc["relative_gap"] = static_cast<double>(report.total_params()) / target - 1.0;
    }
    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> groups;
    for (const auto& e : report.entries()) {
      auto& g = groups[component_of(e.name)];
      g.first += e.params;
      g.second += e.flops;
    }
    ojson breakdown = ojson::object();
    for (const auto& [k, v] : groups) breakdown[k] = {{"params", v.first}, {"flops", v.second}};
    doc["components"] = std::move(breakdown);
  } else if (arch == "generator") {
    const GeneratorSpec spec = generator_spec(cfg);
    InitRng rng(0);
    Generator gen(spec, rng);
    gen.trace(1, report, "");
    std::uint64_t skip_params = 0, skip_flops = 0;
    for (const auto& e : report.entries()) {
      if (e.name.starts_with("skip")) {
        skip_params += e.params;
        skip_flops += e.flops;
      }
    }
    doc["skips"] = to_string(spec.skip_kind);
    doc["target"] = spec.resolution;
    doc["ngf"] = spec.ngf;
    doc["total_params"] = report.total_params();
    doc["total_flops"] = report.total_flops();
    doc["skip_params"] = skip_params;
    doc["skip_flops"] = skip_flops;
    doc["params_without_skips"] = report.total_params() - skip_params;
    doc["flops_without_skips"] = report.total_flops() - skip_flops;
  } else {
    throw UsageError("count: unknown arch '" + arch + "' (expected resnet50 or generator)");
  }
  doc["layers"] = ojson::parse(report.to_json())["layers"];
  write_file(out / "count.json", doc.dump(2) + "\n");
  write_file(out / "count.csv", report.to_csv());
  std::cout << "params " << report.total_params() << " ("
            << static_cast<double>(report.total_params()) / 1e6 << "M) flops "
            << report.total_flops() << " (" << static_cast<double>(report.total_flops()) / 1e9
            << "G)\n";
  return kOk;
}

// ---------------------------------------------------------------- bench-scaling

int cmd_bench_scaling(const Config& cfg) {
  std::vector<std::string> mechanisms;
  {
    std::stringstream ss(cfg.get_string("bench.mechanisms", "mhsa,sase_recog,se"));
    for (std::string m; std::getline(ss, m, ',');) {
      if (!m.empty()) mechanisms.push_back(m);
    }
  }
  std::vector<std::pair<std::int64_t, std::int64_t>> sizes;
  for (auto side : cfg.get_int_list("bench.sides", {4, 8, 16, 32, 64})) sizes.emplace_back(side, side);
  if (sizes.size() < 3) {
    throw UsageError("bench-scaling: need at least 3 sizes, got " + std::to_string(sizes.size()));
  }
  const std::int64_t channels = cfg.get_int("bench.channels", 64);
  const std::int64_t heads = cfg.get_int("bench.heads", 4);
  const fs::path out = output_dir(cfg);
  ojson summary = ojson::object();
  for (const auto& name : mechanisms) {
    const ScalingMechanism m = parse_scaling_mechanism(name);
    const ScalingCurve curve = scaling_bench(m, channels, sizes, heads);
    write_file(out / ("scaling_" + name + ".csv"), curve.to_csv());
    write_file(out / ("scaling_" + name + ".json"), curve.to_json() + "\n");
    summary[name] = {{"slope", curve.fit.slope},
                     {"residual", curve.fit.residual},
                     {"raw_slope", curve.raw.slope},
                     {"core_slope", curve.core.slope},
                     {"excluded_smallest", curve.fit.excluded > 0}};
    std::cout << name << ": slope " << curve.fit.slope << " (raw " << curve.raw.slope
              << ", core " << curve.core.slope << ")\n";
  }
  write_file(out / "scaling_summary.json", summary.dump(2) + "\n");
  return kOk;
}

// ---------------------------------------------------------------- train

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

TrainOptions train_options(const Config& cfg, std::uint64_t seed) {
  TrainOptions o;
  o.seed = seed;
  o.variant = parse_block_variant(cfg.get_string("train.variant", "sase"));
  o.steps = cfg.get_int("train.steps", o.steps);
  o.samples = cfg.get_int("train.samples", o.samples);
  o.batch_size = cfg.get_int("train.batch", o.batch_size);
  o.data.size = cfg.get_int("train.image_size", o.data.size);
  o.data.noise_std = cfg.get_double("train.data_noise", o.data.noise_std);
  o.optimizer = cfg.get_string("train.optimizer", o.optimizer);
  const double lr = cfg.get_double("train.lr", o.optimizer == "sgd" ? o.sgd.lr : o.adam.lr);
  o.adam.lr = lr;
  o.sgd.lr = lr;
  o.adam.beta1 = cfg.get_double("train.beta1", o.adam.beta1);
  o.adam.beta2 = cfg.get_double("train.beta2", o.adam.beta2);
  o.adam.eps = cfg.get_double("train.eps", o.adam.eps);
  o.sgd.momentum = cfg.get_double("train.momentum", o.sgd.momentum);
  o.timing = cfg.get_bool("train.timing", false);
  o.validate();
  return o;
}

int cmd_train(const Config& cfg) {
  const std::uint64_t seed = require_seed(cfg, "train");
  const TrainOptions options = train_options(cfg, seed);
  const fs::path out = output_dir(cfg);
  InitRng rng(seed);
  ResNet model(tiny_classifier_spec(options.variant), rng);
  TrainResult result;
  try {
    result = train_classifier(options, model);
  } catch (const DivergenceError& e) {
    std::cerr << e.what() << " (last good step " << e.last_good_step() << ")\n";
    return kNumeric;
  }
  write_file(out / "metrics.csv", result.metrics_csv());
  write_file(out / "summary.json", result.summary_json() + "\n");
  Config resolved = cfg;
  resolved.set("seed", std::to_string(seed));
  resolved.set("train.variant", to_string(options.variant));
  resolved.set("train.steps", std::to_string(options.steps));
  resolved.set("train.samples", std::to_string(options.samples));
  resolved.set("train.batch", std::to_string(options.batch_size));
  resolved.set("train.optimizer", options.optimizer);
  resolved.set("train.lr", format_double(options.optimizer == "sgd" ? options.sgd.lr
                                                                    : options.adam.lr));
  write_file(out / "config.ini", resolved.to_string());
  save_checkpoint((out / "checkpoint.sase").string(), model.parameters());
  std::cout << "train: loss " << result.initial_loss << " -> " << result.final_loss << ", acc "
            << result.final_acc << "\n";
  return kOk;
}

// ---------------------------------------------------------------- gen-forward

int cmd_gen_forward(const Config& cfg) {
  const std::uint64_t seed = require_seed(cfg, "gen-forward");
  GeneratorSpec spec = generator_spec(cfg);
  if (!cfg.has("generator.skips")) spec.skip_kind = SkipKind::sase;
  spec.noise_seed = seed;
  InitRng rng(cfg.get_u64("generator.init_seed", 0));
  Generator gen(spec, rng);
  gen.set_training(false);
  NoGradGuard guard;
  const Tensor z = Tensor::randn(Shape{spec.latent_dim}, seed);
  const GeneratorResult r = gen.forward_full(z);
  const fs::path out = output_dir(cfg);
  fs::create_directories(out / "masks");

  ojson doc;
  doc["seed"] = seed;
  doc["format"] = "raw little-endian f64, row-major";
  auto image_shape = r.image.shape().dims();
  if (image_shape.front() == 1) image_shape.erase(image_shape.begin());
  doc["image"] = {{"file", "image.f64"}, {"shape", image_shape}};
  write_raw(out / "image.f64", r.image);
  ojson masks = ojson::array();
  for (const auto& m : r.masks) {
    for (std::size_t h = 0; h < m.keys.size(); ++h) {
      const std::string file = "masks/skip" + std::to_string(m.source_resolution) + "_" +
                               std::to_string(m.target_resolution) + "_head" +
                               std::to_string(h) + ".f64";
      write_raw(out / file, m.keys[h]);
      auto v = m.keys[h].data();
      masks.push_back({{"file", file},
                       {"source", m.source_resolution},
                       {"target", m.target_resolution},
                       {"head", h},
                       {"shape", m.keys[h].shape().dims()},
                       {"min", *std::min_element(v.begin(), v.end())},
                       {"max", *std::max_element(v.begin(), v.end())}});
    }
  }
  doc["masks"] = std::move(masks);
  write_file(out / "gen_forward.json", doc.dump(2) + "\n");
  std::cout << "gen-forward: image " << r.image.shape().to_string() << ", "
            << doc["masks"].size() << " masks\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Spatially-adaptive squeeze-excitation toolkit"};
  app.require_subcommand(1);

  Command gradcheck(app, "gradcheck", "Finite-difference gradient check of a module");
  gradcheck.bind("--module", "gradcheck.module", "Module name");
  gradcheck.bind("--dtype", "gradcheck.dtype", "f64 (f32 is refused)");
  gradcheck.bind("--tolerance", "gradcheck.tolerance", "Max relative error");

  Command count(app, "count", "Parameter and FLOP accounting");
  count.bind("--arch", "count.arch", "resnet50 | generator");
  count.bind("--variant", "count.variant", "vanilla | se | mhsa | sase");
  count.bind("--input", "count.input", "Input extent for resnet50");
  count.bind("--skips", "generator.skips", "none | sle | sase");
  count.bind("--target", "generator.target", "Generator output resolution");
  count.bind("--ngf", "generator.ngf", "Generator base width");
  count.bind("--latent", "generator.latent", "Latent dimension");

  Command bench(app, "bench-scaling", "FLOP scaling of attention mechanisms over token counts");
  bench.bind("--mechanisms", "bench.mechanisms", "Comma list of mhsa, sase_recog, se");
  bench.bind("--sides", "bench.sides", "Comma list of square map sides");
  bench.bind("--channels", "bench.channels", "Channel width");
  bench.bind("--heads", "bench.heads", "Heads");

  Command train(app, "train", "Train the tiny classifier on the blob-quadrant task");
  train.bind("--variant", "train.variant", "vanilla | se | mhsa | sase");
  train.bind("--steps", "train.steps", "Optimizer steps");
  train.bind("--samples", "train.samples", "Dataset size");
  train.bind("--batch", "train.batch", "Batch size, 0 = full batch");
  train.bind("--optimizer", "train.optimizer", "adam | sgd");
  train.bind("--lr", "train.lr", "Learning rate");
  train.bind("--momentum", "train.momentum", "SGD momentum");
  train.bind("--beta1", "train.beta1", "Adam beta1");
  train.bind("--beta2", "train.beta2", "Adam beta2");
  train.add_flag("--timing", "train.timing", "Record wall-clock time per step");

  Command gen(app, "gen-forward", "Generator forward pass with image and mask dumps");
  gen.bind("--skips", "generator.skips", "none | sle | sase");
  gen.bind("--target", "generator.target", "Output resolution");
  gen.bind("--ngf", "generator.ngf", "Base width");
  gen.bind("--latent", "generator.latent", "Latent dimension");
  gen.bind("--mask-noise", "generator.mask_noise", "Noise std on key logits");
  gen.bind("--block-noise", "generator.block_noise", "Noise std in composite blocks");

  const std::vector<std::pair<Command*, std::function<int(const Config&)>>> commands{
      {&gradcheck, cmd_gradcheck}, {&count, cmd_count}, {&bench, cmd_bench_scaling},
      {&train, cmd_train},         {&gen, cmd_gen_forward}};

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    for (const auto& [command, fn] : commands) {
      if (command->app()->parsed()) return fn(command->resolve());
    }
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    // ConfigError and ShapeError
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace sase::cli
