#include "sase/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "sase/attention.hpp"
#include "sase/error.hpp"

namespace sase {

std::string to_string(ScalingMechanism mechanism) {
  switch (mechanism) {
    case ScalingMechanism::mhsa:
      return "mhsa";
    case ScalingMechanism::sase_recog:
      return "sase_recog";
    case ScalingMechanism::se:
      return "se";
  }
  return "unknown";
}

ScalingMechanism parse_scaling_mechanism(const std::string& name) {
  for (auto m : {ScalingMechanism::mhsa, ScalingMechanism::sase_recog, ScalingMechanism::se}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown mechanism '" + name + "' (expected mhsa, sase_recog or se)");
}

LogLogFit fit_loglog(const std::vector<double>& n, const std::vector<double>& flops) {
  if (n.size() != flops.size() || n.size() < 2) {
    throw ConfigError("log-log fit needs at least 2 matched points");
  }
  const std::size_t m = n.size();
  std::vector<double> x(m), y(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (n[i] <= 0.0 || flops[i] <= 0.0) throw NumericError("log-log fit needs positive values");
    x[i] = std::log(n[i]);
    y[i] = std::log(flops[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(m);
  my /= static_cast<double>(m);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw ConfigError("log-log fit needs distinct token counts");
  LogLogFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * x[i]);
    fit.residual += r * r;
  }
  fit.points = m;
  if (!std::isfinite(fit.slope)) throw NumericError("log-log slope is not finite");
  return fit;
}

LogLogFit fit_loglog_robust(const std::vector<double>& n, const std::vector<double>& flops) {
  LogLogFit all = fit_loglog(n, flops);
  if (n.size() < 4) return all;
  const std::vector<double> rest_n(n.begin() + 1, n.end());
  const std::vector<double> rest_f(flops.begin() + 1, flops.end());
  LogLogFit rest = fit_loglog(rest_n, rest_f);
  auto resid = [&](std::size_t i) {
    return std::abs(std::log(flops[i]) - (rest.intercept + rest.slope * std::log(n[i])));
  };
  double worst = 0.0;
  for (std::size_t i = 1; i < n.size(); ++i) worst = std::max(worst, resid(i));
  if (resid(0) > 3.0 * worst) {
    rest.excluded = 1;
    return rest;
  }
  return all;
}

std::vector<std::pair<std::int64_t, std::int64_t>> default_scaling_sizes() {
  return {{4, 4}, {8, 8}, {16, 16}, {32, 32}, {64, 64}};
}

namespace {

bool is_core(ScalingMechanism mechanism, const std::string& name) {
  auto ends = [&](const char* s) { return name.ends_with(s); };
  switch (mechanism) {
    case ScalingMechanism::mhsa:
      return name.find("core.") != std::string::npos;
    case ScalingMechanism::sase_recog:
      return ends(".logits") || ends(".softmax") || ends(".apply");
    case ScalingMechanism::se:
      return ends("scale");
  }
  return false;
}

std::unique_ptr<Layer> build(ScalingMechanism mechanism, std::int64_t channels,
                             std::int64_t heads) {
  InitRng rng(0);
  switch (mechanism) {
    case ScalingMechanism::mhsa:
      return std::make_unique<MultiHeadSelfAttention>(MHSAConfig{channels, heads}, rng);
    case ScalingMechanism::sase_recog: {
      SASERecogConfig c;
      c.channels = channels;
      c.heads = heads;
      return std::make_unique<SASERecog>(c, rng);
    }
    case ScalingMechanism::se:
      return std::make_unique<SqueezeExcitation>(SEConfig{channels, 16}, rng);
  }
  throw ConfigError("unknown mechanism");
}

nlohmann::ordered_json fit_json(const LogLogFit& f) {
  nlohmann::ordered_json j;
  j["slope"] = f.slope;
  j["intercept"] = f.intercept;
  j["residual"] = f.residual;
  j["points"] = f.points;
  j["excluded"] = f.excluded;
  return j;
}

}  // namespace

ScalingCurve scaling_bench(ScalingMechanism mechanism, std::int64_t channels,
                           const std::vector<std::pair<std::int64_t, std::int64_t>>& sizes,
                           std::int64_t heads) {
  if (sizes.size() < 3) {
    throw ConfigError("scaling bench needs at least 3 sizes, got " + std::to_string(sizes.size()));
  }
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i].first < 1 || sizes[i].second < 1) throw ConfigError("sizes must be positive");
    if (i > 0 && sizes[i].first * sizes[i].second <= sizes[i - 1].first * sizes[i - 1].second) {
      throw ConfigError("token counts must be strictly increasing");
    }
  }
  const auto layer = build(mechanism, channels, heads);
  ScalingCurve curve;
  curve.mechanism = mechanism;
  curve.channels = channels;
  curve.heads = mechanism == ScalingMechanism::se ? 1 : heads;
  std::vector<double> n, total, core;
  for (auto [h, w] : sizes) {
    CostReport report;
    layer->trace(Shape{1, channels, h, w}, report, to_string(mechanism));
    ScalingPoint p{h, w, h * w, report.total_flops(), 0};
    for (const auto& e : report.entries()) {
      if (is_core(mechanism, e.name)) p.core_flops += e.flops;
    }
    curve.points.push_back(p);
    n.push_back(static_cast<double>(p.tokens));
    total.push_back(static_cast<double>(p.flops));
    core.push_back(static_cast<double>(p.core_flops));
  }
  curve.raw = fit_loglog(n, total);
  curve.fit = fit_loglog_robust(n, total);
  curve.core = fit_loglog_robust(n, core);
  return curve;
}

std::string ScalingCurve::to_json(int indent) const {
  nlohmann::ordered_json j;
  j["mechanism"] = to_string(mechanism);
  j["channels"] = channels;
  j["heads"] = heads;
  j["slope"] = fit.slope;
  j["residual"] = fit.residual;
  j["raw"] = fit_json(raw);
  j["fit"] = fit_json(fit);
  j["core"] = fit_json(core);
  nlohmann::ordered_json pts = nlohmann::ordered_json::array();
  for (const auto& p : points) {
    pts.push_back({{"H", p.height}, {"W", p.width}, {"N", p.tokens}, {"flops", p.flops},
                   {"core_flops", p.core_flops}});
  }
  j["points"] = std::move(pts);
  return j.dump(indent);
}

std::string ScalingCurve::to_csv() const {
  std::ostringstream os;
  os << "N,flops\n";
  for (const auto& p : points) os << p.tokens << ',' << p.flops << '\n';
  return os.str();
}

}  // namespace sase
