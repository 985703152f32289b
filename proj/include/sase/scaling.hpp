#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sase/cost.hpp"

namespace sase {

enum class ScalingMechanism { mhsa, sase_recog, se };

std::string to_string(ScalingMechanism mechanism);
ScalingMechanism parse_scaling_mechanism(const std::string& name);

struct ScalingPoint {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t tokens = 0;
  std::uint64_t flops = 0;
  // Token-interaction terms only: scores/softmax/apply for MHSA,
  // logits/softmax/apply for SASE, the channel rescale for SE.
  std::uint64_t core_flops = 0;
};

// Ordinary least squares of ln(flops) on ln(N).
struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
  // Sum of squared residuals in log space.
  double residual = 0.0;
  std::size_t points = 0;
  // Number of leading (smallest) sizes dropped before fitting.
  std::size_t excluded = 0;
};

LogLogFit fit_loglog(const std::vector<double>& n, const std::vector<double>& flops);

// Fits all points, then refits without the smallest size if its residual
// against the fit of the remaining sizes exceeds 3x their largest residual.
LogLogFit fit_loglog_robust(const std::vector<double>& n, const std::vector<double>& flops);

struct ScalingCurve {
  ScalingMechanism mechanism = ScalingMechanism::mhsa;
  std::int64_t channels = 0;
  std::int64_t heads = 0;
  std::vector<ScalingPoint> points;
  LogLogFit raw;   // all sizes, total FLOPs
  LogLogFit fit;   // total FLOPs after the smallest-size exclusion rule
  LogLogFit core;  // core FLOPs, exclusion rule applied

  std::string to_json(int indent = 2) const;
  // Columns: N,flops
  std::string to_csv() const;
};

// N = 16, 64, 256, 1024, 4096 as square maps.
std::vector<std::pair<std::int64_t, std::int64_t>> default_scaling_sizes();

// Counts one module of width `channels` on a [1, channels, H, W] input per
// size. Sizes must have strictly increasing token counts; at least 3.
ScalingCurve scaling_bench(ScalingMechanism mechanism, std::int64_t channels,
                           const std::vector<std::pair<std::int64_t, std::int64_t>>& sizes,
                           std::int64_t heads = 4);

}  // namespace sase
