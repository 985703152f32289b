#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sase/module.hpp"
#include "sase/tensor.hpp"

namespace sase {

struct GradcheckOptions {
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  // Tensors larger than this are checked on a seeded random subset.
  std::int64_t full_check_limit = 10000;
  std::int64_t sample_size = 512;
  // Relative step: h = step * max(1, |x|).
  double step = 1e-5;
  // Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double rel_floor = 1e-3;
};

struct GradcheckGroup {
  std::string name;
  std::int64_t checked = 0;
  double max_rel_err = 0.0;
  std::int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckGroup> groups;
  double max_rel_err = 0.0;
  bool passed = false;
  // Set when a gradient is not finite: "<group>[<flat index>]".
  std::string failure;

  std::string to_json(int indent = 2) const;
};

// Compares analytic gradients of sum(forward()) against central differences
// for every element (or a seeded subset) of each tensor in `wrt`. All tensors
// must be f64 leaves; they are temporarily marked requires_grad.
GradcheckReport gradcheck(const std::function<Tensor()>& forward,
                          const std::vector<NamedTensor>& wrt,
                          const GradcheckOptions& options = {});

// Checks a layer on a seeded N(0,1) input of `input_shape`, covering the
// input and every trainable parameter.
GradcheckReport gradcheck_layer(Layer& layer, const Shape& input_shape,
                                const GradcheckOptions& options = {});

}  // namespace sase
