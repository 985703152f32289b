#include "sase/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <json.hpp>

#include "sase/error.hpp"
#include "sase/ops.hpp"

namespace sase {

namespace {

double output_sum(const std::function<Tensor()>& forward) {
  NoGradGuard guard;
  const Tensor y = forward();
  double s = 0.0;
  for (double v : y.data()) s += v;
  return s;
}

std::vector<std::int64_t> pick_indices(std::int64_t numel, const GradcheckOptions& options,
                                       std::uint64_t salt) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(numel));
  std::iota(idx.begin(), idx.end(), 0);
  if (numel <= options.full_check_limit) return idx;
  std::mt19937_64 gen(options.seed ^ (0x5851F42D4C957F2Dull * (salt + 1)));
  std::shuffle(idx.begin(), idx.end(), gen);
  idx.resize(static_cast<std::size_t>(std::min(numel, options.sample_size)));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradcheckReport gradcheck(const std::function<Tensor()>& forward,
                          const std::vector<NamedTensor>& wrt, const GradcheckOptions& options) {
  for (const auto& t : wrt) {
    if (t.tensor.dtype() != DType::f64) {
      throw ConfigError("gradcheck: '" + t.name + "' is f32; finite differences need f64");
    }
    if (!t.tensor.is_leaf()) throw ConfigError("gradcheck: '" + t.name + "' is not a leaf");
  }
  std::vector<Tensor> handles;
  std::vector<bool> had_grad;
  for (const auto& t : wrt) {
    Tensor h = t.tensor;
    had_grad.push_back(h.requires_grad());
    h.set_requires_grad(true);
    h.zero_grad();
    handles.push_back(h);
  }

  GradcheckReport report;
  {
    const Tensor y = forward();
    sum_all(y).backward();
  }

  for (std::size_t ti = 0; ti < handles.size() && report.failure.empty(); ++ti) {
    Tensor& h = handles[ti];
    GradcheckGroup group;
    group.name = wrt[ti].name;
    const std::vector<double> analytic =
        h.has_grad() ? std::vector<double>(h.grad().begin(), h.grad().end())
                     : std::vector<double>(static_cast<std::size_t>(h.numel()), 0.0);
    for (std::int64_t i : pick_indices(h.numel(), options, ti)) {
      auto data = h.mutable_data();
      const double x0 = data[i];
      const double step = options.step * std::max(1.0, std::abs(x0));
      data[i] = x0 + step;
      const double fp = output_sum(forward);
      data[i] = x0 - step;
      const double fm = output_sum(forward);
      data[i] = x0;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[static_cast<std::size_t>(i)];
      ++group.checked;
      if (!std::isfinite(a) || !std::isfinite(numeric)) {
        report.failure = group.name + "[" + std::to_string(i) + "]";
        group.max_rel_err = std::numeric_limits<double>::infinity();
        group.worst_index = i;
        group.analytic = a;
        group.numeric = numeric;
        break;
      }
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), options.rel_floor});
      if (rel > group.max_rel_err || group.worst_index < 0) {
        group.max_rel_err = std::max(rel, group.max_rel_err);
        group.worst_index = i;
        group.analytic = a;
        group.numeric = numeric;
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, group.max_rel_err);
    report.groups.push_back(std::move(group));
  }

  for (std::size_t ti = 0; ti < handles.size(); ++ti) {
    handles[ti].zero_grad();
    handles[ti].set_requires_grad(had_grad[ti]);
  }
  report.passed = report.failure.empty() && report.max_rel_err <= options.tolerance;
  return report;
}

GradcheckReport gradcheck_layer(Layer& layer, const Shape& input_shape,
                                const GradcheckOptions& options) {
  Tensor x = Tensor::randn(input_shape, options.seed);
  std::vector<NamedTensor> wrt{{"input", x, ParamKind::trainable}};
  const ParamStore store = layer.parameters();
  for (const auto& p : store.entries()) {
    if (p.kind == ParamKind::trainable) wrt.push_back(p);
  }
  return gradcheck([&] { return layer.forward(x); }, wrt, options);
}

std::string GradcheckReport::to_json(int indent) const {
  nlohmann::ordered_json groups_json = nlohmann::ordered_json::array();
  for (const auto& g : groups) {
    nlohmann::ordered_json row;
    row["name"] = g.name;
    row["checked"] = g.checked;
    row["max_rel_err"] = std::isfinite(g.max_rel_err) ? nlohmann::ordered_json(g.max_rel_err)
                                                       : nlohmann::ordered_json("inf");
    row["worst_index"] = g.worst_index;
    row["analytic"] = std::isfinite(g.analytic) ? nlohmann::ordered_json(g.analytic)
                                                : nlohmann::ordered_json(nullptr);
    row["numeric"] = std::isfinite(g.numeric) ? nlohmann::ordered_json(g.numeric)
                                              : nlohmann::ordered_json(nullptr);
    groups_json.push_back(std::move(row));
  }
  nlohmann::ordered_json doc;
  doc["passed"] = passed;
  doc["max_rel_err"] = std::isfinite(max_rel_err) ? nlohmann::ordered_json(max_rel_err)
                                                   : nlohmann::ordered_json("inf");
  if (!failure.empty()) doc["failure"] = failure;
  doc["groups"] = std::move(groups_json);
  return doc.dump(indent);
}

}  // namespace sase
