#include "sase/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace sase {

std::string to_string(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

DType parse_dtype(const std::string& name) {
  if (name == "f32" || name == "float32") return DType::f32;
  if (name == "f64" || name == "float64") return DType::f64;
  throw ConfigError("unknown dtype '" + name + "' (expected f32 or f64)");
}

// ---------------------------------------------------------------- Shape

Shape::Shape(std::initializer_list<std::int64_t> dims) : Shape(std::vector<std::int64_t>(dims)) {}

Shape::Shape(std::vector<std::int64_t> dims) : dims_(std::move(dims)) {
  for (auto d : dims_) {
    if (d < 1) throw ShapeError("shape extents must be >= 1, got " + to_string());
  }
}

std::int64_t Shape::numel() const {
  std::int64_t n = 1;
  for (auto d : dims_) n *= d;
  return n;
}

std::vector<std::int64_t> Shape::strides() const {
  std::vector<std::int64_t> s(dims_.size(), 1);
  for (std::size_t i = dims_.size(); i-- > 1;) s[i - 1] = s[i] * dims_[i];
  return s;
}

std::size_t Shape::normalize_axis(std::int64_t axis) const {
  const auto r = static_cast<std::int64_t>(rank());
  if (axis < -r || axis >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string());
  }
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

bool Shape::broadcastable(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.rank(), b.rank());
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t da = i < a.rank() ? a.dims_[a.rank() - 1 - i] : 1;
    const std::int64_t db = i < b.rank() ? b.dims_[b.rank() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) return false;
  }
  return true;
}

Shape Shape::broadcast(const Shape& a, const Shape& b) {
  if (!broadcastable(a, b)) {
    throw ShapeError("shapes " + a.to_string() + " and " + b.to_string() +
                     " are not broadcast-compatible");
  }
  const std::size_t r = std::max(a.rank(), b.rank());
  std::vector<std::int64_t> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t da = i < a.rank() ? a.dims_[a.rank() - 1 - i] : 1;
    const std::int64_t db = i < b.rank() ? b.dims_[b.rank() - 1 - i] : 1;
    out[r - 1 - i] = std::max(da, db);
  }
  return Shape(std::move(out));
}

std::string Shape::to_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------- grad mode

namespace {

thread_local bool t_grad_enabled = true;
std::atomic<bool> g_finite_check{true};
std::atomic<std::uint64_t> g_node_seq{0};

}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void set_finite_check(bool enabled) { g_finite_check = enabled; }
bool finite_check_enabled() { return g_finite_check; }

// ---------------------------------------------------------------- Tensor

Tensor Tensor::make(Shape shape, DType dtype, std::vector<double> data) {
  if (static_cast<std::int64_t>(data.size()) != shape.numel()) {
    throw ShapeError("value count " + std::to_string(data.size()) + " does not match shape " +
                     shape.to_string());
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  impl->data = std::move(data);
  detail::round_to_dtype(impl->data, dtype);
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(const Shape& shape, DType dtype) { return full(shape, 0.0, dtype); }
Tensor Tensor::ones(const Shape& shape, DType dtype) { return full(shape, 1.0, dtype); }

Tensor Tensor::full(const Shape& shape, double value, DType dtype) {
  return make(shape, dtype, std::vector<double>(static_cast<std::size_t>(shape.numel()), value));
}

Tensor Tensor::randn(const Shape& shape, std::uint64_t seed, double mean, double stddev,
                     DType dtype) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist(mean, stddev);
  std::vector<double> v(static_cast<std::size_t>(shape.numel()));
  for (auto& x : v) x = dist(gen);
  return make(shape, dtype, std::move(v));
}

Tensor Tensor::uniform(const Shape& shape, std::uint64_t seed, double low, double high,
                       DType dtype) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(low, high);
  std::vector<double> v(static_cast<std::size_t>(shape.numel()));
  for (auto& x : v) x = dist(gen);
  return make(shape, dtype, std::move(v));
}

Tensor Tensor::from_values(const Shape& shape, std::vector<double> values, DType dtype) {
  return make(shape, dtype, std::move(values));
}

Tensor Tensor::scalar(double value, DType dtype) { return make(Shape{}, dtype, {value}); }

static const detail::TensorImpl& checked(const std::shared_ptr<detail::TensorImpl>& impl) {
  if (!impl) throw std::logic_error("use of an undefined tensor");
  return *impl;
}

const Shape& Tensor::shape() const { return checked(impl_).shape; }
DType Tensor::dtype() const { return checked(impl_).dtype; }

std::int64_t Tensor::dim(std::int64_t axis) const {
  return shape()[shape().normalize_axis(axis)];
}

std::span<const double> Tensor::data() const { return checked(impl_).data; }

std::span<double> Tensor::mutable_data() {
  checked(impl_);
  if (impl_->node) {
    throw std::logic_error("in-place mutation of a tensor recorded on the tape");
  }
  return impl_->data;
}

std::vector<double> Tensor::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() needs a single-element tensor, got " + shape().to_string());
  return data()[0];
}

double Tensor::at(std::initializer_list<std::int64_t> index) const {
  const auto& s = shape();
  if (index.size() != s.rank()) throw ShapeError("index rank mismatch for " + s.to_string());
  const auto st = s.strides();
  std::int64_t off = 0;
  std::size_t i = 0;
  for (auto v : index) {
    if (v < 0 || v >= s[i]) throw ShapeError("index out of range for " + s.to_string());
    off += v * st[i++];
  }
  return data()[static_cast<std::size_t>(off)];
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  checked(impl_);
  if (impl_->node && !flag) throw std::logic_error("cannot clear requires_grad on a non-leaf");
  impl_->requires_grad = flag;
  return *this;
}

bool Tensor::is_leaf() const { return checked(impl_).node == nullptr; }
bool Tensor::has_grad() const { return !checked(impl_).grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("tensor has no gradient");
  return impl_->grad;
}

Tensor Tensor::grad_tensor() const {
  auto g = grad();
  return make(shape(), dtype(), {g.begin(), g.end()});
}

void Tensor::zero_grad() {
  checked(impl_);
  impl_->grad.clear();
}

Tensor Tensor::detach() const { return make(shape(), dtype(), to_vector()); }
Tensor Tensor::clone() const { return detach(); }

// ---------------------------------------------------------------- autograd

void Tensor::backward() const {
  const auto& self = checked(impl_);
  if (self.shape.numel() != 1) {
    throw ShapeError("backward() needs a scalar output, got " + self.shape.to_string());
  }
  if (!self.requires_grad) {
    throw std::logic_error("backward() on an output that is detached from the tape");
  }
  if (!self.node) {
    impl_->grad.resize(1, 0.0);
    impl_->grad[0] += 1.0;
    return;
  }

  // Collect reachable nodes, then replay them in reverse tape order.
  std::vector<detail::Node*> nodes;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{self.node.get()};
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    nodes.push_back(n);
    for (const auto& in : n->inputs) {
      if (in.impl()->node && in.impl()->requires_grad) stack.push_back(in.impl()->node.get());
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

  std::unordered_map<detail::Node*, std::vector<double>> pending;
  pending[self.node.get()] = {1.0};
  for (auto* n : nodes) {
    auto it = pending.find(n);
    if (it == pending.end()) continue;
    std::vector<double> gout = std::move(it->second);
    pending.erase(it);
    auto gins = n->backward(gout);
    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      if (i >= gins.size() || gins[i].empty()) continue;
      auto& in = *n->inputs[i].impl();
      if (!in.requires_grad) continue;
      std::vector<double>* dst;
      if (in.node) {
        dst = &pending[in.node.get()];
      } else {
        dst = &in.grad;
      }
      if (dst->empty()) {
        *dst = std::move(gins[i]);
      } else {
        for (std::size_t k = 0; k < dst->size(); ++k) (*dst)[k] += gins[i][k];
      }
      if (!in.node) detail::round_to_dtype(*dst, in.dtype);
    }
  }
}

namespace detail {

bool needs_grad(std::initializer_list<const Tensor*> inputs) {
  if (!t_grad_enabled) return false;
  for (const auto* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

bool needs_grad(std::span<const Tensor> inputs) {
  if (!t_grad_enabled) return false;
  for (const auto& t : inputs) {
    if (t.defined() && t.requires_grad()) return true;
  }
  return false;
}

DType result_dtype(const Tensor& a, const Tensor& b) {
  if (a.dtype() != b.dtype()) {
    throw ShapeError("dtype mismatch: " + to_string(a.dtype()) + " vs " + to_string(b.dtype()));
  }
  return a.dtype();
}

void round_to_dtype(std::vector<double>& values, DType dtype) {
  if (dtype != DType::f32) return;
  for (auto& v : values) v = static_cast<double>(static_cast<float>(v));
}

Tensor make_result(const char* name, Shape shape, DType dtype, std::vector<double> data,
                   std::vector<Tensor> inputs, BackwardFn backward) {
  round_to_dtype(data, dtype);
  if (g_finite_check) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!std::isfinite(data[i])) {
        throw NumericError(std::string("non-finite value produced by ") + name + " at flat index " +
                           std::to_string(i));
      }
    }
  }
  Tensor out = Tensor::make(std::move(shape), dtype, std::move(data));
  if (backward && needs_grad(std::span<const Tensor>(inputs))) {
    auto node = std::make_shared<Node>();
    node->seq = ++g_node_seq;
    node->name = name;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    out.impl()->node = std::move(node);
    out.impl()->requires_grad = true;
  }
  return out;
}

}  // namespace detail

}  // namespace sase
