#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sase/error.hpp"

namespace sase {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

std::string to_string(DType dtype);
DType parse_dtype(const std::string& name);

// Ordered list of extents, row-major. Feature maps are C x H x W with an
// optional leading batch extent. Rank 0 is a scalar with one element.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::int64_t> dims);
  explicit Shape(std::vector<std::int64_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::int64_t operator[](std::size_t axis) const { return dims_[axis]; }
  const std::vector<std::int64_t>& dims() const { return dims_; }
  std::int64_t numel() const;
  std::vector<std::int64_t> strides() const;

  // Negative axes count from the back.
  std::size_t normalize_axis(std::int64_t axis) const;

  static bool broadcastable(const Shape& a, const Shape& b);
  static Shape broadcast(const Shape& a, const Shape& b);

  bool operator==(const Shape& other) const = default;
  std::string to_string() const;

 private:
  std::vector<std::int64_t> dims_;
};

class Tensor;

namespace detail {

using BackwardFn =
    std::function<std::vector<std::vector<double>>(std::span<const double> grad_out)>;

// One recorded operation. `seq` is the position on the tape; inputs always
// carry a smaller sequence number than the node that consumes them.
struct Node {
  std::uint64_t seq = 0;
  std::string name;
  std::vector<Tensor> inputs;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  DType dtype = DType::f64;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> node;
};

}  // namespace detail

// Dense tensor handle. Copies share storage; use clone() for a deep copy.
// Values are held in double precision; f32 tensors are rounded to float
// after every operation.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, DType dtype = DType::f64);
  static Tensor ones(const Shape& shape, DType dtype = DType::f64);
  static Tensor full(const Shape& shape, double value, DType dtype = DType::f64);
  static Tensor randn(const Shape& shape, std::uint64_t seed, double mean = 0.0,
                      double stddev = 1.0, DType dtype = DType::f64);
  static Tensor uniform(const Shape& shape, std::uint64_t seed, double low, double high,
                        DType dtype = DType::f64);
  static Tensor from_values(const Shape& shape, std::vector<double> values,
                            DType dtype = DType::f64);
  static Tensor scalar(double value, DType dtype = DType::f64);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  DType dtype() const;
  std::int64_t numel() const { return shape().numel(); }
  std::size_t rank() const { return shape().rank(); }
  std::int64_t dim(std::int64_t axis) const;

  std::span<const double> data() const;
  // Write access is only allowed on tensors that are not outputs of a
  // recorded operation.
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;
  double item() const;
  double at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag = true);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  Tensor grad_tensor() const;
  void zero_grad();

  // Populate gradients of every reachable requires_grad leaf. Gradients
  // accumulate across calls.
  void backward() const;

  Tensor detach() const;
  Tensor clone() const;

  // Identity of the underlying storage.
  const void* id() const { return impl_.get(); }

  // Internal: construct from parts.
  static Tensor make(Shape shape, DType dtype, std::vector<double> data);
  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

// True while operations record onto the tape.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// When enabled (the default), every operation verifies its output is finite
// and throws NumericError otherwise.
void set_finite_check(bool enabled);
bool finite_check_enabled();

namespace detail {

bool needs_grad(std::initializer_list<const Tensor*> inputs);
bool needs_grad(std::span<const Tensor> inputs);

// Wrap freshly computed output values: rounds to the output dtype, runs the
// finite check, and records a tape node when any input requires grad.
Tensor make_result(const char* name, Shape shape, DType dtype, std::vector<double> data,
                   std::vector<Tensor> inputs, BackwardFn backward);

DType result_dtype(const Tensor& a, const Tensor& b);
void round_to_dtype(std::vector<double>& values, DType dtype);

}  // namespace detail

}  // namespace sase
