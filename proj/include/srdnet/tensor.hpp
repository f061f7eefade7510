#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace srdnet {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Vector = Eigen::VectorXd;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Product of the dimensions; throws ShapeError on a non-positive dimension.
/// The empty shape denotes a scalar and has one element.
Index element_count(const Shape& shape);
std::string to_string(const Shape& shape);

/// Deterministic 64-bit generator (mt19937_64). Floating-point draws use the
/// top 53 bits directly so the stream is identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  Index below(Index n);
  /// Derive an independent stream, e.g. one per epoch.
  Rng fork(std::uint64_t salt);

 private:
  std::mt19937_64 engine_;
};

namespace detail {
struct Node;
}

/// Dense row-major tensor of doubles. A Tensor is an immutable handle onto a
/// node of the autodiff graph; copies share the node.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, Vector values, bool requires_grad = false);

  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  Index dim(int axis) const;
  Index size() const;

  const Vector& values() const;
  std::span<const double> data() const;
  double item() const;
  double at(std::initializer_list<Index> index) const;

  bool requires_grad() const;
  /// Same values, cut from the graph.
  Tensor detach() const;
  /// Fresh leaf holding the same values.
  Tensor as_leaf(bool requires_grad) const;

  /// Row-major view of a rank-2 tensor, or of the trailing two axes of
  /// channel `c` for rank 3.
  ConstMatrixMap matrix() const;
  ConstMatrixMap channel(Index c) const;

  /// Stable identity of the underlying node.
  const void* id() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node);
  std::shared_ptr<detail::Node> node_;

  friend const std::shared_ptr<detail::Node>& node_of(const Tensor& t);
  friend Tensor wrap_node(std::shared_ptr<detail::Node> node);
};

const std::shared_ptr<detail::Node>& node_of(const Tensor& t);
Tensor wrap_node(std::shared_ptr<detail::Node> node);

// Creation.
Tensor zeros(const Shape& shape, bool requires_grad = false);
Tensor constant(const Shape& shape, double value, bool requires_grad = false);
Tensor uniform(const Shape& shape, Rng& rng, double lo, double hi,
               bool requires_grad = false);
/// He-uniform: U(-b, b) with b = sqrt(6 / ((1 + a²)·fan_in)), where `a` is
/// the negative slope of the following leaky ReLU (0 for plain ReLU).
Tensor kaiming_uniform(const Shape& shape, Rng& rng, Index fan_in, bool requires_grad = false,
                       double a = 0.0);
Tensor scalar(double value);

// Elementwise. Binary ops accept `b` broadcast along its size-1 axes when the
// ranks agree.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }

// Reductions to a 0-d tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Data movement. All of these copy.
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
Tensor slice(const Tensor& a, int axis, Index start, Index length);

}  // namespace srdnet
