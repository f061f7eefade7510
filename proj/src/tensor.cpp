#include "srdnet/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "srdnet/detail/node.hpp"

namespace srdnet {

Index element_count(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d < 1) throw ShapeError("non-positive dimension in shape " + to_string(shape));
    n *= d;
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Index Rng::below(Index n) {
  if (n < 1) throw std::invalid_argument("Rng::below requires n >= 1");
  // Rejection keeps the draw unbiased.
  const auto un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % un;
  std::uint64_t v;
  do {
    v = next();
  } while (v >= limit);
  return static_cast<Index>(v % un);
}

Rng Rng::fork(std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(next() >> 32),
                    static_cast<std::uint32_t>(salt),
                    static_cast<std::uint32_t>(salt >> 32)};
  std::uint64_t s = 0;
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  s = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  return Rng(s);
}

// ---------------------------------------------------------------------------

Tensor::Tensor() : Tensor(Shape{}, Vector::Zero(1)) {}

Tensor::Tensor(Shape shape, Vector values, bool requires_grad) {
  const Index n = element_count(shape);
  if (values.size() != n) {
    throw ShapeError("tensor of shape " + to_string(shape) + " given " +
                     std::to_string(values.size()) + " values");
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

const std::shared_ptr<detail::Node>& node_of(const Tensor& t) { return t.node_; }
Tensor wrap_node(std::shared_ptr<detail::Node> node) { return Tensor(std::move(node)); }

const Shape& Tensor::shape() const { return node_->shape; }

Index Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) throw ShapeError("axis out of range");
  return node_->shape[static_cast<std::size_t>(axis)];
}

Index Tensor::size() const { return node_->value.size(); }
const Vector& Tensor::values() const { return node_->value; }
std::span<const double> Tensor::data() const {
  return {node_->value.data(), static_cast<std::size_t>(node_->value.size())};
}

double Tensor::item() const {
  if (size() != 1) throw UsageError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::initializer_list<Index> index) const {
  if (static_cast<int>(index.size()) != rank()) throw ShapeError("index rank mismatch");
  Index flat = 0;
  auto d = shape().begin();
  for (Index i : index) {
    if (i < 0 || i >= *d) throw ShapeError("index out of range");
    flat = flat * *d + i;
    ++d;
  }
  return node_->value[flat];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
Tensor Tensor::detach() const { return Tensor(shape(), values(), false); }
Tensor Tensor::as_leaf(bool requires_grad) const { return Tensor(shape(), values(), requires_grad); }

ConstMatrixMap Tensor::matrix() const {
  if (rank() != 2) throw ShapeError("matrix() needs rank 2, got " + to_string(shape()));
  return {node_->value.data(), dim(0), dim(1)};
}

ConstMatrixMap Tensor::channel(Index c) const {
  if (rank() != 3) throw ShapeError("channel() needs rank 3, got " + to_string(shape()));
  const Index plane = dim(1) * dim(2);
  return {node_->value.data() + c * plane, dim(1), dim(2)};
}

// ---------------------------------------------------------------------------

namespace detail {

namespace {
template <typename Range>
Tensor make_result_impl(const char* op, Shape shape, Vector value, const Range& inputs,
                        BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->op = op;
  node->shape = std::move(shape);
  node->value = std::move(value);
  for (const Tensor& t : inputs) node->requires_grad |= t.requires_grad();
  if (node->requires_grad) {
    for (const Tensor& t : inputs) node->inputs.push_back(node_of(t));
    node->backward = std::move(backward);
  }
  return wrap_node(std::move(node));
}
}  // namespace

Tensor make_result(const char* op, Shape shape, Vector value,
                   std::initializer_list<Tensor> inputs, BackwardFn backward) {
  return make_result_impl(op, std::move(shape), std::move(value), inputs, std::move(backward));
}

Tensor make_result(const char* op, Shape shape, Vector value, std::span<const Tensor> inputs,
                   BackwardFn backward) {
  return make_result_impl(op, std::move(shape), std::move(value), inputs, std::move(backward));
}

}  // namespace detail

using detail::GradSinks;
using detail::make_result;

// Creation ------------------------------------------------------------------

Tensor zeros(const Shape& shape, bool requires_grad) {
  return Tensor(shape, Vector::Zero(element_count(shape)), requires_grad);
}

Tensor constant(const Shape& shape, double value, bool requires_grad) {
  return Tensor(shape, Vector::Constant(element_count(shape), value), requires_grad);
}

Tensor uniform(const Shape& shape, Rng& rng, double lo, double hi, bool requires_grad) {
  Vector v(element_count(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v), requires_grad);
}

Tensor kaiming_uniform(const Shape& shape, Rng& rng, Index fan_in, bool requires_grad, double a) {
  if (fan_in < 1) throw ShapeError("kaiming_uniform: fan_in must be positive");
  const double bound = std::sqrt(6.0 / ((1.0 + a * a) * static_cast<double>(fan_in)));
  return uniform(shape, rng, -bound, bound, requires_grad);
}

Tensor scalar(double value) { return Tensor(Shape{}, Vector::Constant(1, value)); }

// Elementwise ---------------------------------------------------------------

namespace {

/// For each flat index of `a`, the flat index of the broadcast element of `b`.
/// Empty when the shapes are identical.
std::vector<Index> broadcast_map(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return {};
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(b) + " to " + to_string(a));
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (b[i] != a[i] && b[i] != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(b) + " to " + to_string(a));
    }
  }
  const Index n = element_count(a);
  std::vector<Index> map(static_cast<std::size_t>(n));
  std::vector<Index> idx(a.size(), 0);
  for (Index flat = 0; flat < n; ++flat) {
    Index bf = 0;
    for (std::size_t d = 0; d < a.size(); ++d) bf = bf * b[d] + (b[d] == 1 ? 0 : idx[d]);
    map[static_cast<std::size_t>(flat)] = bf;
    for (auto d = static_cast<std::ptrdiff_t>(a.size()) - 1; d >= 0; --d) {
      if (++idx[static_cast<std::size_t>(d)] < a[static_cast<std::size_t>(d)]) break;
      idx[static_cast<std::size_t>(d)] = 0;
    }
  }
  return map;
}

Vector expand(const Vector& b, const std::vector<Index>& map) {
  if (map.empty()) return b;
  Vector out(static_cast<Index>(map.size()));
  for (std::size_t i = 0; i < map.size(); ++i) out[static_cast<Index>(i)] = b[map[i]];
  return out;
}

void reduce_into(Vector& sink, const Vector& grad, const std::vector<Index>& map) {
  if (map.empty()) {
    sink += grad;
    return;
  }
  for (std::size_t i = 0; i < map.size(); ++i) sink[map[i]] += grad[static_cast<Index>(i)];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  auto map = broadcast_map(a.shape(), b.shape(), "add");
  Vector out = a.values() + expand(b.values(), map);
  return make_result("add", a.shape(), std::move(out), {a, b},
                     [map](const Vector& g, GradSinks in) {
                       if (in[0]) *in[0] += g;
                       if (in[1]) reduce_into(*in[1], g, map);
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  auto map = broadcast_map(a.shape(), b.shape(), "sub");
  Vector out = a.values() - expand(b.values(), map);
  return make_result("sub", a.shape(), std::move(out), {a, b},
                     [map](const Vector& g, GradSinks in) {
                       if (in[0]) *in[0] += g;
                       if (in[1]) reduce_into(*in[1], -g, map);
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  auto map = broadcast_map(a.shape(), b.shape(), "mul");
  Vector bx = expand(b.values(), map);
  Vector out = a.values().cwiseProduct(bx);
  return make_result("mul", a.shape(), std::move(out), {a, b},
                     [map, av = a.values(), bx = std::move(bx)](const Vector& g, GradSinks in) {
                       if (in[0]) *in[0] += g.cwiseProduct(bx);
                       if (in[1]) reduce_into(*in[1], g.cwiseProduct(av), map);
                     });
}

Tensor scale(const Tensor& a, double s) {
  return make_result("scale", a.shape(), a.values() * s, {a},
                     [s](const Vector& g, GradSinks in) {
                       if (in[0]) *in[0] += s * g;
                     });
}

Tensor abs(const Tensor& a) {
  Vector sign = a.values().unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
  return make_result("abs", a.shape(), a.values().cwiseAbs(), {a},
                     [sign = std::move(sign)](const Vector& g, GradSinks in) {
                       if (in[0]) *in[0] += g.cwiseProduct(sign);
                     });
}

Tensor square(const Tensor& a) {
  return make_result("square", a.shape(), a.values().cwiseAbs2(), {a},
                     [av = a.values()](const Vector& g, GradSinks in) {
                       if (in[0]) *in[0] += 2.0 * g.cwiseProduct(av);
                     });
}

// Reductions ----------------------------------------------------------------

Tensor sum(const Tensor& a) {
  return make_result("sum", Shape{}, Vector::Constant(1, a.values().sum()), {a},
                     [](const Vector& g, GradSinks in) {
                       if (in[0]) in[0]->array() += g[0];
                     });
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  return make_result("mean", Shape{}, Vector::Constant(1, a.values().sum() * inv), {a},
                     [inv](const Vector& g, GradSinks in) {
                       if (in[0]) in[0]->array() += g[0] * inv;
                     });
}

// Linear algebra ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul needs rank-2 operands, got " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul inner dimensions differ: " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  Vector out(m * n);
  MatrixMap(out.data(), m, n).noalias() = a.matrix() * b.matrix();
  return make_result("matmul", Shape{m, n}, std::move(out), {a, b},
                     [a, b, m, k, n](const Vector& g, GradSinks in) {
                       ConstMatrixMap gm(g.data(), m, n);
                       if (in[0]) MatrixMap(in[0]->data(), m, k).noalias() += gm * b.matrix().transpose();
                       if (in[1]) MatrixMap(in[1]->data(), k, n).noalias() += a.matrix().transpose() * gm;
                     });
}

Tensor transpose(const Tensor& a) {
  const Index m = a.dim(0), n = a.dim(1);
  Vector out(m * n);
  MatrixMap(out.data(), n, m) = a.matrix().transpose();
  return make_result("transpose", Shape{n, m}, std::move(out), {a},
                     [m, n](const Vector& g, GradSinks in) {
                       if (in[0]) MatrixMap(in[0]->data(), m, n) += ConstMatrixMap(g.data(), n, m).transpose();
                     });
}

// Data movement -------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  if (element_count(shape) != a.size()) {
    throw ShapeError("reshape " + to_string(a.shape()) + " -> " + to_string(shape) +
                     " changes the element count");
  }
  return make_result("reshape", std::move(shape), a.values(), {a},
                     [](const Vector& g, GradSinks in) {
                       if (in[0]) *in[0] += g;
                     });
}

namespace {
struct AxisSplit {
  Index outer, axis, inner;
};
AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r{1, s[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) r.outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}
}  // namespace

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  const int rank = parts[0].rank();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError("concat axis out of range");
  Shape shape = parts[0].shape();
  Index total = 0;
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    if (p.rank() != rank) throw ShapeError("concat rank mismatch");
    for (int d = 0; d < rank; ++d) {
      if (d != axis && s[static_cast<std::size_t>(d)] != shape[static_cast<std::size_t>(d)]) {
        throw ShapeError("concat: " + to_string(s) + " disagrees with " + to_string(shape) +
                         " off the concat axis");
      }
    }
    total += s[static_cast<std::size_t>(axis)];
  }
  shape[static_cast<std::size_t>(axis)] = total;
  const AxisSplit out = split_at(shape, axis);
  Vector value(element_count(shape));
  std::vector<Index> extents;
  Index offset = 0;
  for (const Tensor& p : parts) {
    const Index len = p.dim(axis);
    for (Index o = 0; o < out.outer; ++o) {
      value.segment((o * out.axis + offset) * out.inner, len * out.inner) =
          p.values().segment(o * len * out.inner, len * out.inner);
    }
    extents.push_back(len);
    offset += len;
  }
  return make_result("concat", shape, std::move(value), parts,
                     [out, extents](const Vector& g, GradSinks in) {
                       Index offset = 0;
                       for (std::size_t i = 0; i < extents.size(); ++i) {
                         const Index len = extents[i];
                         if (in[i]) {
                           for (Index o = 0; o < out.outer; ++o) {
                             in[i]->segment(o * len * out.inner, len * out.inner) +=
                                 g.segment((o * out.axis + offset) * out.inner, len * out.inner);
                           }
                         }
                         offset += len;
                       }
                     });
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& a, int axis, Index start, Index length) {
  if (axis < 0) axis += a.rank();
  if (axis < 0 || axis >= a.rank()) throw ShapeError("slice axis out of range");
  if (start < 0 || length < 1 || start + length > a.dim(axis)) {
    throw ShapeError("slice [" + std::to_string(start) + ", +" + std::to_string(length) +
                     ") out of range for " + to_string(a.shape()));
  }
  const AxisSplit src = split_at(a.shape(), axis);
  Shape shape = a.shape();
  shape[static_cast<std::size_t>(axis)] = length;
  Vector value(element_count(shape));
  for (Index o = 0; o < src.outer; ++o) {
    value.segment(o * length * src.inner, length * src.inner) =
        a.values().segment((o * src.axis + start) * src.inner, length * src.inner);
  }
  return make_result("slice", std::move(shape), std::move(value), {a},
                     [src, start, length](const Vector& g, GradSinks in) {
                       if (!in[0]) return;
                       for (Index o = 0; o < src.outer; ++o) {
                         in[0]->segment((o * src.axis + start) * src.inner, length * src.inner) +=
                             g.segment(o * length * src.inner, length * src.inner);
                       }
                     });
}

}  // namespace srdnet
