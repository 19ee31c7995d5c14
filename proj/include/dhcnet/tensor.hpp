#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

namespace dhcnet {

// Flat row-major storage; Eigen is the only math backend.
using Array = Eigen::ArrayXd;
using Shape = std::vector<int>;

class Tape;

int shape_size(const Shape& s);
std::string shape_str(const Shape& s);

// Dense n-d array of doubles, optionally attached to a gradient tape.
// Detached tensors (tape == nullptr) are plain immutable values.
struct Tensor {
  Shape shape;
  Array values;
  Tape* tape = nullptr;
  int node = -1;  // tape node id, -1 when detached
  bool requires_grad = false;

  Tensor() = default;
  Tensor(Shape s, Array v);

  int size() const { return static_cast<int>(values.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  bool on_tape() const { return tape != nullptr && node >= 0; }
  double scalar() const;
  double at(std::initializer_list<int> idx) const;

  Tensor detached() const;

  static Tensor zeros(const Shape& s);
  static Tensor full(const Shape& s, double v);
  static Tensor from(const Shape& s, std::vector<double> v);
  static Tensor scalar_value(double v);
};

// Ordered record of primitive ops. Node creation order is the
// topological order; backward walks it once in reverse.
class Tape {
 public:
  using BackwardFn = std::function<void(const Array& out_grad, Tape& tape)>;

  // Registers a leaf (no backward fn). Returns node id.
  int leaf(const Shape& shape);

  // Registers an op node. `fn` receives dL/d(out) and must call
  // accumulate() on each parent it propagates to.
  int op(const Shape& out_shape, BackwardFn fn);

  void accumulate(int node, const Array& g);

  // Runs reverse-mode accumulation from a scalar root. Returns the
  // gradient of every node that received one; leaves not reached get
  // no entry. Each node's backward fn runs exactly once.
  std::unordered_map<int, Array> backward(int root_node);

  const Shape& node_shape(int node) const { return nodes_[node].shape; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Shape shape;
    BackwardFn back;  // empty for leaves
  };
  std::vector<Node> nodes_;
  std::vector<Array> grads_;   // live only during backward
  std::vector<char> has_grad_;
};

// Attaches `value` to `tape` as a differentiable leaf.
Tensor make_leaf(Tape& tape, const Tensor& value);

enum class EwKind { add, sub, mul, neg, exp, log, relu, max_with_scalar, sqrt };

// Elementwise ops with trailing-dimension broadcasting. relu and sqrt
// use subgradient 0 at the kink.
Tensor elementwise(EwKind kind, const Tensor& a, const Tensor& b);
Tensor elementwise(EwKind kind, const Tensor& a, double scalar = 0.0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor max_with_scalar(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

// Rank-2 matrix product.
Tensor matmul(const Tensor& a, const Tensor& b);

enum class ReduceKind { sum, mean };

// Reduces over `axes` (removed from the shape); empty axis list is the
// identity. Reducing everything yields a rank-0 scalar.
Tensor reduce(ReduceKind kind, const Tensor& a, const std::vector<int>& axes);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// Picks x[i, labels[i]] per row of a rank-2 tensor; backward scatters.
Tensor gather_rows(const Tensor& x, const std::vector<int>& labels);

// Stacks equal-shape tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);

// Entry i along the leading axis; inverse of stack.
Tensor slice0(const Tensor& x, int i);

// Gradient of `root` (a scalar on a tape) with respect to every tensor
// that received one, keyed by node id.
std::unordered_map<int, Array> backward(const Tensor& root);

// Max over coordinates of |analytic - central difference| /
// max(1, |analytic|, |numeric|) for scalar-valued f at x.
double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double epsilon = 1e-5);

// Broadcast helpers (exposed for tests).
Shape broadcast_shape(const Shape& a, const Shape& b);

}  // namespace dhcnet
