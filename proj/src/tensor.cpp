#include "dhcnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dhcnet {

int shape_size(const Shape& s) {
  int n = 1;
  for (int e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

static std::vector<int> row_major_strides(const Shape& s) {
  std::vector<int> st(s.size());
  int acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

Tensor::Tensor(Shape s, Array v) : shape(std::move(s)), values(std::move(v)) {
  if (shape_size(shape) != static_cast<int>(values.size()))
    throw std::invalid_argument("Tensor: shape " + shape_str(shape) +
                                " does not match value count " +
                                std::to_string(values.size()));
}

double Tensor::scalar() const {
  if (size() != 1)
    throw std::invalid_argument("Tensor::scalar on shape " + shape_str(shape));
  return values[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  if (static_cast<int>(idx.size()) != rank())
    throw std::invalid_argument("Tensor::at rank mismatch");
  auto st = row_major_strides(shape);
  int off = 0, d = 0;
  for (int i : idx) off += st[d++] * i;
  return values[off];
}

Tensor Tensor::detached() const {
  Tensor t;
  t.shape = shape;
  t.values = values;
  return t;
}

Tensor Tensor::zeros(const Shape& s) {
  return Tensor(s, Array::Zero(shape_size(s)));
}

Tensor Tensor::full(const Shape& s, double v) {
  return Tensor(s, Array::Constant(shape_size(s), v));
}

Tensor Tensor::from(const Shape& s, std::vector<double> v) {
  Array a = Eigen::Map<const Array>(v.data(), static_cast<Eigen::Index>(v.size()));
  return Tensor(s, std::move(a));
}

Tensor Tensor::scalar_value(double v) {
  return Tensor(Shape{}, Array::Constant(1, v));
}

// ---------------------------------------------------------------- Tape

int Tape::leaf(const Shape& shape) {
  nodes_.push_back(Node{shape, nullptr});
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::op(const Shape& out_shape, BackwardFn fn) {
  nodes_.push_back(Node{out_shape, std::move(fn)});
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::accumulate(int node, const Array& g) {
  if (node < 0 || node >= static_cast<int>(nodes_.size()))
    throw std::logic_error("Tape::accumulate: bad node id");
  if (!has_grad_[node]) {
    grads_[node] = g;
    has_grad_[node] = 1;
  } else {
    grads_[node] += g;
  }
}

std::unordered_map<int, Array> Tape::backward(int root_node) {
  if (root_node < 0 || root_node >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("backward: root not on this tape");
  if (shape_size(nodes_[root_node].shape) != 1)
    throw std::invalid_argument("backward: root is not a scalar (shape " +
                                shape_str(nodes_[root_node].shape) + ")");
  grads_.assign(nodes_.size(), Array());
  has_grad_.assign(nodes_.size(), 0);
  accumulate(root_node, Array::Constant(1, 1.0));
  for (int i = root_node; i >= 0; --i) {
    if (has_grad_[i] && nodes_[i].back) nodes_[i].back(grads_[i], *this);
  }
  std::unordered_map<int, Array> out;
  for (int i = 0; i <= root_node; ++i)
    if (has_grad_[i]) out.emplace(i, std::move(grads_[i]));
  grads_.clear();
  has_grad_.clear();
  return out;
}

Tensor make_leaf(Tape& tape, const Tensor& value) {
  Tensor t;
  t.shape = value.shape;
  t.values = value.values;
  t.tape = &tape;
  t.node = tape.leaf(value.shape);
  t.requires_grad = true;
  return t;
}

static Tape* joint_tape(const Tensor& a, const Tensor& b) {
  if (a.on_tape() && b.on_tape() && a.tape != b.tape)
    throw std::logic_error("operands live on different tapes");
  return a.on_tape() ? a.tape : (b.on_tape() ? b.tape : nullptr);
}

// ------------------------------------------------- broadcasting helpers

Shape broadcast_shape(const Shape& a, const Shape& b) {
  Shape out(std::max(a.size(), b.size()));
  for (int i = 0; i < static_cast<int>(out.size()); ++i) {
    int ai = static_cast<int>(a.size()) - 1 - i;
    int bi = static_cast<int>(b.size()) - 1 - i;
    int ea = ai >= 0 ? a[ai] : 1;
    int eb = bi >= 0 ? b[bi] : 1;
    if (ea != eb && ea != 1 && eb != 1)
      throw std::invalid_argument("shapes not broadcast-compatible: " +
                                  shape_str(a) + " vs " + shape_str(b));
    out[out.size() - 1 - i] = std::max(ea, eb);
  }
  return out;
}

// Strides of `s` viewed as the broadcast shape `out` (0 where expanded).
static std::vector<int> broadcast_strides(const Shape& s, const Shape& out) {
  auto st = row_major_strides(s);
  std::vector<int> r(out.size(), 0);
  for (int i = 0; i < static_cast<int>(s.size()); ++i) {
    int oi = static_cast<int>(out.size()) - static_cast<int>(s.size()) + i;
    r[oi] = (s[i] == 1 && out[oi] != 1) ? 0 : st[i];
  }
  return r;
}

// Sums g (of shape `from`) down to shape `to` (undoes broadcasting).
static Array reduce_broadcast(const Array& g, const Shape& from, const Shape& to) {
  if (from == to) return g;
  auto out_st = row_major_strides(from);
  auto to_bst = broadcast_strides(to, from);
  Array r = Array::Zero(shape_size(to));
  int n = shape_size(from);
  std::vector<int> idx(from.size(), 0);
  for (int lin = 0; lin < n; ++lin) {
    int off = 0;
    int rem = lin;
    for (std::size_t d = 0; d < from.size(); ++d) {
      int id = rem / out_st[d];
      rem %= out_st[d];
      off += id * to_bst[d];
    }
    r[off] += g[lin];
  }
  return r;
}

// ---------------------------------------------------------- elementwise

static void ew_apply(EwKind kind, const Array& a, const Array& b, Array& out) {
  switch (kind) {
    case EwKind::add: out = a + b; break;
    case EwKind::sub: out = a - b; break;
    case EwKind::mul: out = a * b; break;
    default: throw std::logic_error("ew_apply: not a binary kind");
  }
}

Tensor elementwise(EwKind kind, const Tensor& a, const Tensor& b) {
  Shape os = broadcast_shape(a.shape, b.shape);
  Tape* tape = joint_tape(a, b);
  Array av, bv;
  const Array* ap = &a.values;
  const Array* bp = &b.values;
  if (a.shape != os) {  // materialize the broadcast
    auto ast = broadcast_strides(a.shape, os);
    auto ost = row_major_strides(os);
    av.resize(shape_size(os));
    for (int lin = 0; lin < av.size(); ++lin) {
      int off = 0, rem = lin;
      for (std::size_t d = 0; d < os.size(); ++d) {
        off += (rem / ost[d]) * ast[d];
        rem %= ost[d];
      }
      av[lin] = a.values[off];
    }
    ap = &av;
  }
  if (b.shape != os) {
    auto bst = broadcast_strides(b.shape, os);
    auto ost = row_major_strides(os);
    bv.resize(shape_size(os));
    for (int lin = 0; lin < bv.size(); ++lin) {
      int off = 0, rem = lin;
      for (std::size_t d = 0; d < os.size(); ++d) {
        off += (rem / ost[d]) * bst[d];
        rem %= ost[d];
      }
      bv[lin] = b.values[off];
    }
    bp = &bv;
  }

  Tensor out;
  out.shape = os;
  ew_apply(kind, *ap, *bp, out.values);

  if (tape) {
    int an = a.node, bn = b.node;
    Shape ash = a.shape, bsh = b.shape;
    Array saved_a, saved_b;
    if (kind == EwKind::mul) { saved_a = *ap; saved_b = *bp; }
    out.tape = tape;
    out.requires_grad = true;
    out.node = tape->op(os, [=](const Array& g, Tape& t) {
      Array ga, gb;
      switch (kind) {
        case EwKind::add: ga = g; gb = g; break;
        case EwKind::sub: ga = g; gb = -g; break;
        case EwKind::mul: ga = g * saved_b; gb = g * saved_a; break;
        default: throw std::logic_error("unreachable");
      }
      if (an >= 0) t.accumulate(an, reduce_broadcast(ga, os, ash));
      if (bn >= 0) t.accumulate(bn, reduce_broadcast(gb, os, bsh));
    });
  }
  return out;
}

Tensor elementwise(EwKind kind, const Tensor& a, double s) {
  Tensor out;
  out.shape = a.shape;
  switch (kind) {
    case EwKind::neg: out.values = -a.values; break;
    case EwKind::exp: out.values = a.values.exp(); break;
    case EwKind::log:
      if ((a.values <= 0.0).any())
        throw std::domain_error("log of non-positive value");
      out.values = a.values.log();
      break;
    case EwKind::relu: out.values = a.values.max(0.0); break;
    case EwKind::max_with_scalar: out.values = a.values.max(s); break;
    case EwKind::sqrt:
      if ((a.values < 0.0).any())
        throw std::domain_error("sqrt of negative value");
      out.values = a.values.sqrt();
      break;
    case EwKind::add: out.values = a.values + s; break;
    case EwKind::mul: out.values = a.values * s; break;
    case EwKind::sub: out.values = a.values - s; break;
  }
  if (a.on_tape()) {
    int an = a.node;
    Array in = a.values;
    Array ov = out.values;
    out.tape = a.tape;
    out.requires_grad = true;
    out.node = a.tape->op(a.shape, [=](const Array& g, Tape& t) {
      Array ga;
      switch (kind) {
        case EwKind::neg: ga = -g; break;
        case EwKind::exp: ga = g * ov; break;
        case EwKind::log: ga = g / in; break;
        case EwKind::relu: ga = (in > 0.0).select(g, 0.0); break;
        case EwKind::max_with_scalar: ga = (in > s).select(g, 0.0); break;
        case EwKind::sqrt:
          // subgradient 0 at 0
          ga = (in > 0.0).select(g / (2.0 * ov), Array::Zero(g.size()));
          break;
        case EwKind::add: case EwKind::sub: ga = g; break;
        case EwKind::mul: ga = g * s; break;
      }
      t.accumulate(an, ga);
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(EwKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(EwKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(EwKind::mul, a, b); }
Tensor neg(const Tensor& a) { return elementwise(EwKind::neg, a); }
Tensor exp(const Tensor& a) { return elementwise(EwKind::exp, a); }
Tensor log(const Tensor& a) { return elementwise(EwKind::log, a); }
Tensor relu(const Tensor& a) { return elementwise(EwKind::relu, a); }
Tensor sqrt(const Tensor& a) { return elementwise(EwKind::sqrt, a); }
Tensor max_with_scalar(const Tensor& a, double s) {
  return elementwise(EwKind::max_with_scalar, a, s);
}
Tensor add_scalar(const Tensor& a, double s) { return elementwise(EwKind::add, a, s); }
Tensor mul_scalar(const Tensor& a, double s) { return elementwise(EwKind::mul, a, s); }

// --------------------------------------------------------------- matmul

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<const RowMat>;

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw std::invalid_argument("matmul requires rank-2 operands, got " +
                                shape_str(a.shape) + " and " + shape_str(b.shape));
  if (a.shape[1] != b.shape[0])
    throw std::invalid_argument("matmul inner dimensions differ: " +
                                shape_str(a.shape) + " vs " + shape_str(b.shape));
  int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  MapMat am(a.values.data(), m, k), bm(b.values.data(), k, n);
  Tensor out;
  out.shape = {m, n};
  out.values.resize(m * n);
  Eigen::Map<RowMat>(out.values.data(), m, n) = am * bm;

  Tape* tape = joint_tape(a, b);
  if (tape) {
    int an = a.node, bn = b.node;
    Array av = a.values, bv = b.values;
    out.tape = tape;
    out.requires_grad = true;
    out.node = tape->op(out.shape, [=](const Array& g, Tape& t) {
      MapMat gm(g.data(), m, n);
      if (an >= 0) {
        Array ga(m * k);
        Eigen::Map<RowMat>(ga.data(), m, k) =
            gm * MapMat(bv.data(), k, n).transpose();
        t.accumulate(an, ga);
      }
      if (bn >= 0) {
        Array gb(k * n);
        Eigen::Map<RowMat>(gb.data(), k, n) =
            MapMat(av.data(), m, k).transpose() * gm;
        t.accumulate(bn, gb);
      }
    });
  }
  return out;
}

// --------------------------------------------------------------- reduce

Tensor reduce(ReduceKind kind, const Tensor& a, const std::vector<int>& axes) {
  for (int ax : axes)
    if (ax < 0 || ax >= a.rank())
      throw std::invalid_argument("reduce: axis " + std::to_string(ax) +
                                  " invalid for shape " + shape_str(a.shape));
  if (axes.empty()) return a;  // identity

  std::vector<char> is_red(a.rank(), 0);
  int count = 1;
  for (int ax : axes) {
    if (is_red[ax]) continue;
    is_red[ax] = 1;
    count *= a.shape[ax];
  }
  Shape os;
  for (int d = 0; d < a.rank(); ++d)
    if (!is_red[d]) os.push_back(a.shape[d]);

  auto ist = row_major_strides(a.shape);
  // stride of each input dim into the output index (0 for reduced dims)
  std::vector<int> od_stride(a.rank(), 0);
  {
    auto ost = row_major_strides(os);
    int oi = 0;
    for (int d = 0; d < a.rank(); ++d)
      if (!is_red[d]) od_stride[d] = ost[oi++];
  }

  Tensor out = Tensor::zeros(os);
  int n = a.size();
  for (int lin = 0; lin < n; ++lin) {
    int rem = lin, off = 0;
    for (int d = 0; d < a.rank(); ++d) {
      off += (rem / ist[d]) * od_stride[d];
      rem %= ist[d];
    }
    out.values[off] += a.values[lin];
  }
  if (kind == ReduceKind::mean) out.values /= static_cast<double>(count);

  if (a.on_tape()) {
    int an = a.node;
    Shape ash = a.shape;
    double scale = kind == ReduceKind::mean ? 1.0 / count : 1.0;
    out.tape = a.tape;
    out.requires_grad = true;
    out.node = a.tape->op(os, [=](const Array& g, Tape& t) {
      Array ga(shape_size(ash));
      for (int lin = 0; lin < ga.size(); ++lin) {
        int rem = lin, off = 0;
        for (std::size_t d = 0; d < ash.size(); ++d) {
          off += (rem / ist[d]) * od_stride[d];
          rem %= ist[d];
        }
        ga[lin] = g[off] * scale;
      }
      t.accumulate(an, ga);
    });
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  std::vector<int> axes(a.rank());
  for (int i = 0; i < a.rank(); ++i) axes[i] = i;
  if (a.rank() == 0) return a;
  return reduce(ReduceKind::sum, a, axes);
}

Tensor mean_all(const Tensor& a) {
  std::vector<int> axes(a.rank());
  for (int i = 0; i < a.rank(); ++i) axes[i] = i;
  if (a.rank() == 0) return a;
  return reduce(ReduceKind::mean, a, axes);
}

// ---------------------------------------------------------- gather_rows

Tensor gather_rows(const Tensor& x, const std::vector<int>& labels) {
  if (x.rank() != 2)
    throw std::invalid_argument("gather_rows requires rank-2 input");
  int n = x.shape[0], k = x.shape[1];
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("gather_rows: label count != rows");
  for (int l : labels)
    if (l < 0 || l >= k)
      throw std::out_of_range("gather_rows: label " + std::to_string(l) +
                              " out of range [0," + std::to_string(k) + ")");
  Tensor out;
  out.shape = {n};
  out.values.resize(n);
  for (int i = 0; i < n; ++i) out.values[i] = x.values[i * k + labels[i]];

  if (x.on_tape()) {
    int xn = x.node;
    out.tape = x.tape;
    out.requires_grad = true;
    out.node = x.tape->op(out.shape, [=](const Array& g, Tape& t) {
      Array gx = Array::Zero(n * k);
      for (int i = 0; i < n; ++i) gx[i * k + labels[i]] = g[i];
      t.accumulate(xn, gx);
    });
  }
  return out;
}

// ---------------------------------------------------------------- stack

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("stack: empty input");
  const Shape& es = parts[0].shape;
  for (const auto& p : parts)
    if (p.shape != es)
      throw std::invalid_argument("stack: shape mismatch " + shape_str(p.shape) +
                                  " vs " + shape_str(es));
  int esz = shape_size(es);
  Shape os;
  os.push_back(static_cast<int>(parts.size()));
  os.insert(os.end(), es.begin(), es.end());

  Tape* tape = nullptr;
  for (const auto& p : parts)
    if (p.on_tape()) {
      if (tape && tape != p.tape)
        throw std::logic_error("stack operands live on different tapes");
      tape = p.tape;
    }

  Tensor out;
  out.shape = os;
  out.values.resize(static_cast<Eigen::Index>(parts.size()) * esz);
  for (std::size_t i = 0; i < parts.size(); ++i)
    out.values.segment(static_cast<Eigen::Index>(i) * esz, esz) = parts[i].values;

  if (tape) {
    std::vector<int> nodes(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) nodes[i] = parts[i].node;
    out.tape = tape;
    out.requires_grad = true;
    out.node = tape->op(os, [=](const Array& g, Tape& t) {
      for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i] >= 0)
          t.accumulate(nodes[i],
                       g.segment(static_cast<Eigen::Index>(i) * esz, esz));
    });
  }
  return out;
}

Tensor slice0(const Tensor& x, int i) {
  if (x.rank() < 1) throw std::invalid_argument("slice0: rank-0 input");
  if (i < 0 || i >= x.shape[0])
    throw std::out_of_range("slice0: index " + std::to_string(i) +
                            " out of extent " + std::to_string(x.shape[0]));
  Shape os(x.shape.begin() + 1, x.shape.end());
  int esz = shape_size(os);
  Tensor out;
  out.shape = os;
  out.values = x.values.segment(static_cast<Eigen::Index>(i) * esz, esz);
  if (x.on_tape()) {
    int xn = x.node;
    int total = x.size();
    out.tape = x.tape;
    out.requires_grad = true;
    out.node = x.tape->op(os, [=](const Array& g, Tape& t) {
      Array gx = Array::Zero(total);
      gx.segment(static_cast<Eigen::Index>(i) * esz, esz) = g;
      t.accumulate(xn, gx);
    });
  }
  return out;
}

// ------------------------------------------------------------- backward

std::unordered_map<int, Array> backward(const Tensor& root) {
  if (!root.on_tape())
    throw std::invalid_argument("backward: root is detached from any tape");
  if (root.size() != 1)
    throw std::invalid_argument("backward: root is not a scalar");
  return root.tape->backward(root.node);
}

// ----------------------------------------------------------- grad_check

double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double epsilon) {
  if (epsilon < 1e-7 || epsilon > 1e-3)
    throw std::invalid_argument("grad_check: epsilon outside [1e-7, 1e-3]");
  Tape tape;
  Tensor xt = make_leaf(tape, x);
  Tensor y = f(xt);
  auto grads = backward(y);
  Array analytic = Array::Zero(x.size());
  if (auto it = grads.find(xt.node); it != grads.end()) analytic = it->second;

  double worst = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    Tensor xp = x.detached();
    Tensor xm = x.detached();
    xp.values[i] += epsilon;
    xm.values[i] -= epsilon;
    double fp = f(xp).scalar();
    double fm = f(xm).scalar();
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("grad_check: f non-finite at perturbed point");
    double numeric = (fp - fm) / (2.0 * epsilon);
    double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace dhcnet
