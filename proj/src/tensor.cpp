#include "kexnet/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace kexnet {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<const RowMat>;
using MutMatMap = Eigen::Map<RowMat>;
using VecMap = Eigen::Map<const Eigen::VectorXd>;
using MutVecMap = Eigen::Map<Eigen::VectorXd>;

std::size_t product(const std::vector<std::size_t>& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

void require_finite(const Tensor& t, const char* op) {
  for (double x : t.data) {
    if (!std::isfinite(x)) throw std::domain_error(std::string(op) + ": non-finite output");
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape) + " vs " + shape_string(b.shape));
  }
}

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)), data(product(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (product(shape) != data.size()) throw ShapeError("tensor data does not match shape " + shape_string(shape));
}

Tensor Tensor::vector(std::vector<double> d) {
  const std::size_t n = d.size();
  return Tensor({n}, std::move(d));
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
  return s + "]";
}

void Parameter::zero_grad() {
  if (grad.shape != value.shape) grad = Tensor(value.shape);
  std::fill(grad.data.begin(), grad.data.end(), 0.0);
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::val(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.ref && n.op == Op::Leaf ? *n.ref : n.value;
}

const Tensor& Tape::value(Var v) const { return val(v.id); }

Tensor& Tape::ensure_grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Tensor(val(id).shape);
  return n.grad;
}

Var Tape::param(Parameter& p) {
  Node n;
  n.op = Op::Leaf;
  n.ref = &p.value;
  n.target = &p;
  return push(std::move(n));
}

Var Tape::param(const Parameter& p) {
  Node n;
  n.op = Op::Leaf;
  n.ref = &p.value;
  return push(std::move(n));
}

Var Tape::row(Parameter& table, std::size_t r) {
  Var v = row(static_cast<const Parameter&>(table), r);
  nodes_[v.id].target = &table;
  return v;
}

Var Tape::row(const Parameter& table, std::size_t r) {
  const Tensor& t = table.value;
  if (t.shape.size() != 2 || r >= t.rows()) throw ShapeError("row: index out of range");
  Node n;
  n.op = Op::Row;
  n.ref = &t;
  n.aux = r;
  const std::size_t c = t.cols();
  n.value = Tensor({c}, std::vector<double>(t.data.begin() + static_cast<std::ptrdiff_t>(r * c),
                                            t.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * c)));
  return push(std::move(n));
}

Var Tape::constant(Tensor t) {
  Node n;
  n.op = Op::Const;
  n.value = std::move(t);
  return push(std::move(n));
}

Var Tape::matvec(Var w, Var x) {
  const Tensor& W = val(w.id);
  const Tensor& X = val(x.id);
  if (W.shape.size() != 2 || W.cols() != X.size()) {
    throw ShapeError("matvec: " + shape_string(W.shape) + " * " + shape_string(X.shape));
  }
  Node n;
  n.op = Op::MatVec;
  n.a = w.id;
  n.b = x.id;
  n.value = Tensor({W.rows()});
  MutVecMap(n.value.data.data(), static_cast<Eigen::Index>(W.rows())).noalias() =
      MatMap(W.data.data(), static_cast<Eigen::Index>(W.rows()), static_cast<Eigen::Index>(W.cols())) *
      VecMap(X.data.data(), static_cast<Eigen::Index>(X.size()));
  ops += 2 * W.size();
  require_finite(n.value, "matvec");
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  require_same(A, B, "add");
  Node n;
  n.op = Op::Add;
  n.a = a.id;
  n.b = b.id;
  n.value = A;
  for (std::size_t i = 0; i < B.size(); ++i) n.value[i] += B[i];
  ops += A.size();
  require_finite(n.value, "add");
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  require_same(A, B, "mul");
  Node n;
  n.op = Op::Mul;
  n.a = a.id;
  n.b = b.id;
  n.value = A;
  for (std::size_t i = 0; i < B.size(); ++i) n.value[i] *= B[i];
  ops += A.size();
  require_finite(n.value, "mul");
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  Node n;
  n.op = Op::Tanh;
  n.a = a.id;
  n.value = val(a.id);
  for (double& x : n.value.data) x = std::tanh(x);
  ops += n.value.size();
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  Node n;
  n.op = Op::Sigmoid;
  n.a = a.id;
  n.value = val(a.id);
  for (double& x : n.value.data) x = sigm(x);
  ops += n.value.size();
  return push(std::move(n));
}

Var Tape::sum_list(std::span<const Var> xs) {
  if (xs.empty()) throw ShapeError("sum_list: empty");
  Node n;
  n.op = Op::SumList;
  n.value = val(xs[0].id);
  n.list.push_back(xs[0].id);
  for (std::size_t k = 1; k < xs.size(); ++k) {
    const Tensor& X = val(xs[k].id);
    require_same(n.value, X, "sum_list");
    for (std::size_t i = 0; i < X.size(); ++i) n.value[i] += X[i];
    n.list.push_back(xs[k].id);
    ops += X.size();
  }
  require_finite(n.value, "sum_list");
  return push(std::move(n));
}

Var Tape::concat(std::span<const Var> xs) {
  Node n;
  n.op = Op::Concat;
  std::vector<double> d;
  for (Var x : xs) {
    const Tensor& X = val(x.id);
    d.insert(d.end(), X.data.begin(), X.data.end());
    n.list.push_back(x.id);
  }
  n.value = Tensor::vector(std::move(d));
  return push(std::move(n));
}

Var Tape::slice(Var a, std::size_t offset, std::size_t length) {
  const Tensor& A = val(a.id);
  if (offset + length > A.size()) throw ShapeError("slice: out of range");
  Node n;
  n.op = Op::Slice;
  n.a = a.id;
  n.aux = offset;
  n.value = Tensor({length}, std::vector<double>(A.data.begin() + static_cast<std::ptrdiff_t>(offset),
                                                 A.data.begin() + static_cast<std::ptrdiff_t>(offset + length)));
  return push(std::move(n));
}

Var Tape::softmax(Var a) {
  Node n;
  n.op = Op::Softmax;
  n.a = a.id;
  n.value = val(a.id);
  if (n.value.size() == 0) throw ShapeError("softmax: empty");
  const double mx = *std::max_element(n.value.data.begin(), n.value.data.end());
  double z = 0;
  for (double& x : n.value.data) z += (x = std::exp(x - mx));
  for (double& x : n.value.data) x /= z;
  ops += 4 * n.value.size();
  require_finite(n.value, "softmax");
  return push(std::move(n));
}

Var Tape::cross_entropy(Var probs, std::size_t label) {
  const Tensor& P = val(probs.id);
  if (label >= P.size()) throw ShapeError("cross_entropy: label out of range");
  Node n;
  n.op = Op::CrossEntropy;
  n.a = probs.id;
  n.aux = label;
  n.value = Tensor::vector({-std::log(P[label])});
  ops += 1;
  require_finite(n.value, "cross_entropy");
  return push(std::move(n));
}

Var Tape::mean(std::span<const Var> xs) {
  if (xs.empty()) throw ShapeError("mean: empty");
  Node n;
  n.op = Op::Mean;
  double s = 0;
  for (Var x : xs) {
    if (val(x.id).size() != 1) throw ShapeError("mean: scalars only");
    s += val(x.id)[0];
    n.list.push_back(x.id);
  }
  n.value = Tensor::vector({s / static_cast<double>(xs.size())});
  ops += xs.size();
  return push(std::move(n));
}

void Tape::backward(Var root, double seed) {
  if (val(root.id).size() != 1) throw ShapeError("backward: root must be scalar");
  ensure_grad(root.id)[0] += seed;
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) continue;
    const std::vector<double>& g = n.grad.data;
    switch (n.op) {
      case Op::Leaf:
        if (n.target) {
          Tensor& dst = n.target->grad;
          if (dst.shape != n.ref->shape) dst = Tensor(n.ref->shape);
          for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
        }
        break;
      case Op::Row:
        if (n.target) {
          Tensor& dst = n.target->grad;
          if (dst.shape != n.ref->shape) dst = Tensor(n.ref->shape);
          const std::size_t c = n.ref->cols();
          for (std::size_t i = 0; i < c; ++i) dst[n.aux * c + i] += g[i];
        }
        break;
      case Op::Const:
        break;
      case Op::MatVec: {
        const Tensor& W = val(n.a);
        const Tensor& X = val(n.b);
        const auto r = static_cast<Eigen::Index>(W.rows());
        const auto c = static_cast<Eigen::Index>(W.cols());
        VecMap G(g.data(), r);
        // Parameter gradients go straight to the accumulator.
        const Node& wn = nodes_[n.a];
        if (wn.op == Op::Leaf && wn.ref) {
          if (wn.target) {
            Tensor& dst = wn.target->grad;
            if (dst.shape != W.shape) dst = Tensor(W.shape);
            MutMatMap(dst.data.data(), r, c).noalias() += G * VecMap(X.data.data(), c).transpose();
          }
        } else {
          Tensor& dw = ensure_grad(n.a);
          MutMatMap(dw.data.data(), r, c).noalias() += G * VecMap(X.data.data(), c).transpose();
        }
        Tensor& dx = ensure_grad(n.b);
        MutVecMap(dx.data.data(), c).noalias() += MatMap(W.data.data(), r, c).transpose() * G;
        break;
      }
      case Op::Add: {
        Tensor& da = ensure_grad(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
        Tensor& db = ensure_grad(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
        break;
      }
      case Op::Mul: {
        const Tensor& A = val(n.a);
        const Tensor& B = val(n.b);
        Tensor& da = ensure_grad(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * B[i];
        Tensor& db = ensure_grad(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * A[i];
        break;
      }
      case Op::Tanh: {
        Tensor& da = ensure_grad(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (1 - n.value[i] * n.value[i]);
        break;
      }
      case Op::Sigmoid: {
        Tensor& da = ensure_grad(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * n.value[i] * (1 - n.value[i]);
        break;
      }
      case Op::SumList:
        for (std::size_t src : n.list) {
          Tensor& d = ensure_grad(src);
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
        }
        break;
      case Op::Concat: {
        std::size_t off = 0;
        for (std::size_t src : n.list) {
          Tensor& d = ensure_grad(src);
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[off + i];
          off += d.size();
        }
        break;
      }
      case Op::Slice: {
        Tensor& d = ensure_grad(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) d[n.aux + i] += g[i];
        break;
      }
      case Op::Softmax: {
        const Tensor& p = n.value;
        double dot = 0;
        for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * p[i];
        Tensor& d = ensure_grad(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += p[i] * (g[i] - dot);
        break;
      }
      case Op::CrossEntropy: {
        const Tensor& p = val(n.a);
        Tensor& d = ensure_grad(n.a);
        d[n.aux] += -g[0] / p[n.aux];
        break;
      }
      case Op::Mean: {
        const double s = g[0] / static_cast<double>(n.list.size());
        for (std::size_t src : n.list) ensure_grad(src)[0] += s;
        break;
      }
    }
  }
}

void rmsprop_step(std::span<Parameter* const> params, RmsPropState& state, const RmsPropConfig& cfg) {
  if (state.v.size() != params.size()) {
    state.v.clear();
    for (const Parameter* p : params) state.v.emplace_back(p->value.shape);
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Tensor& v = state.v[k];
    if (p.grad.size() != p.value.size() || v.size() != p.value.size()) throw ShapeError("rmsprop: shape mismatch");
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      v[i] = cfg.decay * v[i] + (1 - cfg.decay) * g * g;
      p.value[i] -= cfg.lr * g / (std::sqrt(v[i]) + cfg.eps);
    }
  }
}

}  // namespace kexnet
