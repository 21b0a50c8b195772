#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kexnet {

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major tensor of doubles. Vectors have rank 1, matrices rank 2.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0);
  Tensor(std::vector<std::size_t> s, std::vector<double> d);

  static Tensor vector(std::vector<double> d);

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.size() > 1 ? shape[1] : 1; }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  bool operator==(const Tensor&) const = default;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// A trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}
  void zero_grad();
};

/// Handle to a tape node.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode tape. Ops record their inputs; backward() walks the tape in
/// reverse creation order, which is a topological order by construction.
/// `ops` counts scalar arithmetic operations performed by forward ops.
class Tape {
 public:
  /// Trainable leaf; backward accumulates into p.grad.
  Var param(Parameter& p);
  /// Read-only leaf for inference; gradients are discarded.
  Var param(const Parameter& p);
  /// Row r of a matrix parameter (embedding lookup).
  Var row(Parameter& table, std::size_t r);
  Var row(const Parameter& table, std::size_t r);
  Var constant(Tensor t);

  Var matvec(Var w, Var x);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var sum_list(std::span<const Var> xs);
  Var concat(std::span<const Var> xs);
  Var slice(Var a, std::size_t offset, std::size_t length);
  Var softmax(Var a);
  /// -log p[label] for a probability vector p.
  Var cross_entropy(Var probs, std::size_t label);
  /// Mean of scalars.
  Var mean(std::span<const Var> xs);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const { return nodes_.at(v.id).grad; }

  /// Seeds d(out)/d(root) = seed and propagates to every input. A seed of
  /// 1/B on each of B per-example tapes accumulates the gradient of the mean.
  void backward(Var root, double seed = 1.0);

  std::size_t size() const noexcept { return nodes_.size(); }
  std::uint64_t ops = 0;

 private:
  enum class Op : std::uint8_t {
    Leaf,
    Row,
    Const,
    MatVec,
    Add,
    Mul,
    Tanh,
    Sigmoid,
    SumList,
    Concat,
    Slice,
    Softmax,
    CrossEntropy,
    Mean
  };
  struct Node {
    Op op = Op::Const;
    Tensor value;                 // owned value (unused for parameter leaves)
    const Tensor* ref = nullptr;  // parameter value for Leaf / table for Row
    Parameter* target = nullptr;  // gradient destination, if trainable
    std::size_t a = 0, b = 0;
    std::size_t aux = 0;  // row index, slice offset, or label
    std::vector<std::size_t> list;
    Tensor grad;
  };

  Var push(Node n);
  const Tensor& val(std::size_t id) const;
  Tensor& ensure_grad(std::size_t id);

  std::vector<Node> nodes_;
};

struct RmsPropConfig {
  double lr = 0.001;
  double decay = 0.9;
  double eps = 1e-8;
};

/// Per-parameter running average of squared gradients.
struct RmsPropState {
  std::vector<Tensor> v;
};

/// v <- decay v + (1 - decay) g^2;  theta <- theta - lr g / (sqrt(v) + eps).
void rmsprop_step(std::span<Parameter* const> params, RmsPropState& state, const RmsPropConfig& cfg);

}  // namespace kexnet
