#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "unisparse/tensor.hpp"

namespace unisparse {

/// Define-then-run reverse-mode autodiff over Tensors.
///
/// Nodes are appended in creation order, which is a topological order because
/// an op can only reference nodes that already exist. forward() evaluates the
/// ancestors of a root given bound named inputs; backward() then walks the
/// same set in reverse, visiting each node once. The graph can be re-run with
/// fresh inputs, which is how the trainer reuses one graph per minibatch.
class Graph {
 public:
  struct Var {
    std::size_t id = std::numeric_limits<std::size_t>::max();
    bool valid() const { return id != std::numeric_limits<std::size_t>::max(); }
  };

  enum class Op {
    input,
    parameter,
    constant,
    identity,
    add,
    sub,
    mul,
    scale,
    square,
    sum,
    mean,
    relu,
    conv2d,
    maxpool2d,
    flatten,
    linear,
    softmax_cross_entropy,
  };

  Var input(std::string name);
  Var parameter(std::string name, Tensor value);
  Var constant(Tensor value);

  Var identity(Var x);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var x, double factor);
  Var square(Var x);
  Var sum(Var x);
  Var mean(Var x);
  /// Derivative at exactly zero is taken as 0.
  Var relu(Var x);
  Var conv2d(Var x, Var filters);
  /// Non-overlapping k×k max pooling on [C,H,W] or [N,C,H,W]; remainders
  /// are dropped. Ties route the gradient to the first maximum.
  Var maxpool2d(Var x, std::size_t k);
  /// [N,...] → [N, rest] for rank-4 inputs, otherwise a flat vector.
  Var flatten(Var x);
  /// x [N,I] (or [I]) times weights [O,I] transposed → [N,O] (or [O]).
  Var linear(Var x, Var weights);
  /// Mean softmax cross-entropy of logits [N,K] (or [K]) against a [N]
  /// (or [1]) tensor of class indices.
  Var softmax_cross_entropy(Var logits, Var labels);

  const Tensor& forward(Var root, const std::map<std::string, Tensor>& inputs);
  const Tensor& forward(Var root) { return forward(root, {}); }

  /// Populates gradients of the scalar root with respect to every ancestor.
  void backward(Var root);

  const Tensor& value(Var v) const { return node(v).value; }
  const Tensor& grad(Var v) const { return node(v).grad; }
  Tensor& parameter_value(Var v);
  std::vector<Var> parameters() const;
  const std::string& name(Var v) const { return node(v).name; }
  Op op(Var v) const { return node(v).op; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op = Op::constant;
    std::vector<std::size_t> inputs;
    std::string name;
    double factor = 0.0;
    std::size_t k = 0;
    Tensor value;
    Tensor grad;
    Tensor cache;
    std::vector<std::size_t> argmax;
  };

  static Node make_node(Op op, std::vector<std::size_t> inputs,
                        std::string name = {});
  Var push(Node n);
  const Node& node(Var v) const;
  std::vector<bool> ancestors(Var root) const;
  void evaluate(Node& n);
  void propagate(Node& n);

  std::vector<Node> nodes_;
  std::vector<bool> evaluated_;
  std::size_t last_root_ = std::numeric_limits<std::size_t>::max();
};

const char* op_name(Graph::Op op);

}  // namespace unisparse
