#include "unisparse/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace unisparse {

const char* op_name(Graph::Op op) {
  switch (op) {
    case Graph::Op::input: return "input";
    case Graph::Op::parameter: return "parameter";
    case Graph::Op::constant: return "constant";
    case Graph::Op::identity: return "identity";
    case Graph::Op::add: return "add";
    case Graph::Op::sub: return "sub";
    case Graph::Op::mul: return "mul";
    case Graph::Op::scale: return "scale";
    case Graph::Op::square: return "square";
    case Graph::Op::sum: return "sum";
    case Graph::Op::mean: return "mean";
    case Graph::Op::relu: return "relu";
    case Graph::Op::conv2d: return "conv2d";
    case Graph::Op::maxpool2d: return "maxpool2d";
    case Graph::Op::flatten: return "flatten";
    case Graph::Op::linear: return "linear";
    case Graph::Op::softmax_cross_entropy: return "softmax_cross_entropy";
  }
  return "?";
}

Graph::Node Graph::make_node(Op op, std::vector<std::size_t> inputs,
                             std::string name) {
  Node n;
  n.op = op;
  n.inputs = std::move(inputs);
  n.name = std::move(name);
  return n;
}

Graph::Var Graph::push(Node n) {
  for (std::size_t in : n.inputs) {
    if (in >= nodes_.size()) {
      throw std::invalid_argument(std::string(op_name(n.op)) +
                                  ": operand does not belong to this graph");
    }
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw std::out_of_range("graph: unknown node");
  return nodes_[v.id];
}

Graph::Var Graph::input(std::string name) {
  return push(make_node(Op::input, {}, std::move(name)));
}

Graph::Var Graph::parameter(std::string name, Tensor value) {
  Node n = make_node(Op::parameter, {}, std::move(name));
  n.value = std::move(value);
  return push(std::move(n));
}

Graph::Var Graph::constant(Tensor value) {
  Node n = make_node(Op::constant, {});
  n.value = std::move(value);
  return push(std::move(n));
}

Graph::Var Graph::identity(Var x) { return push(make_node(Op::identity, {x.id})); }
Graph::Var Graph::add(Var a, Var b) { return push(make_node(Op::add, {a.id, b.id})); }
Graph::Var Graph::sub(Var a, Var b) { return push(make_node(Op::sub, {a.id, b.id})); }
Graph::Var Graph::mul(Var a, Var b) { return push(make_node(Op::mul, {a.id, b.id})); }
Graph::Var Graph::square(Var x) { return push(make_node(Op::square, {x.id})); }
Graph::Var Graph::sum(Var x) { return push(make_node(Op::sum, {x.id})); }
Graph::Var Graph::mean(Var x) { return push(make_node(Op::mean, {x.id})); }
Graph::Var Graph::relu(Var x) { return push(make_node(Op::relu, {x.id})); }
Graph::Var Graph::flatten(Var x) { return push(make_node(Op::flatten, {x.id})); }

Graph::Var Graph::scale(Var x, double factor) {
  Node n = make_node(Op::scale, {x.id});
  n.factor = factor;
  return push(std::move(n));
}

Graph::Var Graph::conv2d(Var x, Var filters) {
  return push(make_node(Op::conv2d, {x.id, filters.id}));
}

Graph::Var Graph::maxpool2d(Var x, std::size_t k) {
  if (k == 0) throw std::invalid_argument("maxpool2d: window must be >= 1");
  Node n = make_node(Op::maxpool2d, {x.id});
  n.k = k;
  return push(std::move(n));
}

Graph::Var Graph::linear(Var x, Var weights) {
  return push(make_node(Op::linear, {x.id, weights.id}));
}

Graph::Var Graph::softmax_cross_entropy(Var logits, Var labels) {
  return push(make_node(Op::softmax_cross_entropy, {logits.id, labels.id}));
}

Tensor& Graph::parameter_value(Var v) {
  if (v.id >= nodes_.size() || nodes_[v.id].op != Op::parameter) {
    throw std::invalid_argument("graph: node is not a parameter");
  }
  return nodes_[v.id].value;
}

std::vector<Graph::Var> Graph::parameters() const {
  std::vector<Var> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op == Op::parameter) out.push_back(Var{i});
  }
  return out;
}

std::vector<bool> Graph::ancestors(Var root) const {
  std::vector<bool> mark(nodes_.size(), false);
  mark[root.id] = true;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    if (!mark[i]) continue;
    for (std::size_t in : nodes_[i].inputs) mark[in] = true;
  }
  return mark;
}

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": operand shapes " +
                     shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()) + " differ");
  }
}

void accumulate(Tensor& into, const Tensor& g) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += g[i];
}

struct PoolDims {
  std::size_t planes, h, w, oh, ow;
};

PoolDims pool_dims(const Shape& s, std::size_t k) {
  if (s.size() != 3 && s.size() != 4) {
    throw ShapeError("maxpool2d: input must be [C,H,W] or [N,C,H,W], got " +
                     shape_to_string(s));
  }
  const std::size_t h = s[s.size() - 2];
  const std::size_t w = s[s.size() - 1];
  if (h < k || w < k) {
    throw ShapeError("maxpool2d: window " + std::to_string(k) +
                     " larger than input " + shape_to_string(s));
  }
  std::size_t planes = 1;
  for (std::size_t i = 0; i + 2 < s.size(); ++i) planes *= s[i];
  return {planes, h, w, h / k, w / k};
}

}  // namespace

void Graph::evaluate(Node& n) {
  auto in = [&](std::size_t i) -> const Tensor& {
    return nodes_[n.inputs[i]].value;
  };
  switch (n.op) {
    case Op::input:
    case Op::parameter:
    case Op::constant:
      break;
    case Op::identity:
      n.value = in(0);
      break;
    case Op::add:
    case Op::sub:
    case Op::mul: {
      require_same_shape(op_name(n.op), in(0), in(1));
      n.value = in(0);
      const Tensor& b = in(1);
      for (std::size_t i = 0; i < n.value.size(); ++i) {
        if (n.op == Op::add) n.value[i] += b[i];
        else if (n.op == Op::sub) n.value[i] -= b[i];
        else n.value[i] *= b[i];
      }
      break;
    }
    case Op::scale:
      n.value = in(0);
      for (double& v : n.value.data()) v *= n.factor;
      break;
    case Op::square:
      n.value = in(0);
      for (double& v : n.value.data()) v *= v;
      break;
    case Op::sum:
    case Op::mean: {
      double s = 0.0;
      for (double v : in(0).data()) s += v;
      if (n.op == Op::mean) {
        if (in(0).empty()) throw ShapeError("mean: empty operand");
        s /= static_cast<double>(in(0).size());
      }
      n.value = Tensor::scalar(s);
      break;
    }
    case Op::relu:
      n.value = in(0);
      for (double& v : n.value.data()) v = v > 0.0 ? v : 0.0;
      break;
    case Op::conv2d:
      n.value = unisparse::conv2d(in(0), in(1));
      break;
    case Op::maxpool2d: {
      const Tensor& x = in(0);
      const PoolDims d = pool_dims(x.shape(), n.k);
      Shape out_shape = x.shape();
      out_shape[out_shape.size() - 2] = d.oh;
      out_shape[out_shape.size() - 1] = d.ow;
      n.value = Tensor(out_shape);
      n.argmax.assign(n.value.size(), 0);
      std::size_t o = 0;
      for (std::size_t p = 0; p < d.planes; ++p) {
        const std::size_t base = p * d.h * d.w;
        for (std::size_t u = 0; u < d.oh; ++u) {
          for (std::size_t v = 0; v < d.ow; ++v, ++o) {
            std::size_t best = base + (u * n.k) * d.w + v * n.k;
            for (std::size_t a = 0; a < n.k; ++a) {
              for (std::size_t b = 0; b < n.k; ++b) {
                const std::size_t idx = base + (u * n.k + a) * d.w + v * n.k + b;
                if (x[idx] > x[best]) best = idx;
              }
            }
            n.argmax[o] = best;
            n.value[o] = x[best];
          }
        }
      }
      break;
    }
    case Op::flatten: {
      const Tensor& x = in(0);
      if (x.rank() == 4) {
        n.value = x.reshaped({x.dim(0), x.size() / std::max<std::size_t>(x.dim(0), 1)});
      } else {
        n.value = x.reshaped({x.size()});
      }
      break;
    }
    case Op::linear: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      if (w.rank() != 2) {
        throw ShapeError("linear: weights must be [O,I], got " +
                         shape_to_string(w.shape()));
      }
      const std::size_t outs = w.dim(0);
      const std::size_t ins = w.dim(1);
      std::size_t batch = 1;
      if (x.rank() == 2 && x.dim(1) == ins) {
        batch = x.dim(0);
        n.value = Tensor({batch, outs});
      } else if (x.rank() == 1 && x.dim(0) == ins) {
        n.value = Tensor({outs});
      } else {
        throw ShapeError("linear: input " + shape_to_string(x.shape()) +
                         " does not match weights " + shape_to_string(w.shape()));
      }
      for (std::size_t s = 0; s < batch; ++s) {
        const double* xs = x.data().data() + s * ins;
        for (std::size_t o = 0; o < outs; ++o) {
          const double* wr = w.data().data() + o * ins;
          double acc = 0.0;
          for (std::size_t i = 0; i < ins; ++i) acc += wr[i] * xs[i];
          n.value[s * outs + o] = acc;
        }
      }
      break;
    }
    case Op::softmax_cross_entropy: {
      const Tensor& z = in(0);
      const Tensor& labels = in(1);
      std::size_t batch = 1;
      std::size_t classes = 0;
      if (z.rank() == 2) {
        batch = z.dim(0);
        classes = z.dim(1);
      } else if (z.rank() == 1) {
        classes = z.dim(0);
      } else {
        throw ShapeError("softmax_cross_entropy: logits must be [N,K] or [K], got " +
                         shape_to_string(z.shape()));
      }
      if (labels.size() != batch || batch == 0 || classes == 0) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + shape_to_string(z.shape()));
      }
      n.cache = Tensor(z.shape());
      double loss = 0.0;
      for (std::size_t s = 0; s < batch; ++s) {
        const double* zs = z.data().data() + s * classes;
        double* ps = n.cache.data().data() + s * classes;
        const double label_value = labels[s];
        if (label_value < 0 || label_value >= static_cast<double>(classes) ||
            label_value != std::floor(label_value)) {
          throw ShapeError("softmax_cross_entropy: label " +
                           std::to_string(label_value) + " outside [0," +
                           std::to_string(classes) + ")");
        }
        const auto label = static_cast<std::size_t>(label_value);
        const double zmax = *std::max_element(zs, zs + classes);
        double denom = 0.0;
        for (std::size_t k = 0; k < classes; ++k) {
          ps[k] = std::exp(zs[k] - zmax);
          denom += ps[k];
        }
        for (std::size_t k = 0; k < classes; ++k) ps[k] /= denom;
        loss += std::log(denom) + zmax - zs[label];
      }
      n.value = Tensor::scalar(loss / static_cast<double>(batch));
      break;
    }
  }
}

const Tensor& Graph::forward(Var root,
                             const std::map<std::string, Tensor>& inputs) {
  if (root.id >= nodes_.size()) throw std::out_of_range("forward: unknown root");
  const std::vector<bool> mark = ancestors(root);
  for (std::size_t i = 0; i <= root.id; ++i) {
    if (!mark[i]) continue;
    Node& n = nodes_[i];
    if (n.op == Op::input) {
      auto it = inputs.find(n.name);
      if (it == inputs.end()) {
        throw std::invalid_argument("forward: input '" + n.name + "' is not bound");
      }
      n.value = it->second;
      continue;
    }
    evaluate(n);
  }
  evaluated_ = mark;
  last_root_ = root.id;
  return nodes_[root.id].value;
}

void Graph::propagate(Node& n) {
  auto input_grad = [&](std::size_t i) -> Tensor& {
    return nodes_[n.inputs[i]].grad;
  };
  auto input_value = [&](std::size_t i) -> const Tensor& {
    return nodes_[n.inputs[i]].value;
  };
  const Tensor& g = n.grad;
  switch (n.op) {
    case Op::input:
    case Op::parameter:
    case Op::constant:
      break;
    case Op::identity:
      accumulate(input_grad(0), g);
      break;
    case Op::add:
      accumulate(input_grad(0), g);
      accumulate(input_grad(1), g);
      break;
    case Op::sub: {
      accumulate(input_grad(0), g);
      Tensor& gb = input_grad(1);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
      break;
    }
    case Op::mul: {
      const Tensor& a = input_value(0);
      const Tensor& b = input_value(1);
      Tensor& ga = input_grad(0);
      Tensor& gb = input_grad(1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * b[i];
        gb[i] += g[i] * a[i];
      }
      break;
    }
    case Op::scale: {
      Tensor& gx = input_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * n.factor;
      break;
    }
    case Op::square: {
      const Tensor& x = input_value(0);
      Tensor& gx = input_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 2.0 * x[i] * g[i];
      break;
    }
    case Op::sum:
    case Op::mean: {
      Tensor& gx = input_grad(0);
      double s = g[0];
      if (n.op == Op::mean) s /= static_cast<double>(gx.size());
      for (double& v : gx.data()) v += s;
      break;
    }
    case Op::relu: {
      const Tensor& x = input_value(0);
      Tensor& gx = input_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] > 0.0) gx[i] += g[i];
      }
      break;
    }
    case Op::conv2d: {
      const Tensor& x = input_value(0);
      const Tensor& w = input_value(1);
      accumulate(input_grad(0), conv2d_input_grad(g, w, x.shape()));
      accumulate(input_grad(1), conv2d_filter_grad(g, x, w.shape()));
      break;
    }
    case Op::maxpool2d: {
      Tensor& gx = input_grad(0);
      for (std::size_t o = 0; o < g.size(); ++o) gx[n.argmax[o]] += g[o];
      break;
    }
    case Op::flatten:
      accumulate(input_grad(0), g);
      break;
    case Op::linear: {
      const Tensor& x = input_value(0);
      const Tensor& w = input_value(1);
      Tensor& gx = input_grad(0);
      Tensor& gw = input_grad(1);
      const std::size_t outs = w.dim(0);
      const std::size_t ins = w.dim(1);
      const std::size_t batch = x.rank() == 2 ? x.dim(0) : 1;
      for (std::size_t s = 0; s < batch; ++s) {
        const double* xs = x.data().data() + s * ins;
        double* gxs = gx.data().data() + s * ins;
        for (std::size_t o = 0; o < outs; ++o) {
          const double go = g[s * outs + o];
          if (go == 0.0) continue;
          const double* wr = w.data().data() + o * ins;
          double* gwr = gw.data().data() + o * ins;
          for (std::size_t i = 0; i < ins; ++i) {
            gxs[i] += go * wr[i];
            gwr[i] += go * xs[i];
          }
        }
      }
      break;
    }
    case Op::softmax_cross_entropy: {
      const Tensor& labels = input_value(1);
      Tensor& gz = input_grad(0);
      const std::size_t classes = n.cache.shape().back();
      const std::size_t batch = labels.size();
      const double s = g[0] / static_cast<double>(batch);
      for (std::size_t b = 0; b < batch; ++b) {
        const auto label = static_cast<std::size_t>(labels[b]);
        for (std::size_t k = 0; k < classes; ++k) {
          const double p = n.cache[b * classes + k];
          gz[b * classes + k] += s * (p - (k == label ? 1.0 : 0.0));
        }
      }
      break;
    }
  }
}

void Graph::backward(Var root) {
  if (root.id != last_root_) {
    throw std::logic_error("backward: forward has not been run for this root");
  }
  Node& r = nodes_[root.id];
  if (r.value.size() != 1) {
    throw ShapeError("backward: root must be scalar, got " +
                     shape_to_string(r.value.shape()));
  }
  for (std::size_t i = 0; i <= root.id; ++i) {
    if (evaluated_[i]) nodes_[i].grad = Tensor(nodes_[i].value.shape());
  }
  r.grad.fill(1.0);
  for (std::size_t i = root.id + 1; i-- > 0;) {
    if (evaluated_[i]) propagate(nodes_[i]);
  }
}

}  // namespace unisparse
