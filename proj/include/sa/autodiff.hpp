// Reverse-mode automatic differentiation on a tape. Operations record their
// backward closure as they run; backward() sweeps the tape in reverse
// creation order (parents always precede children) and accumulates gradients
// into the external parameter tensors.
//
// One tape belongs to one logical training thread. Values are plain Tensors,
// safe to share once the tape is gone.
#pragma once

#include <functional>
#include <vector>

#include "sa/rng.hpp"
#include "sa/tensor.hpp"

namespace sa::nn {

struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  // Leaf bound to an external parameter; backward() accumulates into t.grad
  // when t.requires_grad is set.
  Var param(Tensor& t);
  // Leaf copied in, never differentiated.
  Var constant(Tensor t);
  // Data input; set needs_grad to make grad(v) retrievable after backward.
  Var input(Tensor t, bool needs_grad = false);

  const Tensor& val(Var v) const { return node(v).value; }
  // Gradient of the last backward() target w.r.t. v (nodes that needed grad).
  const Tensor& grad(Var v) const;

  Var add(Var a, Var b);                   // same shape
  Var add_bias(Var a, Var bias);           // bias [n] broadcast over last dim
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);                   // elementwise, same shape
  Var scale(Var a, double s);
  Var matmul(Var a, Var b);                // see cases in the .cpp
  Var relu(Var a);
  Var sigmoid(Var a);
  Var softmax(Var a, int axis);
  Var reshape(Var a, Shape s);
  Var transpose(Var a, std::vector<int> perm);
  // Inverted dropout: scales kept entries by 1/(1-rate) so inference needs no
  // rescaling. Identity when !training or rate == 0.
  Var dropout(Var a, double rate, bool training, Rng& rng);
  Var mean_all(Var a);                     // scalar

  // Losses: scalar mean over the batch, targets are constants.
  // Probabilities are clamped to [1e-7, 1-1e-7] before the log.
  Var bce_loss(Var pred, const Tensor& target);
  Var cce_loss(Var pred, const Tensor& target);  // pred rows are distributions, target one-hot
  Var mse_loss(Var pred, const Tensor& target);

  // out must be scalar. Accumulates into param tensors' .grad.
  void backward(Var out);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor* external = nullptr;
    bool needs_grad = false;
    std::function<void(Tape&, const Tensor& gout)> backward;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;

  Node& node(Var v);
  const Node& node(Var v) const;
  Var push(Tensor value, bool needs_grad);
  bool needs(Var v) const { return node(v).needs_grad; }
  // Zero-initialized gradient buffer for a node, or nullptr if the node does
  // not participate in differentiation.
  Tensor* grad_buf(Var v);

  friend struct TapeOps;
};

double clamp_probability(double p);

}  // namespace sa::nn
