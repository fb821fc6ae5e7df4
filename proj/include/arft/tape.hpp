#pragma once

#include <functional>
#include <vector>

#include "arft/rng.hpp"
#include "arft/tensor.hpp"

namespace arft {

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid for the tape that
// created it.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
};

// Define-by-run gradient tape. Each forward op appends one node; creation
// order is the topological order, so backward() is a single reverse sweep.
// A tape lives for one forward/backward cycle and is rebuilt per step.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf holding an input or constant; no gradient is tracked.
  Var constant(Tensor value);
  // Leaf holding a trainable parameter; grad(var) is defined after backward().
  Var param(Tensor value);

  const Tensor& value(Var v) const;
  // Gradient buffer of a node that requires grad. Zero until backward() runs.
  const Tensor& grad(Var v) const;

  // Reverse sweep from a scalar loss node. Calling backward a second time
  // without recording new ops is a contract error.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // --- internal, used by the op implementations ---
  struct Node {
    Tensor value;
    Tensor grad;  // allocated iff requires_grad
    bool requires_grad = false;
    std::vector<int> parents;
    // Accumulates this node's grad into its parents' grads.
    std::function<void(Tape&, int)> backprop;
  };

  int emit(Tensor value, bool requires_grad, std::vector<int> parents,
           std::function<void(Tape&, int)> backprop);
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

 private:
  std::vector<Node> nodes_;
  std::size_t nodes_at_last_backward_ = 0;
  bool backward_ran_ = false;
};

// --- primitive ops ----------------------------------------------------------
// Elementwise binaries broadcast right-aligned, numpy style (missing leading
// dims and size-1 dims stretch). Gradients reduce back over broadcast dims.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

Var add_scalar(Var a, double s);
Var mul_scalar(Var a, double s);
// Elementwise a^e for constant e. e == 0 gives ones with zero gradient.
Var pow_scalar(Var a, double e);

Var exp(Var a);
Var log(Var a);
// max(a, lo); gradient passes only where a > lo.
Var clamp_min(Var a, double lo);

// Batched matrix product over the two trailing axes. Leading (batch) axes
// broadcast right-aligned from size 1 or when missing.
Var matmul(Var a, Var b);

// Numerically stabilized softmax along `axis` (negative counts from the back).
Var softmax(Var a, int axis);

// Normalization over the last axis; gain/bias have shape [last_dim].
Var layer_norm(Var x, Var gain, Var bias, double eps);

// Splits the (even) last axis in half: out = first ⊙ relu(second).
Var reglu(Var x);

// Inverted dropout: train-time zero/rescale, identity at inference.
// rate == 0 and inference mode consume no rng draws.
Var dropout(Var x, double rate, bool training, Rng& rng);

Var sum_all(Var a);
Var mean_all(Var a);
// Sum over the last axis; keepdim leaves a trailing axis of size 1.
Var sum_last(Var a, bool keepdim);

Var concat(const std::vector<Var>& xs, int axis);
Var slice(Var x, int axis, std::size_t start, std::size_t len);
Var transpose_last2(Var x);
Var reshape(Var x, Shape new_shape);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace arft
