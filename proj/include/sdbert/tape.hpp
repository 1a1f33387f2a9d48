#ifndef SDBERT_TAPE_HPP_
#define SDBERT_TAPE_HPP_

#include <functional>
#include <memory>
#include <vector>

#include "sdbert/tensor.hpp"

namespace sdbert {

// Reverse-mode differentiation tape. Operations append nodes in evaluation
// order (so the tape is topologically sorted by construction) and backward()
// replays it once from the loss node down, accumulating gradients.
//
// A tape lives for one forward/backward pass and is then discarded. Leaves
// are either watched external tensors (parameters; their .grad slot is
// populated by backward) or constants owned by the tape.
class Tape {
 public:
  using Ref = int;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf over an externally owned tensor. If t.requires_grad, backward()
  // assigns d(loss)/d(t) into t.grad (zeros when t is off the loss path).
  // The tensor must outlive the tape.
  Ref watch(Tensor& t);
  // Leaf owned by the tape; never differentiated.
  Ref constant(Tensor t);
  // Read-only leaf over an external tensor; never differentiated and never
  // written to (inference over frozen parameters). Must outlive the tape.
  Ref view(const Tensor& t);

  const Tensor& value(Ref r) const;
  double scalar_value(Ref r) const;
  int size() const { return static_cast<int>(nodes_.size()); }

  // --- recorded operations -------------------------------------------------
  Ref matmul(Ref a, Ref b);     // [m x k] * [k x p]
  Ref matmul_nt(Ref a, Ref b);  // [m x k] * [p x k]^T
  Ref add(Ref a, Ref b);
  Ref sub(Ref a, Ref b);
  Ref mul(Ref a, Ref b);  // elementwise
  Ref scale(Ref a, double s);
  Ref add_bias(Ref x, Ref bias);  // [m x n] + bias [n], broadcast over rows
  Ref sum(Ref x);                 // -> scalar
  // Additive mask entries are 0 or kMaskSentinel (see tensor.hpp); the mask
  // is data, not a differentiable input.
  Ref softmax_rows(Ref x, std::shared_ptr<const Tensor> additive_mask = nullptr);
  // Row-wise normalization with learned gain/shift, both shape [n].
  Ref layer_norm(Ref x, Ref gain, Ref shift, double eps = 1e-5);
  // tanh-approximation GELU: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3))).
  Ref gelu(Ref x);
  // Row gather from an embedding table [V x d]; ids outside [0, V) raise
  // ConfigError.
  Ref embed(Ref table, std::vector<int> ids);
  // Row gather from a 2-D tensor; backward scatter-adds.
  Ref gather_rows(Ref x, std::vector<int> rows);
  // Copy of the block starting at (r0, c0) with extents (nr, nc).
  Ref slice(Ref x, int r0, int nr, int c0, int nc);
  // Inverse of slicing a grid: blocks (all [br x bc], row-major grid order)
  // become one [grid_rows*br x grid_cols*bc] tensor.
  Ref assemble_blocks(const std::vector<Ref>& blocks, int grid_rows, int grid_cols);

  // --- support for fused ops defined outside the tape ----------------------
  // Appends a node with a precomputed output; `backprop(tape, self)` must
  // read grad_at(self) and accumulate into grad_buffer(input) for every
  // input with wants_grad(input).
  Ref custom(Tensor output, std::vector<Ref> inputs,
             std::function<void(Tape&, Ref)> backprop);
  bool wants_grad(Ref r) const;
  std::vector<double>& grad_buffer(Ref r);
  const std::vector<double>& grad_at(Ref r) const;

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse. loss must
  // be a scalar node. Populates .grad on every watched requires_grad tensor
  // (zeros for tensors not on the loss path). One backward per tape.
  void backward(Ref loss);

 private:
  struct Node {
    Tensor owned;
    Tensor* bound = nullptr;
    const Tensor* bound_view = nullptr;
    bool needs_grad = false;
    std::vector<double> grad;
    std::function<void(Tape&, Ref)> backprop;
  };

  const Tensor& tensor_of(const Node& n) const {
    return n.bound ? *n.bound : (n.bound_view ? *n.bound_view : n.owned);
  }
  Ref push(Tensor value, const std::vector<Ref>& inputs);
  void check_ref(Ref r) const;
  const Tensor& input2d(Ref r, const char* op) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace sdbert

#endif  // SDBERT_TAPE_HPP_
