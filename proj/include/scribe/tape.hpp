#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "scribe/tensor.hpp"

namespace scribe {

// Named trainable tensor with a gradient accumulator.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Owns model parameters in a stable insertion order (checkpointing and the
// optimizer index by that order).
class ParamStore {
 public:
  Param& add(const std::string& name, Tensor init);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t count() const { return params_.size(); }
  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }

  std::size_t total_size() const;
  void zero_grads();

 private:
  std::deque<Param> params_;  // deque: stable addresses across add()
  std::unordered_map<std::string, std::size_t> index_;
};

// Handle to a node on a tape.
struct Value {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Records one step's computation for a single reverse sweep. Nodes are
// created in topological order and backward() walks them in exact reverse,
// so gradient accumulation order is fixed and replay is deterministic.
// A tape is confined to one thread and supports one backward pass.
class Tape {
 public:
  // leaves
  Value constant(Tensor v);
  Value input(Tensor v, bool requires_grad = false);
  Value param(Param& p);  // binds once; repeated calls return the same node

  // elementwise (shapes must match exactly; no broadcasting)
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value exp(Value a);
  // log of a non-positive value throws std::domain_error when finite checks
  // are on; otherwise the argument is floored at 1e-300 (large negative
  // result instead of -inf)
  Value log(Value a);
  Value tanh(Value a);
  Value logistic(Value a);
  Value softmax(Value a);  // rank-1, or row-wise on rank-2; max-shifted
  Value clamp(Value a, real lo, real hi);
  Value affine(Value a, real scale, real shift);

  // shape
  Value concat_cols(Value a, Value b);
  Value slice_cols(Value a, std::size_t c0, std::size_t c1);
  Value reshape(Value a, std::vector<std::size_t> shape);
  Value repeat_rows(Value a, std::size_t rows);  // rank-1 (n) -> (rows, n)

  // reductions / linear algebra
  Value sum(Value a);  // -> (1)
  Value matmul(Value a, Value b);
  // w (out,in), b (out); a rank-1 (in) -> (out), or rank-2 (batch,in) ->
  // (batch,out) with the bias added to every row
  Value linear(Value w, Value b, Value a);
  Value linear(Param& w, Param& b, Value a);

  // fused losses (stable forms), summed over all elements/rows -> (1)
  Value bce_with_logits(Value logits, Value targets);
  Value softmax_xent(Value logits, std::vector<int> labels);

  // attention primitives
  // centre/sigma2/stride: rank-1 (batch); -> (batch, n, extent), rows are
  // normalized Gaussian responses over pixel coordinates 1..extent
  Value gauss_filterbank(Value centre, Value sigma2, Value stride, std::size_t n, std::size_t extent);
  // fx (batch,n,A), fy (batch,n,B), gamma (batch), image (batch, B*A)
  // -> (batch, n*n): gamma * Fy X Fx^T, row-major flattened
  Value attn_patch(Value fx, Value fy, Value gamma, Value image);
  // patch (batch, n*n) -> (batch, B*A): (1/gamma) * Fy^T W Fx
  Value attn_canvas(Value fx, Value fy, Value gamma, Value patch);

  const Tensor& value(Value v) const;
  const Tensor& grad(Value v) const;  // valid after backward()

  // root must hold a single element; accumulates into bound Param::grad
  void backward(Value root);

  void check_finite(bool on) { check_finite_ = on; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op {
    kLeaf, kAdd, kSub, kMul, kExp, kLog, kTanh, kLogistic, kSoftmax,
    kClamp, kAffine, kConcatCols, kSliceCols, kReshape, kRepeatRows,
    kSum, kMatMul, kLinear, kBceLogits, kSoftmaxXent,
    kFilterbank, kAttnPatch, kAttnCanvas,
  };
  struct Node {
    Op op = Op::kLeaf;
    int in[4] = {-1, -1, -1, -1};
    int nin = 0;
    Tensor val;
    Tensor grad;
    bool needs_grad = false;
    Param* bound = nullptr;
    real s0 = 0, s1 = 0;             // op scalars (affine, clamp)
    std::size_t i0 = 0, i1 = 0;      // slice range / filterbank dims
    std::vector<int> labels;         // softmax_xent
  };

  Value push(Node n);
  Node& at(Value v);
  const Node& at(Value v) const;
  Value unary(Op op, Value a);
  Value binary(Op op, Value a, Value b);
  void backprop(Node& n);

  std::vector<Node> nodes_;
  std::unordered_map<const Param*, int> bound_;
  bool check_finite_ = false;
  bool backward_done_ = false;
};

}  // namespace scribe
