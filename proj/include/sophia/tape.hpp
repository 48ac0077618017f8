#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "sophia/tensor.hpp"

namespace sophia {

/// Recorded computation graph over dense tensors. Nodes are appended in
/// topological order and evaluated eagerly; every primitive's backward rule
/// is itself expressed with tape primitives, so the backward pass of a
/// backward pass records fine (gradients and Hessian-vector products are both
/// exact, no numeric differentiation anywhere).
///
/// A tape is single-writer while recording and may be read from any number of
/// threads once no more nodes are being appended.
class Tape {
 public:
  using NodeId = int32_t;
  static constexpr NodeId kNone = -1;

  enum class Op : uint8_t {
    kInput,
    kConst,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kScale,
    kNeg,
    kExp,
    kLog,
    kTanh,
    kRelu,
    kHeaviside,
    kPow,
    kMatmul,
    kTranspose,
    kReshape,
    kSlice,
    kPad,
    kSum,
    kMean,
    kBroadcast,
    kRowSum,
    kRowBroadcast,
    kColSum,
    kColBroadcast,
    kSoftmaxRows,
    kEmbedGather,
    kEmbedScatter,
    kCrossEntropy,
  };

  static const char* op_name(Op op);

  // Leaves.
  NodeId input(Tensor value);
  NodeId constant(Tensor value);
  NodeId constant_scalar(double value) { return constant(Tensor::scalar(value)); }

  // Elementwise arithmetic. Either operand of add/sub/mul/div may be a
  // size-1 scalar, which broadcasts against the other; otherwise shapes must
  // match exactly.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId neg(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId tanh(NodeId a);
  /// relu'' is defined as 0 everywhere, including at the kink.
  NodeId relu(NodeId a);
  NodeId heaviside(NodeId a);
  NodeId pow(NodeId a, double exponent);

  // Linear algebra and shape plumbing.
  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId reshape(NodeId a, std::vector<int64_t> shape);
  /// Contiguous slice of the flattened tensor; result shape {length}.
  NodeId slice(NodeId a, int64_t offset, int64_t length);
  /// Embeds a flat tensor into zeros of length `total` at `offset`.
  NodeId pad(NodeId a, int64_t offset, int64_t total);

  // Reductions and broadcasts.
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId broadcast(NodeId scalar_node, std::vector<int64_t> shape);
  NodeId row_sum(NodeId a);                       // (r,c) -> {r}
  NodeId row_broadcast(NodeId a, int64_t cols);   // {r} -> (r,c)
  NodeId col_sum(NodeId a);                       // (r,c) -> {c}
  NodeId col_broadcast(NodeId a, int64_t rows);   // {c} -> (r,c)

  // Classifier head.
  NodeId softmax_rows(NodeId logits);
  /// Rows of `table` (V,E) gathered per index; indices are a (B, n) matrix
  /// flattened row-major, output is (B, n*E).
  NodeId embedding(NodeId table, std::shared_ptr<const std::vector<int32_t>> indices,
                   int64_t batch, int64_t per_row);
  /// Mean softmax cross-entropy over the rows of `logits` (B,V) against
  /// integer labels. The logits node stays addressable, so callers get both
  /// the scalar loss and the raw logits from the one fused primitive.
  NodeId cross_entropy(NodeId logits, std::shared_ptr<const std::vector<int32_t>> labels);

  const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
  int64_t num_nodes() const { return static_cast<int64_t>(nodes_.size()); }

  /// Reverse pass from a scalar output. Appends adjoint nodes to this tape
  /// and returns one gradient node per requested leaf (zeros when the output
  /// does not depend on a leaf). The returned nodes are differentiable again.
  std::vector<NodeId> gradient(NodeId output, std::span<const NodeId> wrt);

 private:
  struct Node {
    Op op;
    NodeId a = kNone;
    NodeId b = kNone;
    double c0 = 0.0;    // scale factor / power exponent
    int64_t i0 = 0;     // op-specific: offset / rows / batch
    int64_t i1 = 0;     // op-specific: total / cols / per_row
    std::shared_ptr<const std::vector<int32_t>> idx;  // embedding indices / labels
    Tensor value;
  };

  NodeId push(Node node);
  const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }
  /// Sums `g` down to a scalar when the consumer operand was a broadcast
  /// scalar; otherwise returns `g` unchanged.
  NodeId reduce_to(NodeId g, NodeId operand);
  void emit_vjp(NodeId id, NodeId adj, std::vector<NodeId>& adjoints);
  void accumulate(NodeId parent, NodeId contribution, std::vector<NodeId>& adjoints);

  std::vector<Node> nodes_;
};

}  // namespace sophia
