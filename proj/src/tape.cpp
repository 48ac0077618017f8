#include "sophia/tape.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "sophia/errors.hpp"

namespace sophia {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

bool broadcast_compatible(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) || a.is_scalar() || b.is_scalar();
}

const std::vector<int64_t>& broadcast_shape(const Tensor& a, const Tensor& b) {
  return a.is_scalar() ? b.shape() : a.shape();
}

}  // namespace

const char* Tape::op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kConst: return "const";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kScale: return "scale";
    case Op::kNeg: return "neg";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kTanh: return "tanh";
    case Op::kRelu: return "relu";
    case Op::kHeaviside: return "heaviside";
    case Op::kPow: return "pow";
    case Op::kMatmul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kReshape: return "reshape";
    case Op::kSlice: return "slice";
    case Op::kPad: return "pad";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kBroadcast: return "broadcast";
    case Op::kRowSum: return "row_sum";
    case Op::kRowBroadcast: return "row_broadcast";
    case Op::kColSum: return "col_sum";
    case Op::kColBroadcast: return "col_broadcast";
    case Op::kSoftmaxRows: return "softmax_rows";
    case Op::kEmbedGather: return "embedding";
    case Op::kEmbedScatter: return "embed_scatter";
    case Op::kCrossEntropy: return "cross_entropy";
  }
  return "?";
}

Tape::NodeId Tape::push(Node node) {
  if (node.op != Op::kInput && node.op != Op::kConst && !node.value.all_finite()) {
    throw OverflowError(std::string("non-finite result in primitive '") + op_name(node.op) +
                        "' (node " + std::to_string(nodes_.size()) + ")");
  }
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::NodeId Tape::input(Tensor value) {
  if (!value.all_finite()) throw OverflowError("non-finite input tensor");
  return push({Op::kInput, kNone, kNone, 0.0, 0, 0, nullptr, std::move(value)});
}

Tape::NodeId Tape::constant(Tensor value) {
  return push({Op::kConst, kNone, kNone, 0.0, 0, 0, nullptr, std::move(value)});
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (!broadcast_compatible(va, vb))
    throw ShapeError("add " + va.shape_str() + " vs " + vb.shape_str());
  Tensor out = Tensor::zeros(broadcast_shape(va, vb));
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = va[va.is_scalar() ? 0 : i] + vb[vb.is_scalar() ? 0 : i];
  return push({Op::kAdd, a, b, 0.0, 0, 0, nullptr, std::move(out)});
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (!broadcast_compatible(va, vb))
    throw ShapeError("sub " + va.shape_str() + " vs " + vb.shape_str());
  Tensor out = Tensor::zeros(broadcast_shape(va, vb));
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = va[va.is_scalar() ? 0 : i] - vb[vb.is_scalar() ? 0 : i];
  return push({Op::kSub, a, b, 0.0, 0, 0, nullptr, std::move(out)});
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (!broadcast_compatible(va, vb))
    throw ShapeError("mul " + va.shape_str() + " vs " + vb.shape_str());
  Tensor out = Tensor::zeros(broadcast_shape(va, vb));
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = va[va.is_scalar() ? 0 : i] * vb[vb.is_scalar() ? 0 : i];
  return push({Op::kMul, a, b, 0.0, 0, 0, nullptr, std::move(out)});
}

Tape::NodeId Tape::div(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (!broadcast_compatible(va, vb))
    throw ShapeError("div " + va.shape_str() + " vs " + vb.shape_str());
  Tensor out = Tensor::zeros(broadcast_shape(va, vb));
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = va[va.is_scalar() ? 0 : i] / vb[vb.is_scalar() ? 0 : i];
  return push({Op::kDiv, a, b, 0.0, 0, 0, nullptr, std::move(out)});
}

Tape::NodeId Tape::scale(NodeId a, double c) {
  const Tensor& va = value(a);
  Tensor out = Tensor::zeros(va.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = va[i] * c;
  return push({Op::kScale, a, kNone, c, 0, 0, nullptr, std::move(out)});
}

Tape::NodeId Tape::neg(NodeId a) {
  const Tensor& va = value(a);
  Tensor out = Tensor::zeros(va.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = -va[i];
  return push({Op::kNeg, a, kNone, 0.0, 0, 0, nullptr, std::move(out)});
}

Tape::NodeId Tape::exp(NodeId a) {
  const Tensor& va = value(a);
  Tensor out = Tensor::zeros(va.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(va[i]);
  return push({Op::kExp, a, kNone, 0.0, 0, 0, nullptr, std::move(out)});
}

Tape::NodeId Tape::log(NodeId a) {
  const Tensor& va = value(a);
  Tensor out = Tensor::zeros(va.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::log(va[i]);
  return push({Op::kLog, a, kNone, 0.0, 0, 0, nullptr, std::move(out)});
}

Tape::NodeId Tape::tanh(NodeId a) {
  const Tensor& va = value(a);
  Tensor out = Tensor::zeros(va.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(va[i]);
  return push({Op::kTanh, a, kNone, 0.0, 0, 0, nullptr, std::move(out)});
}

Tape::NodeId Tape::relu(NodeId a) {
  const Tensor& va = value(a);
  Tensor out = Tensor::zeros(va.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = va[i] > 0.0 ? va[i] : 0.0;
  return push({Op::kRelu, a, kNone, 0.0, 0, 0, nullptr, std::move(out)});
}

Tape::NodeId Tape::heaviside(NodeId a) {
  const Tensor& va = value(a);
  Tensor out = Tensor::zeros(va.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = va[i] > 0.0 ? 1.0 : 0.0;
  return push({Op::kHeaviside, a, kNone, 0.0, 0, 0, nullptr, std::move(out)});
}

Tape::NodeId Tape::pow(NodeId a, double exponent) {
  const Tensor& va = value(a);
  Tensor out = Tensor::zeros(va.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::pow(va[i], exponent);
  return push({Op::kPow, a, kNone, exponent, 0, 0, nullptr, std::move(out)});
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.shape().size() != 2 || vb.shape().size() != 2 || va.cols() != vb.rows())
    throw ShapeError("matmul " + va.shape_str() + " x " + vb.shape_str());
  Tensor out = Tensor::zeros({va.rows(), vb.cols()});
  MatMap(out.data(), va.rows(), vb.cols()) =
      ConstMatMap(va.data(), va.rows(), va.cols()) * ConstMatMap(vb.data(), vb.rows(), vb.cols());
  return push({Op::kMatmul, a, b, 0.0, 0, 0, nullptr, std::move(out)});
}

Tape::NodeId Tape::transpose(NodeId a) {
  const Tensor& va = value(a);
  if (va.shape().size() != 2) throw ShapeError("transpose needs a matrix, got " + va.shape_str());
  Tensor out = Tensor::zeros({va.cols(), va.rows()});
  MatMap(out.data(), va.cols(), va.rows()) =
      ConstMatMap(va.data(), va.rows(), va.cols()).transpose();
  return push({Op::kTranspose, a, kNone, 0.0, 0, 0, nullptr, std::move(out)});
}

Tape::NodeId Tape::reshape(NodeId a, std::vector<int64_t> shape) {
  const Tensor& va = value(a);
  Tensor out(std::move(shape), std::vector<double>(va.data(), va.data() + va.size()));
  return push({Op::kReshape, a, kNone, 0.0, 0, 0, nullptr, std::move(out)});
}

Tape::NodeId Tape::slice(NodeId a, int64_t offset, int64_t length) {
  const Tensor& va = value(a);
  if (offset < 0 || length <= 0 || offset + length > va.size())
    throw ShapeError("slice [" + std::to_string(offset) + "," +
                     std::to_string(offset + length) + ") out of " + std::to_string(va.size()));
  Tensor out({length}, std::vector<double>(va.data() + offset, va.data() + offset + length));
  return push({Op::kSlice, a, kNone, 0.0, offset, 0, nullptr, std::move(out)});
}

Tape::NodeId Tape::pad(NodeId a, int64_t offset, int64_t total) {
  const Tensor& va = value(a);
  if (offset < 0 || offset + va.size() > total)
    throw ShapeError("pad target too small");
  Tensor out = Tensor::zeros({total});
  for (int64_t i = 0; i < va.size(); ++i) out[offset + i] = va[i];
  return push({Op::kPad, a, kNone, 0.0, offset, total, nullptr, std::move(out)});
}

Tape::NodeId Tape::sum(NodeId a) {
  const Tensor& va = value(a);
  double s = 0.0;
  for (int64_t i = 0; i < va.size(); ++i) s += va[i];
  return push({Op::kSum, a, kNone, 0.0, 0, 0, nullptr, Tensor::scalar(s)});
}

Tape::NodeId Tape::mean(NodeId a) {
  const Tensor& va = value(a);
  double s = 0.0;
  for (int64_t i = 0; i < va.size(); ++i) s += va[i];
  return push({Op::kMean, a, kNone, 0.0, 0, 0, nullptr,
               Tensor::scalar(s / static_cast<double>(va.size()))});
}

Tape::NodeId Tape::broadcast(NodeId scalar_node, std::vector<int64_t> shape) {
  const Tensor& vs = value(scalar_node);
  if (!vs.is_scalar()) throw ShapeError("broadcast source must be scalar");
  Tensor out = Tensor::full(std::move(shape), vs[0]);
  return push({Op::kBroadcast, scalar_node, kNone, 0.0, 0, 0, nullptr, std::move(out)});
}

Tape::NodeId Tape::row_sum(NodeId a) {
  const Tensor& va = value(a);
  int64_t r = va.rows(), c = va.cols();
  Tensor out = Tensor::zeros({r});
  for (int64_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < c; ++j) s += va[i * c + j];
    out[i] = s;
  }
  return push({Op::kRowSum, a, kNone, 0.0, 0, c, nullptr, std::move(out)});
}

Tape::NodeId Tape::row_broadcast(NodeId a, int64_t cols) {
  const Tensor& va = value(a);
  if (va.shape().size() != 1) throw ShapeError("row_broadcast needs a vector");
  int64_t r = va.size();
  Tensor out = Tensor::zeros({r, cols});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < cols; ++j) out[i * cols + j] = va[i];
  return push({Op::kRowBroadcast, a, kNone, 0.0, 0, cols, nullptr, std::move(out)});
}

Tape::NodeId Tape::col_sum(NodeId a) {
  const Tensor& va = value(a);
  int64_t r = va.rows(), c = va.cols();
  Tensor out = Tensor::zeros({c});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out[j] += va[i * c + j];
  return push({Op::kColSum, a, kNone, 0.0, r, 0, nullptr, std::move(out)});
}

Tape::NodeId Tape::col_broadcast(NodeId a, int64_t rows) {
  const Tensor& va = value(a);
  if (va.shape().size() != 1) throw ShapeError("col_broadcast needs a vector");
  int64_t c = va.size();
  Tensor out = Tensor::zeros({rows, c});
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < c; ++j) out[i * c + j] = va[j];
  return push({Op::kColBroadcast, a, kNone, 0.0, rows, 0, nullptr, std::move(out)});
}

Tape::NodeId Tape::softmax_rows(NodeId logits) {
  const Tensor& vl = value(logits);
  int64_t r = vl.rows(), c = vl.cols();
  Tensor out = Tensor::zeros({r, c});
  for (int64_t i = 0; i < r; ++i) {
    double m = vl[i * c];
    for (int64_t j = 1; j < c; ++j) m = std::max(m, vl[i * c + j]);
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(vl[i * c + j] - m);
      z += out[i * c + j];
    }
    for (int64_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  return push({Op::kSoftmaxRows, logits, kNone, 0.0, 0, 0, nullptr, std::move(out)});
}

Tape::NodeId Tape::embedding(NodeId table, std::shared_ptr<const std::vector<int32_t>> indices,
                             int64_t batch, int64_t per_row) {
  const Tensor& vt = value(table);
  int64_t v = vt.rows(), e = vt.cols();
  if (static_cast<int64_t>(indices->size()) != batch * per_row)
    throw ShapeError("embedding index count mismatch");
  Tensor out = Tensor::zeros({batch, per_row * e});
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t k = 0; k < per_row; ++k) {
      int32_t ix = (*indices)[static_cast<size_t>(b * per_row + k)];
      if (ix < 0 || ix >= v) throw ShapeError("embedding index out of range");
      const double* src = vt.data() + ix * e;
      double* dst = out.data() + b * (per_row * e) + k * e;
      for (int64_t j = 0; j < e; ++j) dst[j] = src[j];
    }
  }
  return push({Op::kEmbedGather, table, kNone, 0.0, batch, per_row, std::move(indices),
               std::move(out)});
}

Tape::NodeId Tape::cross_entropy(NodeId logits,
                                 std::shared_ptr<const std::vector<int32_t>> labels) {
  const Tensor& vl = value(logits);
  int64_t r = vl.rows(), c = vl.cols();
  if (static_cast<int64_t>(labels->size()) != r)
    throw ShapeError("cross_entropy label count mismatch");
  double total = 0.0;
  for (int64_t i = 0; i < r; ++i) {
    int32_t y = (*labels)[static_cast<size_t>(i)];
    if (y < 0 || y >= c) throw ShapeError("cross_entropy label out of range");
    double m = vl[i * c];
    for (int64_t j = 1; j < c; ++j) m = std::max(m, vl[i * c + j]);
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) z += std::exp(vl[i * c + j] - m);
    total += m + std::log(z) - vl[i * c + y];
  }
  return push({Op::kCrossEntropy, logits, kNone, 0.0, 0, 0, std::move(labels),
               Tensor::scalar(total / static_cast<double>(r))});
}

Tape::NodeId Tape::reduce_to(NodeId g, NodeId operand) {
  if (value(operand).is_scalar() && !value(g).is_scalar()) return sum(g);
  return g;
}

void Tape::accumulate(NodeId parent, NodeId contribution, std::vector<NodeId>& adjoints) {
  NodeId& slot = adjoints[static_cast<size_t>(parent)];
  slot = (slot == kNone) ? contribution : add(slot, contribution);
}

void Tape::emit_vjp(NodeId id, NodeId adj, std::vector<NodeId>& adjoints) {
  const Node n = node(id);  // copy: pushing nodes may reallocate nodes_
  switch (n.op) {
    case Op::kInput:
    case Op::kConst:
      return;
    case Op::kAdd:
      accumulate(n.a, reduce_to(adj, n.a), adjoints);
      accumulate(n.b, reduce_to(adj, n.b), adjoints);
      return;
    case Op::kSub:
      accumulate(n.a, reduce_to(adj, n.a), adjoints);
      accumulate(n.b, reduce_to(neg(adj), n.b), adjoints);
      return;
    case Op::kMul:
      accumulate(n.a, reduce_to(mul(adj, n.b), n.a), adjoints);
      accumulate(n.b, reduce_to(mul(adj, n.a), n.b), adjoints);
      return;
    case Op::kDiv:
      accumulate(n.a, reduce_to(div(adj, n.b), n.a), adjoints);
      accumulate(n.b, reduce_to(neg(div(mul(adj, n.a), mul(n.b, n.b))), n.b), adjoints);
      return;
    case Op::kScale:
      accumulate(n.a, scale(adj, n.c0), adjoints);
      return;
    case Op::kNeg:
      accumulate(n.a, neg(adj), adjoints);
      return;
    case Op::kExp:
      accumulate(n.a, mul(adj, id), adjoints);
      return;
    case Op::kLog:
      accumulate(n.a, div(adj, n.a), adjoints);
      return;
    case Op::kTanh: {
      NodeId one = constant_scalar(1.0);
      accumulate(n.a, mul(adj, sub(one, mul(id, id))), adjoints);
      return;
    }
    case Op::kRelu:
      accumulate(n.a, mul(adj, heaviside(n.a)), adjoints);
      return;
    case Op::kHeaviside:
      return;  // derivative defined as 0 everywhere
    case Op::kPow:
      accumulate(n.a, scale(mul(adj, pow(n.a, n.c0 - 1.0)), n.c0), adjoints);
      return;
    case Op::kMatmul:
      accumulate(n.a, matmul(adj, transpose(n.b)), adjoints);
      accumulate(n.b, matmul(transpose(n.a), adj), adjoints);
      return;
    case Op::kTranspose:
      accumulate(n.a, transpose(adj), adjoints);
      return;
    case Op::kReshape:
      accumulate(n.a, reshape(adj, value(n.a).shape()), adjoints);
      return;
    case Op::kSlice:
      accumulate(n.a, pad(adj, n.i0, value(n.a).size()), adjoints);
      return;
    case Op::kPad:
      accumulate(n.a, slice(adj, n.i0, value(n.a).size()), adjoints);
      return;
    case Op::kSum:
      accumulate(n.a, broadcast(adj, value(n.a).shape()), adjoints);
      return;
    case Op::kMean:
      accumulate(n.a, scale(broadcast(adj, value(n.a).shape()),
                            1.0 / static_cast<double>(value(n.a).size())),
                 adjoints);
      return;
    case Op::kBroadcast:
      accumulate(n.a, sum(adj), adjoints);
      return;
    case Op::kRowSum:
      accumulate(n.a, row_broadcast(adj, n.i1), adjoints);
      return;
    case Op::kRowBroadcast:
      accumulate(n.a, row_sum(adj), adjoints);
      return;
    case Op::kColSum:
      accumulate(n.a, col_broadcast(adj, n.i0), adjoints);
      return;
    case Op::kColBroadcast:
      accumulate(n.a, col_sum(adj), adjoints);
      return;
    case Op::kSoftmaxRows: {
      // adj_z = p * (adj - rowbcast(rowsum(p * adj)))
      NodeId weighted = mul(id, adj);
      NodeId correction = row_broadcast(row_sum(weighted), value(id).cols());
      accumulate(n.a, mul(id, sub(adj, correction)), adjoints);
      return;
    }
    case Op::kEmbedGather: {
      const Tensor& table = value(n.a);
      Node scat{Op::kEmbedScatter, adj, kNone, 0.0, table.rows(), table.cols(), n.idx, {}};
      // forward of the scatter node
      const Tensor& g = value(adj);
      int64_t e = table.cols();
      int64_t per_row = n.i1;
      Tensor out = Tensor::zeros({table.rows(), e});
      for (int64_t b = 0; b < n.i0; ++b) {
        for (int64_t k = 0; k < per_row; ++k) {
          int32_t ix = (*n.idx)[static_cast<size_t>(b * per_row + k)];
          const double* src = g.data() + b * (per_row * e) + k * e;
          double* dst = out.data() + ix * e;
          for (int64_t j = 0; j < e; ++j) dst[j] += src[j];
        }
      }
      scat.value = std::move(out);
      // record batch/per_row so the scatter's own vjp can gather back
      scat.i0 = n.i0;
      scat.i1 = n.i1;
      accumulate(n.a, push(std::move(scat)), adjoints);
      return;
    }
    case Op::kEmbedScatter:
      accumulate(n.a, embedding(adj, n.idx, n.i0, n.i1), adjoints);
      return;
    case Op::kCrossEntropy: {
      const Tensor& logits = value(n.a);
      int64_t r = logits.rows(), c = logits.cols();
      Tensor onehot = Tensor::zeros({r, c});
      for (int64_t i = 0; i < r; ++i) onehot[i * c + (*n.idx)[static_cast<size_t>(i)]] = 1.0;
      NodeId diff = sub(softmax_rows(n.a), constant(std::move(onehot)));
      NodeId per_example = scale(diff, 1.0 / static_cast<double>(r));
      accumulate(n.a, mul(adj, per_example), adjoints);
      return;
    }
  }
}

std::vector<Tape::NodeId> Tape::gradient(NodeId output, std::span<const NodeId> wrt) {
  if (!value(output).is_scalar())
    throw ShapeError("gradient output must be scalar, got " + value(output).shape_str());
  std::vector<NodeId> adjoints(static_cast<size_t>(output) + 1, kNone);
  adjoints[static_cast<size_t>(output)] = constant_scalar(1.0);
  for (NodeId i = output; i >= 0; --i) {
    if (adjoints[static_cast<size_t>(i)] == kNone) continue;
    emit_vjp(i, adjoints[static_cast<size_t>(i)], adjoints);
  }
  std::vector<NodeId> grads;
  grads.reserve(wrt.size());
  for (NodeId leaf : wrt) {
    NodeId g = (leaf <= output) ? adjoints[static_cast<size_t>(leaf)] : kNone;
    if (g == kNone) g = constant(Tensor::zeros(value(leaf).shape()));
    grads.push_back(g);
  }
  return grads;
}

}  // namespace sophia
