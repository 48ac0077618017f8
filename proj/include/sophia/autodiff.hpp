#pragma once

#include <functional>
#include <utility>

#include "sophia/tape.hpp"
#include "sophia/tensor.hpp"

namespace sophia {

/// A tape-recordable scalar function: given a tape and the node holding the
/// parameter leaf, records the computation and returns the scalar loss node.
using TapeFn = std::function<Tape::NodeId(Tape&, Tape::NodeId)>;

/// L(theta) and its exact gradient.
std::pair<double, Tensor> value_and_grad(const TapeFn& f, const Tensor& theta);

/// Exact Hessian-vector product H(theta) * u, computed by differentiating the
/// scalar <grad L(theta), u> a second time (double backward).
Tensor hvp(const TapeFn& f, const Tensor& theta, const Tensor& u);

}  // namespace sophia
