#include "sophia/autodiff.hpp"

#include "sophia/errors.hpp"

namespace sophia {

std::pair<double, Tensor> value_and_grad(const TapeFn& f, const Tensor& theta) {
  Tape tape;
  Tape::NodeId x = tape.input(theta);
  Tape::NodeId loss = f(tape, x);
  if (!tape.value(loss).is_scalar())
    throw ShapeError("loss must be scalar, got " + tape.value(loss).shape_str());
  auto grads = tape.gradient(loss, std::span<const Tape::NodeId>(&x, 1));
  return {tape.value(loss).item(), tape.value(grads[0])};
}

Tensor hvp(const TapeFn& f, const Tensor& theta, const Tensor& u) {
  if (!theta.same_shape(u))
    throw ShapeError("hvp probe shape " + u.shape_str() + " vs theta " + theta.shape_str());
  Tape tape;
  Tape::NodeId x = tape.input(theta);
  Tape::NodeId loss = f(tape, x);
  auto grads = tape.gradient(loss, std::span<const Tape::NodeId>(&x, 1));
  Tape::NodeId inner = tape.sum(tape.mul(grads[0], tape.constant(u)));
  auto hv = tape.gradient(inner, std::span<const Tape::NodeId>(&x, 1));
  return tape.value(hv[0]);
}

}  // namespace sophia
