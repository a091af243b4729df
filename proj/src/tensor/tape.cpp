#include "eogstage/tensor/tape.hpp"

#include "eogstage/common/error.hpp"

namespace eogstage::autograd {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tape<T>& Tape<T>::current() {
  thread_local Tape tape;
  return tape;
}

template <typename T>
void Tape<T>::backward(Tensor<T> loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    clear();
    throw Error("backward() on a tensor that is not connected to any parameter");
  }
  loss.ensure_grad()[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output.has_grad()) it->backward();
  }
  clear();
}

template class Tape<float>;
template class Tape<double>;

}  // namespace eogstage::autograd
