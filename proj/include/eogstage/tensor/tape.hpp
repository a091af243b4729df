#pragma once

#include <functional>
#include <vector>

#include "eogstage/tensor/tensor.hpp"

namespace eogstage::autograd {

// Recording is on by default; NoGradGuard switches it off for the current
// thread for the lifetime of the guard.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Per-thread record of differentiable operations in execution order. Every
// node's inputs were produced before the node itself, so a reverse sweep is a
// valid reverse topological order.
template <typename T>
class Tape {
 public:
  struct Node {
    const char* name;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    // Reads output.grad() and accumulates into the inputs that require grad.
    std::function<void()> backward;
  };

  static Tape& current();

  void record(Node node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }
  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1, visits every node once in reverse order and
  // clears the tape.
  void backward(Tensor<T> loss);

 private:
  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

template <typename T>
void backward(const Tensor<T>& loss) {
  Tape<T>::current().backward(loss);
}

// Registers `output` as produced by `inputs` when recording is enabled and at
// least one input requires grad. Returns true when a node was recorded.
template <typename T, typename Fn>
bool record(const char* name, std::vector<Tensor<T>> inputs, Tensor<T>& output, Fn&& fn) {
  if (!grad_enabled()) return false;
  bool any = false;
  for (const auto& t : inputs) any = any || (t.defined() && t.requires_grad());
  if (!any) return false;
  output.set_requires_grad(true);
  Tape<T>::current().record({name, std::move(inputs), output, std::forward<Fn>(fn)});
  return true;
}

}  // namespace eogstage::autograd
