#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace eogstage {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array that can take part in reverse-mode differentiation.
//
// Tensor is a handle: copies share storage, which is what lets a parameter
// collect gradients from every op that consumed it. Use clone() for an
// independent deep copy. T is float for training and double for gradient
// checking.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<T> data();
  std::span<const T> data() const;
  T item() const;

  // Element access by multi-index, mostly for tests and small glue code.
  T at(std::initializer_list<std::size_t> index) const;
  T& at(std::initializer_list<std::size_t> index);

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);

  bool has_grad() const;
  std::span<T> grad();
  std::span<const T> grad() const;
  // Allocates a zero gradient buffer on first use.
  std::span<T> ensure_grad();
  void zero_grad();
  void clear_grad();

  Tensor clone() const;
  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape());
    auto src = data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<U>(src[i]);
    return out;
  }

  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::size_t offset_of(std::initializer_list<std::size_t> index) const;
  Impl& impl() const;

  std::shared_ptr<Impl> impl_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

// Returns true when every element is finite.
template <typename T>
bool all_finite(std::span<const T> values);

}  // namespace eogstage
