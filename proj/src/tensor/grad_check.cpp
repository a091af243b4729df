#include "eogstage/tensor/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eogstage/common/error.hpp"
#include "eogstage/common/rng.hpp"
#include "eogstage/tensor/tape.hpp"

namespace eogstage {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

std::vector<std::size_t> pick_coordinates(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (count == 0 || count >= n) return idx;
  rng.shuffle(idx.begin(), idx.end());
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double evaluate(const std::function<Tensor<double>()>& f) {
  autograd::NoGradGuard guard;
  auto y = f();
  if (y.numel() != 1) throw ShapeError("grad_check: function must return a scalar");
  return y.item();
}

}  // namespace

GradCheckResult grad_check_leaves(const std::function<Tensor<double>()>& f,
                                  std::vector<Tensor<double>> leaves,
                                  const GradCheckOptions& options) {
  if (!(options.step > 0.0) || !std::isfinite(options.step)) {
    throw NumericError("grad_check: invalid finite-difference step " +
                       std::to_string(options.step));
  }
  for (auto& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.clear_grad();
  }
  autograd::Tape<double>::current().clear();
  auto y = f();
  autograd::backward(y);

  Rng rng(options.seed);
  GradCheckResult result;
  const double h = options.step;
  for (auto& leaf : leaves) {
    std::vector<double> analytic(leaf.numel(), 0.0);
    if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());
    for (auto i : pick_coordinates(leaf.numel(), options.coordinates, rng)) {
      auto data = leaf.data();
      const double saved = data[i];
      data[i] = saved + h;
      const double plus = evaluate(f);
      data[i] = saved - h;
      const double minus = evaluate(f);
      data[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      result.max_relative_error =
          std::max(result.max_relative_error, relative_error(analytic[i], numeric));
      ++result.coordinates_checked;
    }
  }
  return result;
}

GradCheckResult grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                           const Tensor<double>& point, const GradCheckOptions& options) {
  auto x = point.clone();
  return grad_check_leaves([&f, x]() { return f(x); }, {x}, options);
}

}  // namespace eogstage
