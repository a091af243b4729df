#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "eogstage/tensor/tensor.hpp"

namespace eogstage {

struct GradCheckOptions {
  double step = 1e-4;
  // Coordinates sampled per tensor; 0 checks every coordinate.
  std::size_t coordinates = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
};

// Relative error as used throughout the checks: |a-n| / max(|a|,|n|,1e-8).
double relative_error(double analytic, double numeric);

// Compares the tape gradient of scalar f at `point` with central differences
// (f(x+h e_i) - f(x-h e_i)) / 2h. Throws NumericError when h <= 0.
GradCheckResult grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                           const Tensor<double>& point, const GradCheckOptions& options = {});

// Same comparison for a scalar function of several leaf tensors (e.g. the
// parameters of a model). `f` must rebuild its graph from the current
// contents of `leaves` on every call.
GradCheckResult grad_check_leaves(const std::function<Tensor<double>()>& f,
                                  std::vector<Tensor<double>> leaves,
                                  const GradCheckOptions& options = {});

}  // namespace eogstage
