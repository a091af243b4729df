#pragma once

#include <cstdint>
#include <vector>

#include "eogstage/model/model.hpp"

namespace eogstage {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

// Adam with bias correction over a fixed list of parameters. Parameters that
// received no gradient since the last step are left alone.
template <typename T>
class Adam {
 public:
  Adam(NamedTensors<T> params, AdamConfig config);

  // NumericError naming the parameter when a gradient is not finite; no
  // parameter is modified in that case.
  void step();
  void zero_grad();

  std::uint64_t steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }
  const std::vector<T>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<T>& second_moment(std::size_t i) const { return v_[i]; }

 private:
  NamedTensors<T> params_;
  AdamConfig config_;
  std::vector<std::vector<T>> m_, v_;
  std::uint64_t t_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace eogstage
