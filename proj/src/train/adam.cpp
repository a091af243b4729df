#include "eogstage/train/adam.hpp"

#include <cmath>
#include <fmt/format.h>

#include "eogstage/common/error.hpp"

namespace eogstage {

void AdamConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError(fmt::format("learning_rate must be > 0, got {}", learning_rate));
  if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError(fmt::format("beta1 must be in [0, 1), got {}", beta1));
  if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError(fmt::format("beta2 must be in [0, 1), got {}", beta2));
  if (!(eps > 0)) throw ConfigError(fmt::format("eps must be > 0, got {}", eps));
}

template <typename T>
Adam<T>::Adam(NamedTensors<T> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  config_.validate();
  for (const auto& [name, p] : params_) {
    m_.emplace_back(p.numel(), T(0));
    v_.emplace_back(p.numel(), T(0));
  }
}

template <typename T>
void Adam<T>::step() {
  for (const auto& [name, p] : params_) {
    if (!p.has_grad()) continue;
    auto g = p.grad();
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!std::isfinite(g[j])) {
        throw NumericError(fmt::format("non-finite gradient {} in parameter {} at flat index {}",
                                       static_cast<double>(g[j]), name, j));
      }
    }
  }
  ++t_;
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  const T lr = static_cast<T>(config_.learning_rate);
  const T eps = static_cast<T>(config_.eps);
  const T c1 = T(1) - static_cast<T>(std::pow(config_.beta1, static_cast<double>(t_)));
  const T c2 = T(1) - static_cast<T>(std::pow(config_.beta2, static_cast<double>(t_)));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].second;
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto x = p.data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < x.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const T mhat = m[j] / c1;
      const T vhat = v[j] / c2;
      x[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& [name, p] : params_) p.clear_grad();
}

template class Adam<float>;
template class Adam<double>;

}  // namespace eogstage
