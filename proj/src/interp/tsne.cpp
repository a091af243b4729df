#include "eogstage/interp/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>

#include "eogstage/common/error.hpp"
#include "eogstage/common/rng.hpp"
#include "eogstage/kernels/kernels.hpp"

namespace eogstage {

namespace {

// Conditional row P_j|i for squared distances d (d[i] ignored) at the
// bandwidth whose entropy is log(perplexity).
void conditional_row(std::span<const double> d, std::size_t i, const TsneConfig& cfg,
                     std::span<double> p) {
  const std::size_t n = d.size();
  const double target = std::log(cfg.perplexity);
  double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
  // Shifting by the smallest distance avoids underflow for far-apart points.
  double dmin = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j)
    if (j != i) dmin = std::min(dmin, d[j]);
  for (std::size_t it = 0; it < cfg.search_iterations; ++it) {
    double sum = 0, weighted = 0;
    for (std::size_t j = 0; j < n; ++j) {
      p[j] = j == i ? 0.0 : std::exp(-(d[j] - dmin) * beta);
      sum += p[j];
      weighted += p[j] * (d[j] - dmin);
    }
    const double entropy = std::log(sum) + beta * weighted / sum;
    for (std::size_t j = 0; j < n; ++j) p[j] /= sum;
    const double diff = entropy - target;
    if (std::abs(diff) < cfg.entropy_tolerance) return;
    if (diff > 0) {
      lo = beta;
      beta = std::isinf(hi) ? beta * 2 : 0.5 * (beta + hi);
    } else {
      hi = beta;
      beta = 0.5 * (beta + lo);
    }
  }
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  double kl = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) kl += p[i] * std::log(p[i] / std::max(q[i], 1e-300));
  return kl;
}

}  // namespace

std::vector<double> tsne_joint_probabilities(std::span<const double> x, std::size_t n,
                                             std::size_t dims, const TsneConfig& cfg) {
  if (!(cfg.perplexity > 0)) throw ConfigError("t-SNE perplexity must be > 0");
  if (static_cast<double>(n) < 3 * cfg.perplexity + 1) {
    throw ConfigError(fmt::format("t-SNE needs at least 3 * perplexity + 1 = {} points for perplexity {}, got {}",
                                  static_cast<std::size_t>(std::ceil(3 * cfg.perplexity + 1)), cfg.perplexity, n));
  }
  if (x.size() != n * dims) throw ShapeError("t-SNE features must be n x dims");
  for (double v : x)
    if (!std::isfinite(v)) throw NumericError("t-SNE features contain non-finite values");
  std::vector<double> d(n * n);
  kernels::omp::pairwise_sq_distances<double>(n, dims, x, d);
  if (*std::max_element(d.begin(), d.end()) == 0) {
    throw DataError("t-SNE features are all identical");
  }
  std::vector<double> cond(n * n);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    conditional_row(std::span<const double>(d).subspan(i * n, n), i, cfg,
                    std::span<double>(cond).subspan(i * n, n));
  }
  std::vector<double> p(n * n);
  const double denom = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / denom;
  return p;
}

Embedding2D tsne(const FeatureMatrix& features, const TsneConfig& cfg) {
  const std::size_t n = features.rows;
  const auto p = tsne_joint_probabilities(features.values, n, features.dims, cfg);

  Rng rng = Rng::derive(cfg.seed, 0x75);
  std::vector<double> y(n * 2), inc(n * 2, 0.0), gains(n * 2, 1.0), grad(n * 2);
  for (auto& v : y) v = rng.normal(0.0, 1e-2);
  std::vector<double> num(n * n), q(n * n), dy(n * n);

  Embedding2D out;
  out.labels = features.labels;
  auto compute_q = [&] {
    kernels::omp::pairwise_sq_distances<double>(n, 2, y, dy);
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        num[i * n + j] = i == j ? 0.0 : 1.0 / (1.0 + dy[i * n + j]);
        sum += num[i * n + j];
      }
    for (std::size_t k = 0; k < n * n; ++k) q[k] = num[k] / sum;
  };

  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    const bool early = it <= cfg.exaggeration_iterations;
    const double exag = early ? cfg.exaggeration : 1.0;
    const double momentum = early ? cfg.initial_momentum : cfg.final_momentum;
    compute_q();
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
      double gx = 0, gy = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double m = (exag * p[i * n + j] - q[i * n + j]) * num[i * n + j];
        gx += m * (y[i * 2] - y[j * 2]);
        gy += m * (y[i * 2 + 1] - y[j * 2 + 1]);
      }
      grad[i * 2] = 4 * gx;
      grad[i * 2 + 1] = 4 * gy;
    }
    for (std::size_t k = 0; k < n * 2; ++k) {
      gains[k] = (grad[k] > 0) != (inc[k] > 0) ? gains[k] + 0.2 : gains[k] * 0.8;
      gains[k] = std::max(gains[k], 0.01);
      inc[k] = momentum * inc[k] - cfg.learning_rate * gains[k] * grad[k];
      y[k] += inc[k];
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += y[i * 2];
      my += y[i * 2 + 1];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i * 2] -= mx;
      y[i * 2 + 1] -= my;
    }
    if (it % 50 == 0 || it == cfg.exaggeration_iterations || it == cfg.iterations) {
      compute_q();
      const double kl = kl_divergence(p, q);
      if (!std::isfinite(kl)) throw NumericError(fmt::format("t-SNE diverged at iteration {}", it));
      out.log.push_back({it, kl});
    }
  }
  compute_q();
  out.kl = kl_divergence(p, q);
  out.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.points[i] = {y[i * 2], y[i * 2 + 1]};
    if (!std::isfinite(y[i * 2]) || !std::isfinite(y[i * 2 + 1])) throw NumericError("t-SNE produced non-finite coordinates");
  }
  return out;
}

double nearest_neighbor_accuracy(const std::vector<std::array<double, 2>>& points,
                                 const std::vector<Stage>& labels) {
  const std::size_t n = points.size();
  if (n < 2 || labels.size() != n) throw DataError("nearest-neighbour accuracy needs >= 2 labelled points");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = i;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = points[i][0] - points[j][0], dy = points[i][1] - points[j][1];
      const double d = dx * dx + dy * dy;
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    hits += labels[arg] == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace eogstage
