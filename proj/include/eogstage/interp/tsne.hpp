#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "eogstage/data/hypnogram.hpp"
#include "eogstage/interp/features.hpp"

namespace eogstage {

struct TsneConfig {
  double perplexity = 30;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  double learning_rate = 200;
  double exaggeration = 12;
  std::size_t exaggeration_iterations = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  double entropy_tolerance = 1e-5;
  std::size_t search_iterations = 50;
};

struct TsneLogRow {
  std::size_t iteration = 0;
  double kl = 0;
};

struct Embedding2D {
  std::vector<std::array<double, 2>> points;
  std::vector<Stage> labels;
  double kl = 0;
  std::vector<TsneLogRow> log;  // every 50 iterations, at the end of exaggeration and at the end
};

// Symmetrised joint probabilities P[N*N] of rows of x[n, dims]: per-row
// Gaussian bandwidths by binary search on the entropy (natural log), then
// (P_j|i + P_i|j) / 2N. ConfigError when n < 3 * perplexity + 1, DataError
// when all rows coincide.
std::vector<double> tsne_joint_probabilities(std::span<const double> x, std::size_t n,
                                             std::size_t dims, const TsneConfig& config);

// Exact O(N^2) t-SNE with a Student-t kernel, early exaggeration, momentum
// and per-coordinate gains.
Embedding2D tsne(const FeatureMatrix& features, const TsneConfig& config);

// Fraction of points whose nearest other point has the same label.
double nearest_neighbor_accuracy(const std::vector<std::array<double, 2>>& points,
                                 const std::vector<Stage>& labels);

}  // namespace eogstage
