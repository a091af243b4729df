#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace eogstage {

inline constexpr std::size_t kClasses = 5;

// Rows are the annotated stage, columns the prediction.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kClasses>, kClasses> counts{};

  void accumulate(std::size_t truth, std::size_t pred);
  std::uint64_t total() const;
  std::uint64_t row_sum(std::size_t c) const;
  std::uint64_t col_sum(std::size_t c) const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;
};

struct MetricsReport {
  double acc = 0;
  double mf1 = 0;  // mean F1 over classes with support > 0
  double kappa = 0;
  std::array<double, kClasses> f1{};
  std::array<std::uint64_t, kClasses> support{};
  std::array<std::array<double, kClasses>, kClasses> normalized{};  // rows sum to 1 (or all 0)
};

// NumericError on an empty matrix. Ratios are formed from exact integer
// counts and divided once, so e.g. [[40,10],[20,30]] gives kappa = 0.4 exactly.
MetricsReport compute_metrics(const ConfusionMatrix& cm);

// Unweighted mean of per-fold ACC, MF1, kappa and per-class F1.
MetricsReport average_metrics(const std::vector<MetricsReport>& folds);

// `acc,mf1,kappa,f1_w,f1_n1,f1_n2,f1_n3,f1_rem` header plus one row per report.
std::string metrics_csv(const std::vector<MetricsReport>& reports);
std::string confusion_csv(const ConfusionMatrix& cm);
std::string normalized_csv(const MetricsReport& m);
nlohmann::json to_json(const MetricsReport& m);
nlohmann::json to_json(const ConfusionMatrix& cm);

}  // namespace eogstage
