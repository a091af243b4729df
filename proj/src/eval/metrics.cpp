#include "eogstage/eval/metrics.hpp"

#include <fmt/format.h>

#include "eogstage/common/error.hpp"

namespace eogstage {

namespace {

constexpr const char* kClassNames[kClasses] = {"W", "N1", "N2", "N3", "REM"};

}  // namespace

void ConfusionMatrix::accumulate(std::size_t truth, std::size_t pred) {
  if (truth >= kClasses || pred >= kClasses)
    throw DataError(fmt::format("confusion matrix label out of range: truth {}, pred {}", truth, pred));
  ++counts[truth][pred];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts)
    for (auto v : row) t += v;
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t c) const {
  std::uint64_t s = 0;
  for (auto v : counts[c]) s += v;
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t c) const {
  std::uint64_t s = 0;
  for (const auto& row : counts) s += row[c];
  return s;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  for (std::size_t i = 0; i < kClasses; ++i)
    for (std::size_t j = 0; j < kClasses; ++j) counts[i][j] += other.counts[i][j];
  return *this;
}

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  const std::uint64_t n = cm.total();
  if (n == 0) throw NumericError("metrics of an empty confusion matrix");
  MetricsReport m;
  using wide = unsigned __int128;
  std::uint64_t trace = 0;
  wide chance = 0;  // sum_c row_c * col_c
  for (std::size_t c = 0; c < kClasses; ++c) {
    trace += cm.counts[c][c];
    chance += static_cast<wide>(cm.row_sum(c)) * cm.col_sum(c);
  }
  m.acc = static_cast<double>(trace) / static_cast<double>(n);
  // kappa = (p_o - p_e) / (1 - p_e) = (n*trace - chance) / (n^2 - chance)
  const wide nn = static_cast<wide>(n) * n;
  const wide agree = static_cast<wide>(n) * trace;
  if (nn == chance) {
    // p_e = 1 forces every count into one diagonal cell.
    m.kappa = 1.0;
  } else {
    const double num = agree >= chance ? static_cast<double>(agree - chance)
                                       : -static_cast<double>(chance - agree);
    m.kappa = num / static_cast<double>(nn - chance);
  }

  double f1_sum = 0;
  std::size_t supported = 0;
  for (std::size_t c = 0; c < kClasses; ++c) {
    const std::uint64_t tp = cm.counts[c][c];
    const std::uint64_t row = cm.row_sum(c), col = cm.col_sum(c);
    m.support[c] = row;
    // 2PR/(P+R) = 2tp / (row + col); zero whenever P or R is undefined.
    m.f1[c] = (row == 0 || col == 0) ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(row + col);
    if (row > 0) {
      f1_sum += m.f1[c];
      ++supported;
      for (std::size_t j = 0; j < kClasses; ++j)
        m.normalized[c][j] = static_cast<double>(cm.counts[c][j]) / static_cast<double>(row);
    }
  }
  m.mf1 = f1_sum / static_cast<double>(supported);
  return m;
}

MetricsReport average_metrics(const std::vector<MetricsReport>& folds) {
  if (folds.empty()) throw NumericError("no fold metrics to average");
  MetricsReport avg;
  const double k = static_cast<double>(folds.size());
  for (const auto& f : folds) {
    avg.acc += f.acc / k;
    avg.mf1 += f.mf1 / k;
    avg.kappa += f.kappa / k;
    for (std::size_t c = 0; c < kClasses; ++c) {
      avg.f1[c] += f.f1[c] / k;
      avg.support[c] += f.support[c];
      for (std::size_t j = 0; j < kClasses; ++j) avg.normalized[c][j] += f.normalized[c][j] / k;
    }
  }
  return avg;
}

std::string metrics_csv(const std::vector<MetricsReport>& reports) {
  std::string out = "acc,mf1,kappa,f1_w,f1_n1,f1_n2,f1_n3,f1_rem\n";
  for (const auto& m : reports) {
    out += fmt::format("{:.6f},{:.6f},{:.6f}", m.acc, m.mf1, m.kappa);
    for (double f : m.f1) out += fmt::format(",{:.6f}", f);
    out += '\n';
  }
  return out;
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::string out = "truth\\pred,W,N1,N2,N3,REM\n";
  for (std::size_t i = 0; i < kClasses; ++i) {
    out += kClassNames[i];
    for (auto v : cm.counts[i]) out += fmt::format(",{}", v);
    out += '\n';
  }
  return out;
}

std::string normalized_csv(const MetricsReport& m) {
  std::string out = "truth\\pred,W,N1,N2,N3,REM\n";
  for (std::size_t i = 0; i < kClasses; ++i) {
    out += kClassNames[i];
    for (double v : m.normalized[i]) out += fmt::format(",{:.6f}", v);
    out += '\n';
  }
  return out;
}

nlohmann::json to_json(const MetricsReport& m) {
  nlohmann::json f1 = nlohmann::json::object(), support = nlohmann::json::object();
  for (std::size_t c = 0; c < kClasses; ++c) {
    f1[kClassNames[c]] = m.f1[c];
    support[kClassNames[c]] = m.support[c];
  }
  return {{"acc", m.acc}, {"mf1", m.mf1}, {"kappa", m.kappa}, {"f1", f1}, {"support", support},
          {"normalized_confusion", m.normalized}};
}

nlohmann::json to_json(const ConfusionMatrix& cm) { return cm.counts; }

}  // namespace eogstage
