#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "eogstage/data/hypnogram.hpp"

namespace eogstage::svg {

// Standalone SVG documents. Output bytes depend only on the arguments; every
// number is printed with a fixed precision. Empty data is a DataError.

// Square matrix of values in [0, 1], one cell per entry, annotated with the
// value to two decimals (e.g. a row-normalised confusion matrix).
std::string heatmap(const std::vector<std::vector<double>>& values,
                    const std::vector<std::string>& row_labels,
                    const std::vector<std::string>& col_labels, const std::string& title,
                    const std::string& row_axis = "Annotated", const std::string& col_axis = "Predicted");

// 2-D points coloured by stage, with a legend.
std::string scatter(const std::vector<std::array<double, 2>>& points, const std::vector<Stage>& labels,
                    const std::string& title);

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

std::string line(const std::vector<Series>& series, const std::string& title,
                 const std::string& x_label, const std::string& y_label);

// Raw signal drawn over a red-hued band whose intensity follows `saliency`
// (same length, values in [0, 1]). `marks` are [begin, end) sample ranges to
// outline, e.g. known burst positions.
std::string saliency_overlay(const std::vector<double>& signal, const std::vector<double>& saliency,
                             double sampling_rate, const std::string& title,
                             const std::vector<std::pair<std::size_t, std::size_t>>& marks = {});

// Step plot of stages over epochs; `predicted` may be empty or the same length.
std::string hypnogram(const std::vector<Stage>& annotated, const std::vector<Stage>& predicted,
                      const std::string& title);

}  // namespace eogstage::svg
