#include "eogstage/report/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>

#include "eogstage/common/error.hpp"

namespace eogstage::svg {

namespace {

constexpr double kWidth = 640, kHeight = 480;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;

const std::array<const char*, kNumStages> kStageColors{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                       "#9467bd"};
const std::array<const char*, 4> kSeriesColors{"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Fixed two-decimal coordinates with negative zero folded to zero.
std::string num(double v) {
  auto s = fmt::format("{:.2f}", v);
  return s == "-0.00" ? "0.00" : s;
}

class Doc {
 public:
  Doc(double w, double h) : w_(w), h_(h) {}
  Doc& raw(const std::string& s) {
    body_ += s;
    body_ += '\n';
    return *this;
  }
  Doc& rect(double x, double y, double w, double h, const std::string& fill,
            const std::string& extra = "") {
    return raw(fmt::format(R"(<rect x="{}" y="{}" width="{}" height="{}" fill="{}"{}/>)", num(x),
                           num(y), num(w), num(h), fill, extra));
  }
  Doc& text(double x, double y, const std::string& s, const std::string& extra = "") {
    return raw(fmt::format(R"(<text x="{}" y="{}"{}>{}</text>)", num(x), num(y), extra, escape(s)));
  }
  Doc& line(double x1, double y1, double x2, double y2, const std::string& stroke = "#333") {
    return raw(fmt::format(R"(<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}"/>)", num(x1),
                           num(y1), num(x2), num(y2), stroke));
  }
  Doc& polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                double width = 1.0) {
    std::string p;
    for (const auto& [x, y] : pts) {
      if (!p.empty()) p += ' ';
      p += num(x) + "," + num(y);
    }
    return raw(fmt::format(R"(<polyline fill="none" stroke="{}" stroke-width="{}" points="{}"/>)",
                           stroke, num(width), p));
  }
  std::string str() const {
    return fmt::format(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
        "font-family=\"sans-serif\" font-size=\"12\">\n"
        "<rect width=\"{0}\" height=\"{1}\" fill=\"#ffffff\"/>\n{2}</svg>\n",
        num(w_), num(h_), body_);
  }

 private:
  double w_, h_;
  std::string body_;
};

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) throw NumericError("svg: non-finite value in plot data");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  // Pads degenerate and tight ranges so every point lands inside the frame.
  void finish() {
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  double map(double v, double a, double b) const { return a + (v - lo) / (hi - lo) * (b - a); }
};

void frame(Doc& d, const std::string& title, const std::string& xl, const std::string& yl,
           const Range& xr, const Range& yr) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  d.text(kWidth / 2, 24, title, R"( text-anchor="middle" font-size="15")");
  d.line(x0, y0, x1, y0).line(x0, y0, x0, y1);
  for (int i = 0; i <= 4; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / 4, fy = yr.lo + (yr.hi - yr.lo) * i / 4;
    const double px = xr.map(fx, x0, x1), py = yr.map(fy, y0, y1);
    d.line(px, y0, px, y0 + 4).text(px, y0 + 18, fmt::format("{:.3g}", fx), R"( text-anchor="middle")");
    d.line(x0 - 4, py, x0, py).text(x0 - 8, py + 4, fmt::format("{:.3g}", fy), R"( text-anchor="end")");
  }
  d.text((x0 + x1) / 2, kHeight - 18, xl, R"( text-anchor="middle")");
  d.text(18, (y0 + y1) / 2, yl,
         fmt::format(R"a( text-anchor="middle" transform="rotate(-90 18 {})")a", num((y0 + y1) / 2)));
}

std::string blue(double v) {
  v = std::clamp(v, 0.0, 1.0);
  auto mix = [&](int a, int b) { return static_cast<int>(std::lround(a + (b - a) * v)); };
  return fmt::format("#{:02x}{:02x}{:02x}", mix(247, 8), mix(251, 48), mix(255, 107));
}

}  // namespace

std::string heatmap(const std::vector<std::vector<double>>& values,
                    const std::vector<std::string>& row_labels,
                    const std::vector<std::string>& col_labels, const std::string& title,
                    const std::string& row_axis, const std::string& col_axis) {
  const std::size_t n = values.size();
  if (n == 0) throw DataError("heatmap: no data");
  for (const auto& row : values) {
    if (row.size() != n) throw DataError("heatmap: matrix must be square");
    for (double v : row)
      if (!std::isfinite(v)) throw NumericError("heatmap: non-finite value");
  }
  if (row_labels.size() != n || col_labels.size() != n) throw DataError("heatmap: one label per row and column");
  const double cell = std::min(360.0 / static_cast<double>(n), 72.0);
  const double x0 = 110, y0 = 60;
  Doc d(x0 + cell * static_cast<double>(n) + 40, y0 + cell * static_cast<double>(n) + 70);
  d.text((x0 + cell * n / 2.0), 24, title, R"( text-anchor="middle" font-size="15")");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = values[i][j];
      const double x = x0 + cell * static_cast<double>(j), y = y0 + cell * static_cast<double>(i);
      d.rect(x, y, cell, cell, blue(v), R"( stroke="#ffffff")");
      d.text(x + cell / 2, y + cell / 2 + 4, fmt::format("{:.2f}", v),
             fmt::format(R"( text-anchor="middle" fill="{}")", v > 0.5 ? "#ffffff" : "#000000"));
    }
    d.text(x0 - 8, y0 + cell * (static_cast<double>(i) + 0.5) + 4, row_labels[i], R"( text-anchor="end")");
    d.text(x0 + cell * (static_cast<double>(i) + 0.5), y0 + cell * n + 18, col_labels[i], R"( text-anchor="middle")");
  }
  d.text(x0 + cell * n / 2.0, y0 + cell * n + 42, col_axis, R"( text-anchor="middle")");
  d.text(24, y0 + cell * n / 2.0, row_axis,
         fmt::format(R"a( text-anchor="middle" transform="rotate(-90 24 {})")a", num(y0 + cell * n / 2.0)));
  return d.str();
}

std::string scatter(const std::vector<std::array<double, 2>>& points, const std::vector<Stage>& labels,
                    const std::string& title) {
  if (points.empty()) throw DataError("scatter: no points");
  if (labels.size() != points.size()) throw DataError("scatter: one label per point");
  Range xr, yr;
  for (const auto& p : points) {
    xr.add(p[0]);
    yr.add(p[1]);
  }
  xr.finish();
  yr.finish();
  Doc d(kWidth + 90, kHeight);
  frame(d, title, "t-SNE 1", "t-SNE 2", xr, yr);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto k = stage_index(labels[i]);
    if (k >= kNumStages) throw DataError("scatter: excluded epochs have no colour");
    d.raw(fmt::format(R"(<circle cx="{}" cy="{}" r="3" fill="{}" fill-opacity="0.8"/>)",
                      num(xr.map(points[i][0], kLeft, kWidth - kRight)),
                      num(yr.map(points[i][1], kHeight - kBottom, kTop)), kStageColors[k]));
  }
  for (std::size_t k = 0; k < kNumStages; ++k) {
    const double y = kTop + 20 * static_cast<double>(k);
    d.rect(kWidth + 5, y - 9, 10, 10, kStageColors[k]);
    d.text(kWidth + 20, y, std::string(stage_name(stage_from_index(k))));
  }
  return d.str();
}

std::string line(const std::vector<Series>& series, const std::string& title,
                 const std::string& x_label, const std::string& y_label) {
  Range xr, yr;
  std::size_t count = 0;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      xr.add(x);
      yr.add(y);
      ++count;
    }
  if (count == 0) throw DataError("line: no points");
  xr.finish();
  yr.finish();
  Doc d(kWidth, kHeight);
  frame(d, title, x_label, y_label, xr, yr);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto* color = kSeriesColors[i % kSeriesColors.size()];
    std::vector<std::pair<double, double>> pts;
    for (const auto& [x, y] : series[i].points)
      pts.emplace_back(xr.map(x, kLeft, kWidth - kRight), yr.map(y, kHeight - kBottom, kTop));
    d.polyline(pts, color, 1.5);
    if (series.size() > 1) {
      const double y = kTop + 16 * static_cast<double>(i);
      d.line(kWidth - 150, y - 4, kWidth - 130, y - 4, color).text(kWidth - 125, y, series[i].name);
    }
  }
  return d.str();
}

std::string saliency_overlay(const std::vector<double>& signal, const std::vector<double>& saliency,
                             double sampling_rate, const std::string& title,
                             const std::vector<std::pair<std::size_t, std::size_t>>& marks) {
  const std::size_t n = signal.size();
  if (n == 0) throw DataError("saliency overlay: no samples");
  if (saliency.size() != n) throw DataError("saliency overlay: signal and saliency lengths differ");
  if (!(sampling_rate > 0)) throw DataError("saliency overlay: sampling rate must be > 0");
  Range xr, yr;
  xr.lo = 0;
  xr.hi = static_cast<double>(n) / sampling_rate;
  for (double v : signal) yr.add(v);
  yr.finish();
  Doc d(kWidth, kHeight);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  const double dx = (x1 - x0) / static_cast<double>(n);
  // Runs of equal colour share one rect to keep files small.
  std::size_t start = 0;
  auto shade = [&](std::size_t i) {
    const double v = std::clamp(saliency[i], 0.0, 1.0);
    const int gb = static_cast<int>(std::lround(255 * (1 - 0.85 * v)));
    return fmt::format("#ff{:02x}{:02x}", gb, gb);
  };
  for (std::size_t i = 1; i <= n; ++i) {
    if (i == n || shade(i) != shade(start)) {
      if (shade(start) != "#ffffff")
        d.rect(x0 + dx * static_cast<double>(start), y1, dx * static_cast<double>(i - start), y0 - y1, shade(start));
      start = i;
    }
  }
  for (const auto& [lo, hi] : marks) {
    if (lo >= hi || hi > n) throw DataError("saliency overlay: mark outside the signal");
    d.rect(x0 + dx * static_cast<double>(lo), y1, dx * static_cast<double>(hi - lo), y0 - y1, "none",
           R"( stroke="#000000" stroke-dasharray="4 3")");
  }
  frame(d, title, "Time (s)", "Amplitude (z)", xr, yr);
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < n; ++i)
    pts.emplace_back(x0 + dx * (static_cast<double>(i) + 0.5), yr.map(signal[i], y0, y1));
  d.polyline(pts, "#222222", 1.0);
  return d.str();
}

std::string hypnogram(const std::vector<Stage>& annotated, const std::vector<Stage>& predicted,
                      const std::string& title) {
  if (annotated.empty()) throw DataError("hypnogram: no epochs");
  if (!predicted.empty() && predicted.size() != annotated.size())
    throw DataError("hypnogram: annotated and predicted lengths differ");
  // Conventional order from top: W, REM, N1, N2, N3.
  auto level = [](Stage s) {
    switch (s) {
      case Stage::W: return 0.0;
      case Stage::REM: return 1.0;
      case Stage::N1: return 2.0;
      case Stage::N2: return 3.0;
      case Stage::N3: return 4.0;
      default: throw DataError("hypnogram: excluded epochs cannot be drawn");
    }
  };
  const double n = static_cast<double>(annotated.size());
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  auto px = [&](double e) { return x0 + (x1 - x0) * e / n; };
  auto py = [&](double l) { return y1 + (y0 - y1) * (l + 0.5) / 5.0; };
  Doc d(kWidth, kHeight);
  d.text(kWidth / 2, 24, title, R"( text-anchor="middle" font-size="15")");
  d.line(x0, y0, x1, y0).line(x0, y0, x0, y1);
  const std::array<Stage, 5> order{Stage::W, Stage::REM, Stage::N1, Stage::N2, Stage::N3};
  for (std::size_t i = 0; i < order.size(); ++i)
    d.text(x0 - 8, py(static_cast<double>(i)) + 4, std::string(stage_name(order[i])), R"( text-anchor="end")");
  for (int i = 0; i <= 4; ++i) {
    const double e = n * i / 4;
    d.line(px(e), y0, px(e), y0 + 4).text(px(e), y0 + 18, fmt::format("{:.3g}", e * kEpochSeconds / 3600.0),
                                           R"( text-anchor="middle")");
  }
  d.text((x0 + x1) / 2, kHeight - 18, "Time (h)", R"( text-anchor="middle")");
  auto steps = [&](const std::vector<Stage>& st) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t e = 0; e < st.size(); ++e) {
      const double y = py(level(st[e]));
      pts.emplace_back(px(static_cast<double>(e)), y);
      pts.emplace_back(px(static_cast<double>(e + 1)), y);
    }
    return pts;
  };
  d.polyline(steps(annotated), "#1f77b4", 1.5);
  if (!predicted.empty()) {
    d.polyline(steps(predicted), "#d62728", 1.0);
    d.line(x1 - 150, y1 - 4, x1 - 130, y1 - 4, "#1f77b4").text(x1 - 125, y1, "annotated");
    d.line(x1 - 150, y1 + 12, x1 - 130, y1 + 12, "#d62728").text(x1 - 125, y1 + 16, "predicted");
  }
  return d.str();
}

}  // namespace eogstage::svg
