#pragma once

#include <string>
#include <vector>

namespace reckon::chart {

// One plotted series: a label and y-values aligned with the shared x labels.
struct Series {
  std::string label;
  std::vector<double> values;
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<std::string> x_ticks;  // categorical positions, one per point
  std::vector<Series> series;
  int width = 640;
  int height = 400;
};

// Self-contained SVG documents; no external renderer involved.
std::string render_line_chart(const ChartSpec& spec);
std::string render_bar_chart(const ChartSpec& spec);

// Reads a CSV produced by the eval module (header row, first column = x
// labels, remaining columns = one series each) into a chart spec.
ChartSpec chart_from_csv(const std::string& csv_text, const std::string& title);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace reckon::chart
