#include "reckon/chart.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace reckon::chart {

namespace {

// Distinguishable default palette; cycles if there are more series.
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
constexpr int kPalette = 6;

std::string escape_xml(const std::string& s) {
  std::string out;
  out.reserve(s.size());
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

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Frame {
  double left, top, right, bottom;  // plot rectangle in SVG coordinates
  double ymin, ymax;
};

void check_spec(const ChartSpec& spec) {
  if (spec.series.empty()) throw std::runtime_error("chart: no series");
  if (spec.x_ticks.empty()) throw std::runtime_error("chart: no x ticks");
  for (const auto& s : spec.series)
    if (s.values.size() != spec.x_ticks.size())
      throw std::runtime_error("chart: series " + s.label + " has " +
                               std::to_string(s.values.size()) + " values for " +
                               std::to_string(spec.x_ticks.size()) + " x ticks");
}

Frame fit_frame(const ChartSpec& spec, bool bars) {
  Frame f;
  f.left = 62;
  f.top = 34;
  f.right = spec.width - 16;
  f.bottom = spec.height - 52;
  double lo = 0, hi = 1;
  bool first = true;
  for (const auto& s : spec.series)
    for (double v : s.values) {
      if (!std::isfinite(v)) throw std::runtime_error("chart: non-finite value in " + s.label);
      if (first) { lo = hi = v; first = false; }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (bars) lo = std::min(lo, 0.0);  // bars grow from zero
  if (hi == lo) hi = lo + 1;
  double pad = (hi - lo) * 0.08;
  f.ymin = bars && lo >= 0 ? 0 : lo - pad;
  f.ymax = hi + pad;
  return f;
}

double y_of(const Frame& f, double v) {
  return f.bottom - (v - f.ymin) / (f.ymax - f.ymin) * (f.bottom - f.top);
}

void open_svg(std::ostringstream& out, const ChartSpec& spec) {
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\""
      << spec.height << "\" viewBox=\"0 0 " << spec.width << " " << spec.height << "\">\n"
      << "<rect width=\"" << spec.width << "\" height=\"" << spec.height
      << "\" fill=\"white\"/>\n"
      << "<text x=\"" << spec.width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"14\">" << escape_xml(spec.title)
      << "</text>\n";
}

void draw_axes(std::ostringstream& out, const ChartSpec& spec, const Frame& f) {
  out << "<line x1=\"" << f.left << "\" y1=\"" << f.top << "\" x2=\"" << f.left << "\" y2=\""
      << f.bottom << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << f.left << "\" y1=\"" << f.bottom << "\" x2=\"" << f.right
      << "\" y2=\"" << f.bottom << "\" stroke=\"black\"/>\n";
  // five horizontal gridlines with value labels
  for (int i = 0; i <= 4; ++i) {
    double v = f.ymin + (f.ymax - f.ymin) * i / 4.0;
    double y = y_of(f, v);
    out << "<line x1=\"" << f.left << "\" y1=\"" << y << "\" x2=\"" << f.right << "\" y2=\""
        << y << "\" stroke=\"#dddddd\"/>\n"
        << "<text x=\"" << f.left - 6 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(v)
        << "</text>\n";
  }
  out << "<text x=\"" << (f.left + f.right) / 2 << "\" y=\"" << spec.height - 8
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
      << escape_xml(spec.x_label) << "</text>\n"
      << "<text x=\"14\" y=\"" << (f.top + f.bottom) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" "
      << "transform=\"rotate(-90 14 " << (f.top + f.bottom) / 2 << ")\">"
      << escape_xml(spec.y_label) << "</text>\n";
}

void draw_legend(std::ostringstream& out, const ChartSpec& spec, const Frame& f) {
  double x = f.left + 8, y = f.top + 6;
  for (std::size_t s = 0; s < spec.series.size(); ++s) {
    const char* col = kColors[s % kPalette];
    out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\"" << col
        << "\"/>\n"
        << "<text x=\"" << x + 14 << "\" y=\"" << y + 9
        << "\" font-family=\"sans-serif\" font-size=\"10\">" << escape_xml(spec.series[s].label)
        << "</text>\n";
    y += 14;
  }
}

}  // namespace

std::string render_line_chart(const ChartSpec& spec) {
  check_spec(spec);
  Frame f = fit_frame(spec, false);
  std::ostringstream out;
  open_svg(out, spec);
  draw_axes(out, spec, f);
  const std::size_t n = spec.x_ticks.size();
  auto x_of = [&](std::size_t i) {
    return n == 1 ? (f.left + f.right) / 2
                  : f.left + (f.right - f.left) * double(i) / double(n - 1);
  };
  for (std::size_t i = 0; i < n; ++i)
    out << "<text x=\"" << x_of(i) << "\" y=\"" << f.bottom + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
        << escape_xml(spec.x_ticks[i]) << "</text>\n";
  for (std::size_t s = 0; s < spec.series.size(); ++s) {
    const char* col = kColors[s % kPalette];
    out << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < n; ++i)
      out << fmt(x_of(i)) << "," << fmt(y_of(f, spec.series[s].values[i])) << " ";
    out << "\"/>\n";
    for (std::size_t i = 0; i < n; ++i)
      out << "<circle cx=\"" << fmt(x_of(i)) << "\" cy=\"" << fmt(y_of(f, spec.series[s].values[i]))
          << "\" r=\"3\" fill=\"" << col << "\"/>\n";
  }
  draw_legend(out, spec, f);
  out << "</svg>\n";
  return out.str();
}

std::string render_bar_chart(const ChartSpec& spec) {
  check_spec(spec);
  Frame f = fit_frame(spec, true);
  std::ostringstream out;
  open_svg(out, spec);
  draw_axes(out, spec, f);
  const std::size_t n = spec.x_ticks.size();
  const std::size_t m = spec.series.size();
  double group = (f.right - f.left) / double(n);
  double bar = group * 0.8 / double(m);
  double zero = y_of(f, std::max(0.0, f.ymin));
  for (std::size_t i = 0; i < n; ++i) {
    double gx = f.left + group * double(i);
    out << "<text x=\"" << gx + group / 2 << "\" y=\"" << f.bottom + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
        << escape_xml(spec.x_ticks[i]) << "</text>\n";
    for (std::size_t s = 0; s < m; ++s) {
      double x = gx + group * 0.1 + bar * double(s);
      double y = y_of(f, spec.series[s].values[i]);
      double top = std::min(y, zero), h = std::abs(zero - y);
      out << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(bar)
          << "\" height=\"" << fmt(h) << "\" fill=\"" << kColors[s % kPalette] << "\"/>\n";
    }
  }
  draw_legend(out, spec, f);
  out << "</svg>\n";
  return out.str();
}

ChartSpec chart_from_csv(const std::string& csv_text, const std::string& title) {
  std::istringstream in(csv_text);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  if (rows.size() < 2) throw std::runtime_error("chart: CSV needs a header and at least one row");
  const auto& header = rows[0];
  if (header.size() < 2) throw std::runtime_error("chart: CSV needs at least two columns");
  ChartSpec spec;
  spec.title = title;
  spec.x_label = header[0];
  spec.y_label = header.size() == 2 ? header[1] : "value";
  for (std::size_t c = 1; c < header.size(); ++c) spec.series.push_back({header[c], {}});
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size())
      throw std::runtime_error("chart: row " + std::to_string(r) + " has " +
                               std::to_string(rows[r].size()) + " cells, header has " +
                               std::to_string(header.size()));
    spec.x_ticks.push_back(rows[r][0]);
    for (std::size_t c = 1; c < header.size(); ++c) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(rows[r][c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != rows[r][c].size())
        throw std::runtime_error("chart: non-numeric cell " + rows[r][c]);
      spec.series[c - 1].values.push_back(v);
    }
  }
  return spec;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("short write to " + path);
}

}  // namespace reckon::chart
