#include "trinity/pipeline/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "trinity/binary_io.hpp"
#include "trinity/error.hpp"

namespace trinity::pipeline {

namespace {

// Plot area inside a fixed canvas.
constexpr double kWidth = 640, kHeight = 360;
constexpr double kLeft = 56, kRight = 16, kTop = 32, kBottom = 40;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;  // data ranges
  double px(double x) const {
    const double span = x1 > x0 ? x1 - x0 : 1.0;
    return kLeft + (x - x0) / span * (kWidth - kLeft - kRight);
  }
  double py(double y) const {
    const double span = y1 > y0 ? y1 - y0 : 1.0;
    return kHeight - kBottom - (y - y0) / span * (kHeight - kTop - kBottom);
  }
};

std::string open_svg(const std::string& title, const Frame& f, const std::string& xlabel,
                     const std::string& ylabel) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
    << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
    << escape(title) << "</text>\n";
  s << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kWidth - kLeft - kRight
    << "\" height=\"" << kHeight - kTop - kBottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = f.y0 + (f.y1 - f.y0) * i / 4.0;
    s << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(f.py(y) + 4)
      << "\" text-anchor=\"end\" font-size=\"10\">" << num(y) << "</text>\n";
    const double x = f.x0 + (f.x1 - f.x0) * i / 4.0;
    s << "<text x=\"" << num(f.px(x)) << "\" y=\"" << kHeight - kBottom + 14
      << "\" text-anchor=\"middle\" font-size=\"10\">" << num(x) << "</text>\n";
  }
  s << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 8
    << "\" text-anchor=\"middle\" font-size=\"11\">" << escape(xlabel) << "</text>\n";
  s << "<text x=\"14\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" font-size=\"11\""
    << " transform=\"rotate(-90 14 " << kHeight / 2 << ")\">" << escape(ylabel) << "</text>\n";
  return s.str();
}

std::string polyline(const Frame& f, std::span<const double> x, std::span<const double> y,
                     const char* color, const std::string& name) {
  std::ostringstream s;
  s << "<polyline class=\"series\" data-name=\"" << escape(name) << "\" fill=\"none\" stroke=\""
    << color << "\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < x.size(); ++i) {
    s << (i ? " " : "") << num(f.px(x[i])) << "," << num(f.py(std::clamp(y[i], f.y0, f.y1)));
  }
  s << "\"/>\n";
  return s.str();
}

}  // namespace

bool CsvTable::has(const std::string& name) const {
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

std::vector<double> CsvTable::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw FormatError("CSV has no column '" + name + "'");
  const auto k = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[k]);
  return out;
}

CsvTable parse_csv(const std::string& text, const std::string& label) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!l.empty() && l.back() == ',') cells.emplace_back();
    return cells;
  };
  if (!std::getline(in, line)) throw FormatError(label + ": empty CSV");
  t.columns = split(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.columns.size()) {
      throw FormatError(label + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(t.columns.size()) + " cells");
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      if (c.empty()) {
        row.push_back(std::nan(""));
        continue;
      }
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw FormatError(label + ":" + std::to_string(lineno) + ": not a number '" + c + "'");
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  return parse_csv(io::read_file(path), path.string());
}

std::string timeline_svg(const std::string& title, const std::vector<PlotSeries>& series,
                         std::span<const double> labels) {
  std::size_t n = labels.size();
  for (const auto& s : series) n = std::max(n, s.values.size());
  const Frame f{0.0, n > 1 ? static_cast<double>(n - 1) : 1.0, 0.0, 1.0};
  std::string out = open_svg(title, f, "frame", "score");
  const double step = n > 1 ? f.px(1.0) - f.px(0.0) : 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!(labels[i] > 0.5)) continue;
    out += "<rect class=\"anomaly\" x=\"" + num(f.px(static_cast<double>(i)) - step / 2) +
           "\" y=\"" + num(kTop) + "\" width=\"" + num(std::max(step, 1.0)) + "\" height=\"" +
           num(kHeight - kTop - kBottom) + "\" fill=\"#f4cccc\"/>\n";
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    std::vector<double> x(s.values.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
    const char* color = kColors[k % std::size(kColors)];
    out += polyline(f, x, s.values, color, s.name);
    out += "<text x=\"" + num(kLeft + 8) + "\" y=\"" + num(kTop + 14 + 14.0 * k) +
           "\" font-size=\"11\" fill=\"" + color + "\">" + escape(s.name) + "</text>\n";
  }
  return out + "</svg>\n";
}

std::string roc_svg(const std::string& title, std::span<const double> fpr,
                    std::span<const double> tpr) {
  if (fpr.size() != tpr.size()) throw ContractViolation("roc_svg: fpr/tpr length mismatch");
  const Frame f{0.0, 1.0, 0.0, 1.0};
  std::string out = open_svg(title, f, "false positive rate", "true positive rate");
  out += "<polyline fill=\"none\" stroke=\"#999\" stroke-dasharray=\"4 3\" points=\"" +
         num(f.px(0)) + "," + num(f.py(0)) + " " + num(f.px(1)) + "," + num(f.py(1)) + "\"/>\n";
  out += polyline(f, fpr, tpr, kColors[0], "roc");
  return out + "</svg>\n";
}

std::string plot_csv(const std::filesystem::path& csv) {
  const CsvTable t = read_csv(csv);
  const std::string title = csv.stem().string();
  if (t.has("fpr") && t.has("tpr")) return roc_svg(title, t.column("fpr"), t.column("tpr"));
  if (!t.has("frame_index") || !t.has("S")) {
    throw FormatError(csv.string() + ": neither a score CSV nor an ROC CSV");
  }
  std::vector<PlotSeries> series;
  for (const auto& c : t.columns) {
    if (c == "frame_index" || c == "label" || c == "anomaly") continue;
    series.push_back({c, t.column(c)});
  }
  const std::vector<double> labels = t.has("label") ? t.column("label") : std::vector<double>{};
  return timeline_svg(title, series, labels);
}

}  // namespace trinity::pipeline
