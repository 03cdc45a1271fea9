#include "ctp/plot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ctp/format.hpp"

namespace ctp {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 160.0;
constexpr double kTop = 50.0;
constexpr double kBottom = 60.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string fixed(double v, int digits = 2) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, digits);
  return std::string(buf, ptr);
}

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

std::string header(const std::string& title) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">" << escape(title)
    << "</text>\n";
  return s.str();
}

/// White to dark blue.
std::string ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(247 - t * (247 - 8)));
  const int g = static_cast<int>(std::lround(251 - t * (251 - 48)));
  const int b = static_cast<int>(std::lround(255 - t * (255 - 107)));
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw std::invalid_argument("csv has no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": no data rows");
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) t.header.push_back(cell);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": non-numeric cell '" + cell + "'");
      }
      row.push_back(v);
    }
    if (row.size() != t.header.size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(t.header.size()) + " cells");
    }
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw std::runtime_error(path.string() + ": no data rows");
  return t;
}

std::string render_heatmap(const CsvTable& t, const std::string& x, const std::string& y,
                           const std::string& value, const std::string& title) {
  const std::size_t xi = t.column(x), yi = t.column(y), vi = t.column(value);
  std::set<double> xs, ys;
  std::map<std::pair<double, double>, double> cells;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& r : t.rows) {
    xs.insert(r[xi]);
    ys.insert(r[yi]);
    cells[{r[xi], r[yi]}] = r[vi];
    lo = std::min(lo, r[vi]);
    hi = std::max(hi, r[vi]);
  }
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const double cw = pw / static_cast<double>(xs.size()), ch = ph / static_cast<double>(ys.size());
  std::ostringstream s;
  s << header(title);
  std::size_t col = 0;
  for (double xv : xs) {
    std::size_t row = 0;
    for (auto it = ys.rbegin(); it != ys.rend(); ++it, ++row) {
      const double px = kLeft + static_cast<double>(col) * cw, py = kTop + static_cast<double>(row) * ch;
      auto cell = cells.find({xv, *it});
      if (cell == cells.end()) continue;
      const double tnorm = hi > lo ? (cell->second - lo) / (hi - lo) : 0.5;
      s << "<rect x=\"" << fixed(px) << "\" y=\"" << fixed(py) << "\" width=\"" << fixed(cw) << "\" height=\""
        << fixed(ch) << "\" fill=\"" << ramp(tnorm) << "\" stroke=\"white\"/>\n";
      s << "<text x=\"" << fixed(px + cw / 2) << "\" y=\"" << fixed(py + ch / 2 + 4)
        << "\" text-anchor=\"middle\" fill=\"" << (tnorm > 0.55 ? "white" : "black") << "\">"
        << fixed(cell->second, 3) << "</text>\n";
    }
    s << "<text x=\"" << fixed(kLeft + (static_cast<double>(col) + 0.5) * cw) << "\" y=\""
      << fixed(kTop + ph + 18) << "\" text-anchor=\"middle\">" << format_real(xv) << "</text>\n";
    ++col;
  }
  std::size_t row = 0;
  for (auto it = ys.rbegin(); it != ys.rend(); ++it, ++row) {
    s << "<text x=\"" << fixed(kLeft - 8) << "\" y=\"" << fixed(kTop + (static_cast<double>(row) + 0.5) * ch + 4)
      << "\" text-anchor=\"end\">" << format_real(*it) << "</text>\n";
  }
  s << "<text x=\"" << fixed(kLeft + pw / 2) << "\" y=\"" << fixed(kHeight - 15) << "\" text-anchor=\"middle\">"
    << escape(x) << "</text>\n";
  s << "<text x=\"20\" y=\"" << fixed(kTop + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
    << fixed(kTop + ph / 2) << ")\">" << escape(y) << "</text>\n";
  // colour scale
  const double lx = kWidth - kRight + 40;
  for (int i = 0; i < 10; ++i) {
    s << "<rect x=\"" << fixed(lx) << "\" y=\"" << fixed(kTop + ph - (i + 1) * ph / 10) << "\" width=\"20\" height=\""
      << fixed(ph / 10) << "\" fill=\"" << ramp((i + 0.5) / 10) << "\"/>\n";
  }
  s << "<text x=\"" << fixed(lx + 26) << "\" y=\"" << fixed(kTop + ph) << "\">" << fixed(lo, 3) << "</text>\n";
  s << "<text x=\"" << fixed(lx + 26) << "\" y=\"" << fixed(kTop + 10) << "\">" << fixed(hi, 3) << "</text>\n";
  s << "<text x=\"" << fixed(lx) << "\" y=\"" << fixed(kTop - 8) << "\">" << escape(value) << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string render_line_chart(const std::vector<Series>& series, const std::string& x_label,
                              const std::string& y_label, const std::string& title) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const Series& sr : series) {
    if (sr.x.size() != sr.y.size() || (!sr.err.empty() && sr.err.size() != sr.y.size())) {
      throw std::invalid_argument("series '" + sr.label + "': mismatched lengths");
    }
    for (std::size_t i = 0; i < sr.x.size(); ++i) {
      const double e = sr.err.empty() ? 0.0 : sr.err[i];
      x0 = std::min(x0, sr.x[i]);
      x1 = std::max(x1, sr.x[i]);
      y0 = std::min(y0, sr.y[i] - e);
      y1 = std::max(y1, sr.y[i] + e);
    }
  }
  if (!std::isfinite(x0)) throw std::runtime_error("no data rows");
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) y1 = y0 + 1.0;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double v) { return kLeft + (v - x0) / (x1 - x0) * pw; };
  auto py = [&](double v) { return kTop + ph - (v - y0) / (y1 - y0) * ph; };

  std::ostringstream s;
  s << header(title);
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = y0 + (y1 - y0) * i / 4.0;
    s << "<text x=\"" << fixed(kLeft - 6) << "\" y=\"" << fixed(py(v) + 4) << "\" text-anchor=\"end\">" << fixed(v, 3)
      << "</text>\n";
  }
  std::set<double> ticks;
  for (const Series& sr : series) ticks.insert(sr.x.begin(), sr.x.end());
  for (double v : ticks) {
    s << "<text x=\"" << fixed(px(v)) << "\" y=\"" << fixed(kTop + ph + 18) << "\" text-anchor=\"middle\">"
      << format_real(v) << "</text>\n";
  }
  s << "<text x=\"" << fixed(kLeft + pw / 2) << "\" y=\"" << fixed(kHeight - 15) << "\" text-anchor=\"middle\">"
    << escape(x_label) << "</text>\n";
  s << "<text x=\"20\" y=\"" << fixed(kTop + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
    << fixed(kTop + ph / 2) << ")\">" << escape(y_label) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& sr = series[k];
    const char* colour = kPalette[k % std::size(kPalette)];
    std::vector<std::size_t> order(sr.x.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sr.x[a] < sr.x[b]; });
    s << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i : order) s << fixed(px(sr.x[i])) << ',' << fixed(py(sr.y[i])) << ' ';
    s << "\"/>\n";
    for (std::size_t i : order) {
      s << "<circle cx=\"" << fixed(px(sr.x[i])) << "\" cy=\"" << fixed(py(sr.y[i])) << "\" r=\"3\" fill=\"" << colour
        << "\"/>\n";
      if (!sr.err.empty() && sr.err[i] > 0.0) {
        s << "<line x1=\"" << fixed(px(sr.x[i])) << "\" y1=\"" << fixed(py(sr.y[i] - sr.err[i])) << "\" x2=\""
          << fixed(px(sr.x[i])) << "\" y2=\"" << fixed(py(sr.y[i] + sr.err[i])) << "\" stroke=\"" << colour
          << "\"/>\n";
      }
    }
    const double ly = kTop + 10 + 20.0 * static_cast<double>(k);
    s << "<line x1=\"" << fixed(kWidth - kRight + 20) << "\" y1=\"" << fixed(ly) << "\" x2=\""
      << fixed(kWidth - kRight + 44) << "\" y2=\"" << fixed(ly) << "\" stroke=\"" << colour
      << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << fixed(kWidth - kRight + 50) << "\" y=\"" << fixed(ly + 4) << "\">" << escape(sr.label)
      << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace ctp
