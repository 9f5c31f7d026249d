#include "marketgraph/svg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "marketgraph/csv.hpp"
#include "marketgraph/errors.hpp"

namespace marketgraph::svg {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// Blue (low) through white to red (high).
std::string color_for(double t) {
  t = std::clamp(t, 0.0, 1.0);
  int r, g, b;
  if (t < 0.5) {
    const double u = t / 0.5;
    r = static_cast<int>(49 + u * (255 - 49));
    g = static_cast<int>(54 + u * (255 - 54));
    b = static_cast<int>(149 + u * (255 - 149));
  } else {
    const double u = (t - 0.5) / 0.5;
    r = static_cast<int>(255 - u * (255 - 165));
    g = static_cast<int>(255 - u * 255);
    b = static_cast<int>(255 - u * (255 - 38));
  }
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
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

std::string heatmap(const LabeledMatrix& m, const std::string& title) {
  const std::size_t n = m.labels.size();
  if (m.values.rank() != 2 || m.values.dim(0) != n || m.values.dim(1) != n) {
    throw DimensionError("heatmap needs a square matrix matching its labels");
  }
  const double cell = 44, left = 110, top = 60;
  double lo = 0, hi = 0;
  if (n > 0) {
    lo = *std::min_element(m.values.values().begin(), m.values.values().end());
    hi = *std::max_element(m.values.values().begin(), m.values.values().end());
  }
  const double span = hi > lo ? hi - lo : 1.0;
  const double width = left + cell * n + 20, height = top + cell * n + 20;

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\""
      << num(height) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<text x=\"" << num(width / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(title) << "</text>\n";
  for (std::size_t i = 0; i < n; ++i) {
    out << "<text x=\"" << num(left - 6) << "\" y=\"" << num(top + cell * i + cell / 2 + 4)
        << "\" text-anchor=\"end\">" << escape(m.labels[i]) << "</text>\n";
    out << "<text x=\"" << num(left + cell * i + cell / 2) << "\" y=\"" << num(top - 8)
        << "\" text-anchor=\"middle\">" << escape(m.labels[i]) << "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = m.values.at(i, j);
      out << "<rect class=\"cell\" x=\"" << num(left + cell * j) << "\" y=\""
          << num(top + cell * i) << "\" width=\"" << num(cell) << "\" height=\"" << num(cell)
          << "\" fill=\"" << color_for((v - lo) / span) << "\" data-row=\""
          << escape(m.labels[i]) << "\" data-col=\"" << escape(m.labels[j])
          << "\" data-value=\"" << csv::format_double(v) << "\"/>\n";
      out << "<text x=\"" << num(left + cell * j + cell / 2) << "\" y=\""
          << num(top + cell * i + cell / 2 + 4) << "\" text-anchor=\"middle\" font-size=\"9\">"
          << num(v) << "</text>\n";
    }
  }
  out << "</svg>\n";
  return out.str();
}

std::string line_chart(const std::vector<Date>& dates, const std::vector<Line>& lines,
                       const std::string& title) {
  for (const auto& l : lines) {
    if (l.values.size() != dates.size()) throw DimensionError("line length differs from dates");
  }
  const double width = 900, height = 360, left = 70, right = 20, top = 40, bottom = 50;
  const double pw = width - left - right, ph = height - top - bottom;
  double lo = 0, hi = 1;
  bool any = false;
  for (const auto& l : lines) {
    for (double v : l.values) {
      if (!any) lo = hi = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      any = true;
    }
  }
  if (!(hi > lo)) hi = lo + 1.0;
  const std::size_t n = dates.size();
  auto x_at = [&](std::size_t t) { return left + (n > 1 ? pw * t / (n - 1) : pw / 2); };
  auto y_at = [&](double v) { return top + ph * (1.0 - (v - lo) / (hi - lo)); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\""
      << num(height) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<text x=\"" << num(width / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(title) << "</text>\n";
  out << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw)
      << "\" height=\"" << num(ph) << "\" fill=\"none\" stroke=\"#999\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    out << "<text x=\"" << num(left - 6) << "\" y=\"" << num(y_at(v) + 4)
        << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
  }
  if (n > 0) {
    out << "<text x=\"" << num(left) << "\" y=\"" << num(height - 20) << "\">"
        << format_date(dates.front()) << "</text>\n";
    out << "<text x=\"" << num(left + pw) << "\" y=\"" << num(height - 20)
        << "\" text-anchor=\"end\">" << format_date(dates.back()) << "</text>\n";
  }
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const auto& l = lines[k];
    out << "<polyline class=\"series\" data-name=\"" << escape(l.name)
        << "\" fill=\"none\" stroke=\"" << escape(l.color) << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t t = 0; t < n; ++t)
      out << (t ? " " : "") << num(x_at(t)) << ',' << num(y_at(l.values[t]));
    out << "\"/>\n";
    out << "<text x=\"" << num(left + 10 + 140 * k) << "\" y=\"" << num(top + 14) << "\" fill=\""
        << escape(l.color) << "\">" << escape(l.name) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace marketgraph::svg
