#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "layerlens/attention.hpp"
#include "layerlens/common.hpp"

namespace layerlens {

// Sign alone picks the bar color; zero renders green by convention.
constexpr const char* kPositiveColor = "#2e8b57";
constexpr const char* kNegativeColor = "#c0392b";

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string fcoord(double v) { return strfmt("%.2f", v); }

}  // namespace detail

// Horizontal signed bar chart: one bar per label, positive bars green and to
// the right of the zero line, negative bars red and to the left.
inline std::string render_bars(const std::vector<double>& values,
                               const std::vector<std::string>& labels,
                               const std::string& title) {
  if (values.size() != labels.size())
    throw InputError(strfmt("render_bars: %zu values for %zu labels", values.size(),
                            labels.size()));
  if (values.empty()) throw InputError("render_bars: no values");
  for (double v : values)
    if (!std::isfinite(v)) throw InputError("render_bars: non-finite value");

  const double label_w = 320.0;
  const double chart_w = 480.0;
  const double row_h = 26.0;
  const double top = 42.0;
  const double width = label_w + chart_w + 90.0;
  const double height = top + row_h * static_cast<double>(values.size()) + 18.0;

  double pos_max = 0.0, neg_max = 0.0;
  for (double v : values) {
    pos_max = std::max(pos_max, v);
    neg_max = std::max(neg_max, -v);
  }
  const double range = pos_max + neg_max;
  const double scale = range > 0.0 ? chart_w / range : 1.0;
  const double x_zero = label_w + neg_max * scale;

  using detail::fcoord;
  using detail::xml_escape;
  std::string svg;
  svg += strfmt("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "viewBox=\"0 0 %.0f %.0f\" font-family=\"sans-serif\">\n",
                width, height, width, height);
  svg += strfmt("<text x=\"%s\" y=\"20\" font-size=\"15\" font-weight=\"bold\">%s</text>\n",
                fcoord(label_w).c_str(), xml_escape(title).c_str());
  svg += strfmt("<line x1=\"%s\" y1=\"%s\" x2=\"%s\" y2=\"%s\" stroke=\"#444\" "
                "stroke-width=\"1\"/>\n",
                fcoord(x_zero).c_str(), fcoord(top - 10.0).c_str(), fcoord(x_zero).c_str(),
                fcoord(height - 12.0).c_str());
  for (size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    const double y = top + row_h * static_cast<double>(i);
    const double bar_w = std::abs(v) * scale;
    const double x = v >= 0.0 ? x_zero : x_zero - bar_w;
    const char* color = v < 0.0 ? kNegativeColor : kPositiveColor;
    svg += strfmt("<text x=\"%s\" y=\"%s\" font-size=\"12\" text-anchor=\"end\">%s</text>\n",
                  fcoord(label_w - 8.0).c_str(), fcoord(y + row_h * 0.62).c_str(),
                  xml_escape(labels[i]).c_str());
    svg += strfmt("<rect x=\"%s\" y=\"%s\" width=\"%s\" height=\"%s\" fill=\"%s\"/>\n",
                  fcoord(x).c_str(), fcoord(y + 4.0).c_str(), fcoord(bar_w).c_str(),
                  fcoord(row_h - 8.0).c_str(), color);
    const double tx = v >= 0.0 ? x_zero + bar_w + 5.0 : x_zero - bar_w - 5.0;
    svg += strfmt("<text x=\"%s\" y=\"%s\" font-size=\"11\" text-anchor=\"%s\" "
                  "fill=\"#333\">%s</text>\n",
                  fcoord(tx).c_str(), fcoord(y + row_h * 0.62).c_str(),
                  v >= 0.0 ? "start" : "end", format_g6(v).c_str());
  }
  svg += "</svg>\n";
  return svg;
}

// M x M heatmap with a sequential scale normalized to the matrix maximum,
// axis labels "Phrase i" and a legend block reproducing the index mapping.
inline std::string render_heatmap(const PhraseAttentionMatrix& matrix) {
  const int m = matrix.size();
  if (m == 0) throw InputError("render_heatmap: empty matrix");
  if (matrix.scores.cols != m) throw InputError("render_heatmap: matrix not square");
  for (double v : matrix.scores.data)
    if (!std::isfinite(v)) throw InputError("render_heatmap: non-finite score");

  double vmax = 0.0;
  for (double v : matrix.scores.data) vmax = std::max(vmax, v);

  const double cell = 46.0;
  const double left = 84.0;
  const double top = 58.0;
  const double grid = cell * m;
  const double legend_top = top + grid + 28.0;
  const double width = std::max(left + grid + 30.0, 560.0);
  const double height = legend_top + 18.0 * static_cast<double>(m) + 16.0;

  auto color_of = [&](double v) {
    const double t = vmax > 0.0 ? v / vmax : 0.0;
    const int r0 = 247, g0 = 251, b0 = 255;  // light end
    const int r1 = 8, g1 = 48, b1 = 107;     // dark end
    const int r = static_cast<int>(std::lround(r0 + (r1 - r0) * t));
    const int g = static_cast<int>(std::lround(g0 + (g1 - g0) * t));
    const int b = static_cast<int>(std::lround(b0 + (b1 - b0) * t));
    return strfmt("#%02x%02x%02x", r, g, b);
  };

  using detail::fcoord;
  using detail::xml_escape;
  std::string svg;
  svg += strfmt("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "viewBox=\"0 0 %.0f %.0f\" font-family=\"sans-serif\">\n",
                width, height, width, height);
  svg += strfmt("<text x=\"%s\" y=\"22\" font-size=\"15\" font-weight=\"bold\">"
                "Attention scores by phrase</text>\n",
                fcoord(left).c_str());
  for (int p = 0; p < m; ++p) {
    svg += strfmt("<text x=\"%s\" y=\"%s\" font-size=\"11\" text-anchor=\"end\">Phrase %d"
                  "</text>\n",
                  fcoord(left - 8.0).c_str(), fcoord(top + cell * p + cell * 0.58).c_str(), p);
    svg += strfmt("<text x=\"%s\" y=\"%s\" font-size=\"11\" text-anchor=\"middle\">P%d</text>\n",
                  fcoord(left + cell * p + cell * 0.5).c_str(), fcoord(top - 8.0).c_str(), p);
    for (int q = 0; q < m; ++q) {
      const double v = matrix.scores(p, q);
      const double t = vmax > 0.0 ? v / vmax : 0.0;
      svg += strfmt("<rect x=\"%s\" y=\"%s\" width=\"%s\" height=\"%s\" fill=\"%s\" "
                    "stroke=\"#ffffff\"><title>%s</title></rect>\n",
                    fcoord(left + cell * q).c_str(), fcoord(top + cell * p).c_str(),
                    fcoord(cell).c_str(), fcoord(cell).c_str(), color_of(v).c_str(),
                    format_g6(v).c_str());
      svg += strfmt("<text x=\"%s\" y=\"%s\" font-size=\"10\" text-anchor=\"middle\" "
                    "fill=\"%s\">%s</text>\n",
                    fcoord(left + cell * q + cell * 0.5).c_str(),
                    fcoord(top + cell * p + cell * 0.58).c_str(), t > 0.55 ? "#ffffff" : "#222222",
                    strfmt("%.3g", v).c_str());
    }
  }
  svg += strfmt("<text x=\"%s\" y=\"%s\" font-size=\"12\" font-weight=\"bold\">"
                "Phrase Index Mapping</text>\n",
                fcoord(left).c_str(), fcoord(legend_top - 6.0).c_str());
  for (int p = 0; p < m; ++p) {
    const std::string label =
        p < static_cast<int>(matrix.phrase_labels.size()) ? matrix.phrase_labels[p] : "";
    svg += strfmt("<text x=\"%s\" y=\"%s\" font-size=\"11\">Phrase %d: %s</text>\n",
                  fcoord(left).c_str(), fcoord(legend_top + 18.0 * p + 10.0).c_str(), p,
                  xml_escape(label).c_str());
  }
  svg += "</svg>\n";
  return svg;
}

// Static page embedding every chart produced for one sentence.
inline std::string render_html(const std::string& sentence,
                               const std::vector<std::pair<std::string, std::string>>& sections) {
  using detail::xml_escape;
  std::string html;
  html += "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\"/>\n";
  html += "<title>layerlens: " + xml_escape(sentence) + "</title>\n";
  html += "<style>body{font-family:sans-serif;margin:24px;} h2{margin-top:28px;} "
          ".sentence{color:#333;font-style:italic;}</style>\n";
  html += "</head>\n<body>\n";
  html += "<h1>layerlens explanation</h1>\n";
  html += "<p class=\"sentence\">" + xml_escape(sentence) + "</p>\n";
  for (const auto& [heading, svg] : sections) {
    html += "<h2>" + xml_escape(heading) + "</h2>\n";
    html += svg;
  }
  html += "</body>\n</html>\n";
  return html;
}

}  // namespace layerlens
