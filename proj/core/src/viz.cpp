#include "mtlink/viz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace mtlink {

double haversine_m(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kRadiusM = 6371000.0;
  constexpr double kDeg2Rad = 0.017453292519943295;
  const double phi1 = lat1 * kDeg2Rad, phi2 = lat2 * kDeg2Rad;
  const double dphi = (lat2 - lat1) * kDeg2Rad;
  const double dlmb = (lon2 - lon1) * kDeg2Rad;
  const double a = std::sin(dphi / 2.0) * std::sin(dphi / 2.0) +
                   std::cos(phi1) * std::cos(phi2) * std::sin(dlmb / 2.0) * std::sin(dlmb / 2.0);
  return 2.0 * kRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

Mat cooccurrence_matrix(const CheckinSequence& seq_a, const CheckinSequence& seq_b) {
  for (const auto* seq : {&seq_a, &seq_b})
    for (const SeqPoint& p : seq->points)
      if (!p.lat.has_value() || !p.lon.has_value())
        throw UnavailableError(
            "cooccurrence_matrix: raw coordinates unavailable for tokenized-only sequences");

  const std::size_t ka = seq_a.points.size(), kb = seq_b.points.size();
  Mat d(ka, kb);
  double dmin = std::numeric_limits<double>::infinity();
  double dmax = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ka; ++i)
    for (std::size_t j = 0; j < kb; ++j) {
      const double dist = haversine_m(*seq_a.points[i].lat, *seq_a.points[i].lon,
                                      *seq_b.points[j].lat, *seq_b.points[j].lon);
      d.at(i, j) = dist;
      dmin = std::min(dmin, dist);
      dmax = std::max(dmax, dist);
    }

  Mat out(ka, kb, 1.0);
  if (dmax > dmin) {
    const double span = dmax - dmin;
    for (std::size_t i = 0; i < d.data.size(); ++i)
      out.data[i] = 1.0 - (d.data[i] - dmin) / span;
  }
  return out;
}

void write_matrix_csv(const Mat& m, const std::string& path) {
  AttentionMap wrapper;
  wrapper.weights = m;
  write_attention_map_csv(wrapper, path);
}

namespace {

/// Light-to-dark blue ramp over the panel's own [min, max] range.
std::string cell_color(double v, double lo, double hi) {
  const double t = hi > lo ? (v - lo) / (hi - lo) : 1.0;
  const int r = static_cast<int>(std::lround(247.0 - t * (247.0 - 8.0)));
  const int g = static_cast<int>(std::lround(251.0 - t * (251.0 - 48.0)));
  const int b = static_cast<int>(std::lround(255.0 - t * (255.0 - 107.0)));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

void render_panel(std::string& svg, const Mat& m, const std::string& title, double x0, double y0,
                  double panel_w, double panel_h) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : m.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.1f\" y=\"%.1f\" font-family=\"monospace\" font-size=\"12\">%s</text>\n",
                x0, y0 - 6.0, title.c_str());
  svg += buf;
  const double cw = panel_w / static_cast<double>(m.cols);
  const double ch = panel_h / static_cast<double>(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) {
      std::snprintf(buf, sizeof buf,
                    "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"%s\"/>\n",
                    x0 + static_cast<double>(c) * cw, y0 + static_cast<double>(r) * ch, cw, ch,
                    cell_color(m.at(r, c), lo, hi).c_str());
      svg += buf;
    }
}

}  // namespace

HeatmapFiles export_heatmaps(const AttentionMap& map_ab, const AttentionMap& map_ba,
                             const Mat& cooccurrence, const std::string& prefix) {
  HeatmapFiles files;
  files.map_ab_csv = prefix + "map_ab.csv";
  files.map_ba_csv = prefix + "map_ba.csv";
  files.cooccurrence_csv = prefix + "cooccurrence.csv";
  files.image_svg = prefix + "heatmaps.svg";

  write_attention_map_csv(map_ab, files.map_ab_csv);
  write_attention_map_csv(map_ba, files.map_ba_csv);
  write_matrix_csv(cooccurrence, files.cooccurrence_csv);

  const double panel = 220.0, margin = 30.0, gap = 40.0;
  const double width = margin * 2 + panel * 3 + gap * 2;
  const double height = margin * 2 + panel;
  std::string svg;
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "viewBox=\"0 0 %.0f %.0f\">\n",
                width, height, width, height);
  svg += buf;
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  render_panel(svg, map_ab.weights, "(a) attention A to B", margin, margin, panel, panel);
  render_panel(svg, map_ba.weights, "(b) attention B to A", margin + panel + gap, margin, panel,
               panel);
  render_panel(svg, cooccurrence, "(c) co-occurrence", margin + 2 * (panel + gap), margin, panel,
               panel);
  svg += "</svg>\n";

  std::ofstream out(files.image_svg, std::ios::binary);
  if (!out) throw IoError("cannot write " + files.image_svg);
  out << svg;
  if (!out) throw IoError("write failed: " + files.image_svg);
  return files;
}

}  // namespace mtlink
