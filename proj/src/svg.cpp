#include "e2ec/svg.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace e2ec {

void validate(const RenderSpec& spec) {
  if (!spec.show_initial && !spec.show_coarse && !spec.show_iter1 && !spec.show_final) {
    throw Error(Errc::config_error, "render spec selects no stage");
  }
  if (!(spec.scale > 0)) throw Error(Errc::config_error, "render scale must be positive");
}

namespace {

std::string xml_escape(const std::string& s) {
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
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string ring_path(std::span<const Point2> pts, double scale) {
  std::ostringstream ss;
  for (size_t i = 0; i < pts.size(); ++i) {
    ss << (i == 0 ? "M " : "L ") << fmt(pts[i].x * scale) << ' ' << fmt(pts[i].y * scale) << ' ';
  }
  ss << "Z";
  return ss.str();
}

void contour_group(std::ostringstream& svg, const std::string& id, std::span<const Point2> pts,
                   const std::string& color, double scale, bool with_dots) {
  svg << "  <g id=\"" << id << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\">\n";
  svg << "    <path d=\"" << ring_path(pts, scale) << "\"/>\n";
  if (with_dots) {
    for (const Point2& p : pts) {
      svg << "    <circle cx=\"" << fmt(p.x * scale) << "\" cy=\"" << fmt(p.y * scale)
          << "\" r=\"1.5\" fill=\"" << color << "\" stroke=\"none\"/>\n";
    }
  }
  svg << "  </g>\n";
}

void path_group(std::ostringstream& svg, const std::string& id, std::span<const Point2> from,
                std::span<const Point2> to, const std::string& color, double scale) {
  svg << "  <g id=\"" << id << "\" stroke=\"" << color << "\" stroke-width=\"0.5\">\n";
  for (size_t i = 0; i < from.size(); ++i) {
    if (from[i].x == to[i].x && from[i].y == to[i].y) continue;  // zero-length
    svg << "    <line x1=\"" << fmt(from[i].x * scale) << "\" y1=\"" << fmt(from[i].y * scale)
        << "\" x2=\"" << fmt(to[i].x * scale) << "\" y2=\"" << fmt(to[i].y * scale) << "\"/>\n";
  }
  svg << "  </g>\n";
}

}  // namespace

std::string render_stages_svg(const Polygon& gt, const ContourStages& stages,
                              const RenderSpec& spec, int image_h, int image_w,
                              const std::string& config_note) {
  validate(spec);
  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(image_w * spec.scale)
      << "\" height=\"" << fmt(image_h * spec.scale) << "\">\n";
  if (!config_note.empty()) svg << "  <desc>" << xml_escape(config_note) << "</desc>\n";

  contour_group(svg, "gt", gt.vertices, spec.gt_color, spec.scale, false);

  struct StageRow {
    bool on;
    const char* id;
    const std::vector<Point2>* pts;
    const std::string* color;
  };
  const StageRow rows[] = {
      {spec.show_initial, "stage-initial", &stages.initial.vertices, &spec.initial_color},
      {spec.show_coarse, "stage-coarse", &stages.coarse.vertices, &spec.coarse_color},
      {spec.show_iter1, "stage-iter1", &stages.iter1.vertices, &spec.iter1_color},
      {spec.show_final, "stage-final", &stages.iter2.vertices, &spec.final_color},
  };
  if (spec.draw_paths) {
    const StageRow* prev = nullptr;
    for (const StageRow& row : rows) {
      if (!row.on) continue;
      if (prev) {
        path_group(svg, std::string("paths-") + prev->id + "-to-" + row.id, *prev->pts, *row.pts,
                   spec.path_color, spec.scale);
      }
      prev = &row;
    }
  }
  for (const StageRow& row : rows) {
    if (row.on) contour_group(svg, row.id, *row.pts, *row.color, spec.scale, true);
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string render_mda_panels_svg(const Polygon& polygon, const MDAConfig& base,
                                  const std::vector<int>& m_values, int image_h, int image_w,
                                  double scale, const std::string& config_note) {
  if (m_values.empty()) throw Error(Errc::config_error, "no alignment counts to render");
  const Polygon ccw = normalize_orientation(polygon);
  const Point2 center = compute_center(ccw);
  const double pw = image_w * scale;

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(pw * m_values.size())
      << "\" height=\"" << fmt(image_h * scale) << "\">\n";
  if (!config_note.empty()) svg << "  <desc>" << xml_escape(config_note) << "</desc>\n";

  for (size_t panel = 0; panel < m_values.size(); ++panel) {
    MDAConfig cfg = base;
    cfg.m_aligned = m_values[panel];
    const Contour sample = mda_sample(ccw, center, cfg);
    const std::vector<int> fixed = mda_fixed_indices(cfg);

    svg << "  <g id=\"panel-m" << m_values[panel] << "\" transform=\"translate("
        << fmt(panel * pw) << " 0)\">\n";
    svg << "    <path d=\"" << ring_path(ccw.vertices, scale)
        << "\" fill=\"none\" stroke=\"#888888\" stroke-width=\"1\"/>\n";
    for (int fi : fixed) {
      const Point2& q = sample.vertices[fi];
      svg << "    <line x1=\"" << fmt(center.x * scale) << "\" y1=\"" << fmt(center.y * scale)
          << "\" x2=\"" << fmt(q.x * scale) << "\" y2=\"" << fmt(q.y * scale)
          << "\" stroke=\"#bbbbbb\" stroke-width=\"0.5\"/>\n";
    }
    for (int i = 0; i < sample.size(); ++i) {
      const bool is_fixed =
          cfg.m_aligned > 0 && i % (cfg.n_vertices / std::max(1, cfg.m_aligned)) == 0;
      const Point2& q = sample.vertices[i];
      svg << "    <circle cx=\"" << fmt(q.x * scale) << "\" cy=\"" << fmt(q.y * scale) << "\" r=\""
          << (is_fixed ? "2.5" : "1.2") << "\" fill=\"" << (is_fixed ? "#000000" : "#d62728")
          << "\"/>\n";
    }
    svg << "    <circle cx=\"" << fmt(center.x * scale) << "\" cy=\"" << fmt(center.y * scale)
        << "\" r=\"2\" fill=\"#1f77b4\"/>\n";
    svg << "  </g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace e2ec
