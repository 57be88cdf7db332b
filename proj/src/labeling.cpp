#include "e2ec/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace e2ec {

void validate(const MDAConfig& cfg) {
  if (cfg.n_vertices < 3) throw Error(Errc::config_error, "MDA needs N >= 3");
  if (cfg.m_aligned < 0 || cfg.m_aligned > cfg.n_vertices) {
    throw Error(Errc::config_error, "MDA needs 0 <= M <= N");
  }
  if (cfg.m_aligned > 0 && cfg.n_vertices % cfg.m_aligned != 0) {
    throw Error(Errc::config_error, "MDA needs M to divide N");
  }
  if (cfg.subsegments < 1) throw Error(Errc::config_error, "MDA needs k >= 1");
}

double default_dp_eps(const Polygon& p) {
  const Box b = bounding_box(p.vertices);
  return 0.01 * std::max(b.width(), b.height());
}

Point2 polygon_centroid(const Polygon& p) {
  const int n = p.size();
  double a = 0.0, cx = 0.0, cy = 0.0;
  for (int i = 0; i < n; ++i) {
    const Point2& u = p.vertices[i];
    const Point2& v = p.vertices[(i + 1) % n];
    const double w = u.x * v.y - v.x * u.y;
    a += w;
    cx += (u.x + v.x) * w;
    cy += (u.y + v.y) * w;
  }
  a *= 0.5;
  if (std::abs(a) < 1e-12) throw Error(Errc::zero_area, "centroid of zero-area polygon");
  return {cx / (6.0 * a), cy / (6.0 * a)};
}

namespace {

bool strictly_inside(const Polygon& p, Point2 q) {
  return point_in_polygon(p.vertices, q) && boundary_distance(p, q) > 1e-9;
}

}  // namespace

Point2 compute_center(const Polygon& p) {
  const Point2 bc = bounding_box(p.vertices).center();
  if (strictly_inside(p, bc)) return bc;
  const Point2 cc = polygon_centroid(p);
  if (strictly_inside(p, cc)) return cc;
  throw Error(Errc::center_outside, "bbox center and centroid both fall outside the polygon");
}

std::vector<int> mda_fixed_indices(const MDAConfig& cfg) {
  std::vector<int> idx;
  if (cfg.m_aligned <= 0) return idx;
  const int stride = cfg.n_vertices / cfg.m_aligned;
  for (int j = 0; j < cfg.m_aligned; ++j) idx.push_back(j * stride);
  return idx;
}

Contour mda_sample(const Polygon& p, Point2 center, const MDAConfig& cfg) {
  validate(cfg);
  const int n = cfg.n_vertices;
  const int m = cfg.m_aligned;
  constexpr double two_pi = 2.0 * std::numbers::pi;

  if (m == 0) {
    const Point2 start = ray_boundary_intersection(p, center, cfg.start_angle, cfg.ray_pick);
    return resample_uniform(p, n, start);
  }

  std::vector<BoundaryHit> hits(m);
  for (int j = 0; j < m; ++j) {
    hits[j] = ray_boundary_hit(p, center, cfg.start_angle + two_pi * j / m, cfg.ray_pick);
  }
  if (m == n) {
    Contour out;
    out.vertices.reserve(n);
    for (const BoundaryHit& h : hits) out.vertices.push_back(h.point);
    return out;
  }

  const std::vector<double> cum = cumulative_lengths(p);
  const double total = cum.back();
  std::vector<double> s(m);
  for (int j = 0; j < m; ++j) {
    s[j] = cum[hits[j].edge] + hits[j].edge_t * (cum[hits[j].edge + 1] - cum[hits[j].edge]);
  }

  const int per_segment = n / m;
  Contour out;
  out.vertices.reserve(n);
  for (int j = 0; j < m; ++j) {
    out.vertices.push_back(hits[j].point);
    const double seg_len = m == 1 ? total : std::fmod(s[(j + 1) % m] - s[j] + total, total);
    for (int i = 1; i < per_segment; ++i) {
      const double si = s[j] + seg_len * i / per_segment;
      out.vertices.push_back(point_at_arclength(p, cum, si));
    }
  }
  return out;
}

LabeledInstance build_label(const Polygon& p, const MDAConfig& cfg) {
  validate(cfg);
  LabeledInstance label;
  label.raw_polygon = normalize_orientation(p);
  label.center = compute_center(label.raw_polygon);
  label.gt_contour = mda_sample(label.raw_polygon, label.center, cfg);
  label.gt_interp = interpolate_subsegments(label.gt_contour, cfg.subsegments);
  const double eps = cfg.dp_eps > 0 ? cfg.dp_eps : default_dp_eps(label.raw_polygon);
  if (cfg.dp_on_raw) {
    label.gt_keys = douglas_peucker(label.raw_polygon, eps);
  } else {
    label.gt_keys = douglas_peucker(Polygon{label.gt_contour.vertices}, eps);
  }
  label.n_key = static_cast<int>(label.gt_keys.size());
  return label;
}

}  // namespace e2ec
