#include "e2ec/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace e2ec {

namespace {

constexpr double kDistinctVertexEps = 1e-9;

}  // namespace

int64_t MaskGrid::count() const {
  int64_t n = 0;
  for (uint8_t b : bits) n += b;
  return n;
}

MaskGrid make_mask(int height, int width) {
  MaskGrid m;
  m.height = height;
  m.width = width;
  m.bits.assign(static_cast<size_t>(height) * width, 0);
  return m;
}

Box bounding_box(std::span<const Point2> pts) {
  Box b;
  if (pts.empty()) return b;
  b.min_x = b.max_x = pts[0].x;
  b.min_y = b.max_y = pts[0].y;
  for (const Point2& p : pts) {
    b.min_x = std::min(b.min_x, p.x);
    b.max_x = std::max(b.max_x, p.x);
    b.min_y = std::min(b.min_y, p.y);
    b.max_y = std::max(b.max_y, p.y);
  }
  return b;
}

bool is_valid_polygon(const Polygon& p) {
  const int n = p.size();
  if (n < 3) return false;
  for (const Point2& v : p.vertices) {
    if (!std::isfinite(v.x) || !std::isfinite(v.y)) return false;
  }
  for (int i = 0; i < n; ++i) {
    if (dist(p.vertices[i], p.vertices[(i + 1) % n]) <= kDistinctVertexEps) return false;
  }
  return true;
}

void require_valid_polygon(const Polygon& p) {
  if (!is_valid_polygon(p)) {
    throw Error(Errc::config_error, "invalid polygon (need >= 3 finite, pairwise-distinct vertices)");
  }
}

double signed_area(const Polygon& p) {
  const int n = p.size();
  double a = 0.0;
  for (int i = 0; i < n; ++i) {
    const Point2& u = p.vertices[i];
    const Point2& v = p.vertices[(i + 1) % n];
    a += u.x * v.y - v.x * u.y;
  }
  return 0.5 * a;
}

double polygon_perimeter(const Polygon& p) {
  const int n = p.size();
  double len = 0.0;
  for (int i = 0; i < n; ++i) {
    len += dist(p.vertices[i], p.vertices[(i + 1) % n]);
  }
  return len;
}

std::vector<double> cumulative_lengths(const Polygon& p) {
  const int n = p.size();
  std::vector<double> cum(n + 1, 0.0);
  for (int i = 0; i < n; ++i) {
    cum[i + 1] = cum[i] + dist(p.vertices[i], p.vertices[(i + 1) % n]);
  }
  return cum;
}

Point2 point_at_arclength(const Polygon& p, const std::vector<double>& cum, double s) {
  const int n = p.size();
  const double total = cum[n];
  s = std::fmod(s, total);
  if (s < 0) s += total;
  // cum is strictly increasing (distinct consecutive vertices).
  const auto it = std::upper_bound(cum.begin(), cum.end(), s);
  int e = static_cast<int>(it - cum.begin()) - 1;
  e = std::clamp(e, 0, n - 1);
  const double seg = cum[e + 1] - cum[e];
  const double t = (s - cum[e]) / seg;
  const Point2& a = p.vertices[e];
  const Point2& b = p.vertices[(e + 1) % n];
  return a + t * (b - a);
}

Polygon normalize_orientation(const Polygon& p) {
  const double a = signed_area(p);
  if (std::abs(a) < 1e-12) {
    throw Error(Errc::zero_area, "polygon signed area below 1e-12");
  }
  if (a > 0) return p;
  Polygon out = p;
  std::reverse(out.vertices.begin() + 1, out.vertices.end());
  return out;
}

double point_segment_distance(Point2 q, Point2 a, Point2 b) {
  const Point2 ab = b - a;
  const double len_sq = dot(ab, ab);
  if (len_sq == 0.0) return dist(q, a);
  const double t = std::clamp(dot(q - a, ab) / len_sq, 0.0, 1.0);
  return dist(q, a + t * ab);
}

double boundary_distance(const Polygon& p, Point2 q) {
  const int n = p.size();
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    best = std::min(best, point_segment_distance(q, p.vertices[i], p.vertices[(i + 1) % n]));
  }
  return best;
}

bool point_in_polygon(std::span<const Point2> ring, Point2 q) {
  const size_t n = ring.size();
  bool inside = false;
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2& a = ring[i];
    const Point2& b = ring[j];
    if ((a.y > q.y) != (b.y > q.y) &&
        q.x < (b.x - a.x) * (q.y - a.y) / (b.y - a.y) + a.x) {
      inside = !inside;
    }
  }
  return inside;
}

Contour resample_uniform(const Polygon& p, int n, Point2 start) {
  if (n < 3) throw Error(Errc::config_error, "resample_uniform needs n >= 3");
  const int nv = p.size();
  const std::vector<double> cum = cumulative_lengths(p);

  // Locate the start point on the boundary.
  double best_d = std::numeric_limits<double>::infinity();
  double start_s = 0.0;
  for (int i = 0; i < nv; ++i) {
    const Point2& a = p.vertices[i];
    const Point2& b = p.vertices[(i + 1) % nv];
    const Point2 ab = b - a;
    const double t = std::clamp(dot(start - a, ab) / dot(ab, ab), 0.0, 1.0);
    const double d = dist(start, a + t * ab);
    if (d < best_d) {
      best_d = d;
      start_s = cum[i] + t * (cum[i + 1] - cum[i]);
    }
  }
  if (best_d > 1e-6) {
    throw Error(Errc::start_off_boundary, "resample start point is off the boundary");
  }

  const double total = cum[nv];
  const double step = total / n;
  Contour out;
  out.vertices.reserve(n);
  for (int i = 0; i < n; ++i) {
    out.vertices.push_back(point_at_arclength(p, cum, start_s + i * step));
  }
  return out;
}

BoundaryHit ray_boundary_hit(const Polygon& p, Point2 center, double angle, RayPick pick) {
  const int n = p.size();
  const Point2 d{std::cos(angle), std::sin(angle)};
  BoundaryHit best;
  bool found = false;
  for (int i = 0; i < n; ++i) {
    const Point2& a = p.vertices[i];
    const Point2& b = p.vertices[(i + 1) % n];
    const Point2 e = b - a;
    const double denom = cross(d, e);
    if (std::abs(denom) < 1e-15) continue;  // parallel; endpoints caught by neighbours
    const Point2 w = a - center;
    const double t = cross(w, e) / denom;
    const double u = cross(w, d) / denom;
    if (t <= 1e-12 || u < -1e-12 || u > 1.0 + 1e-12) continue;
    const double uc = std::clamp(u, 0.0, 1.0);
    const bool better = !found || (pick == RayPick::farthest ? t > best.ray_t : t < best.ray_t);
    if (better) {
      best.point = a + uc * e;
      best.edge = i;
      best.edge_t = uc;
      best.ray_t = t;
      found = true;
    }
  }
  if (!found) {
    throw Error(Errc::no_intersection, "ray from center does not cross the boundary");
  }
  return best;
}

Point2 ray_boundary_intersection(const Polygon& p, Point2 center, double angle, RayPick pick) {
  return ray_boundary_hit(p, center, angle, pick).point;
}

namespace {

// Recursive RDP over the vertex index chain [first..last] (indices into p,
// where `last` may be p.size() meaning the wrap back to vertex 0).
void dp_recurse(const std::vector<Point2>& v, int first, int last, double eps,
                std::vector<int>& keep) {
  if (last - first < 2) return;
  const int n = static_cast<int>(v.size());
  const Point2& a = v[first % n];
  const Point2& b = v[last % n];
  double worst = -1.0;
  int split = -1;
  for (int i = first + 1; i < last; ++i) {
    const double d = point_segment_distance(v[i % n], a, b);
    if (d > worst) {
      worst = d;
      split = i;
    }
  }
  if (worst <= eps) return;  // drop all interior points of this chain
  dp_recurse(v, first, split, eps, keep);
  keep.push_back(split % n);
  dp_recurse(v, split, last, eps, keep);
}

}  // namespace

std::vector<int> douglas_peucker_indices(const Polygon& p, double eps) {
  if (eps <= 0) throw Error(Errc::config_error, "douglas_peucker needs eps > 0");
  const std::vector<Point2>& v = p.vertices;
  const int n = p.size();

  // Anchor the closed ring at vertex 0 and the vertex farthest from it.
  int far = 1;
  double far_d = -1.0;
  for (int i = 1; i < n; ++i) {
    const double d = dist_sq(v[0], v[i]);
    if (d > far_d) {
      far_d = d;
      far = i;
    }
  }

  std::vector<int> keep{0};
  dp_recurse(v, 0, far, eps, keep);
  keep.push_back(far);
  dp_recurse(v, far, n, eps, keep);  // wraps back to vertex 0

  if (static_cast<int>(keep.size()) < 3) {
    // Fall back to 3 extreme vertices: the two anchors plus the vertex
    // farthest from the segment between them.
    int third = -1;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
      if (i == 0 || i == far) continue;
      const double d = point_segment_distance(v[i], v[0], v[far]);
      if (d > best) {
        best = d;
        third = i;
      }
    }
    keep = {0, far};
    if (third >= 0) keep.push_back(third);
    std::sort(keep.begin(), keep.end());
  }
  return keep;
}

std::vector<Point2> douglas_peucker(const Polygon& p, double eps) {
  const std::vector<int> idx = douglas_peucker_indices(p, eps);
  std::vector<Point2> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(p.vertices[i]);
  return out;
}

std::vector<Point2> interpolate_subsegments(const Contour& c, int k) {
  if (k < 1) throw Error(Errc::config_error, "interpolate_subsegments needs k >= 1");
  const int n = c.size();
  std::vector<Point2> out;
  out.reserve(static_cast<size_t>(n) * k);
  for (int i = 0; i < n; ++i) {
    const Point2& a = c.vertices[i];
    const Point2& b = c.vertices[(i + 1) % n];
    for (int j = 0; j < k; ++j) {
      const double t = static_cast<double>(j) / k;
      out.push_back(a + t * (b - a));
    }
  }
  return out;
}

MaskGrid rasterize(std::span<const Point2> ring, int height, int width) {
  if (height < 1 || width < 1) throw Error(Errc::config_error, "rasterize needs h, w >= 1");
  MaskGrid m = make_mask(height, width);
  const size_t n = ring.size();
  if (n < 3) return m;

  std::vector<double> xs;
  for (int r = 0; r < height; ++r) {
    const double y = r + 0.5;
    xs.clear();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
      const Point2& a = ring[i];
      const Point2& b = ring[j];
      if ((a.y > y) != (b.y > y)) {
        xs.push_back((b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x);
      }
    }
    if (xs.empty()) continue;
    std::sort(xs.begin(), xs.end());
    // Pixel center is inside iff an odd number of crossings lies strictly
    // to its right (same convention as the even-odd point test).
    size_t idx = 0;
    for (int c = 0; c < width; ++c) {
      const double cx = c + 0.5;
      while (idx < xs.size() && xs[idx] <= cx) ++idx;
      if ((xs.size() - idx) % 2 == 1) m.set(r, c, true);
    }
  }
  return m;
}

MaskGrid rasterize(const Polygon& p, int height, int width) {
  return rasterize(std::span<const Point2>(p.vertices), height, width);
}

double mask_iou(const MaskGrid& a, const MaskGrid& b) {
  if (a.height != b.height || a.width != b.width) {
    throw Error(Errc::dimension_mismatch, "mask_iou dimensions differ");
  }
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) {
    inter += a.bits[i] & b.bits[i];
    uni += a.bits[i] | b.bits[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

MaskGrid erode(const MaskGrid& m, int d) {
  // d iterations of 3x3 erosion == erosion by a Chebyshev ball of radius d.
  MaskGrid cur = m;
  for (int it = 0; it < d; ++it) {
    MaskGrid next = make_mask(m.height, m.width);
    for (int r = 0; r < m.height; ++r) {
      for (int c = 0; c < m.width; ++c) {
        if (!cur.at(r, c)) continue;
        bool keep = true;
        for (int dr = -1; dr <= 1 && keep; ++dr) {
          for (int dc = -1; dc <= 1 && keep; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= m.height || cc < 0 || cc >= m.width || !cur.at(rr, cc)) {
              keep = false;
            }
          }
        }
        if (keep) next.set(r, c, true);
      }
    }
    cur = std::move(next);
  }
  return cur;
}

double boundary_iou(const MaskGrid& a, const MaskGrid& b, int d) {
  if (a.height != b.height || a.width != b.width) {
    throw Error(Errc::dimension_mismatch, "boundary_iou dimensions differ");
  }
  if (d < 1) throw Error(Errc::config_error, "boundary_iou needs d >= 1");
  const MaskGrid ea = erode(a, d);
  const MaskGrid eb = erode(b, d);
  MaskGrid band_a = make_mask(a.height, a.width);
  MaskGrid band_b = make_mask(a.height, a.width);
  for (size_t i = 0; i < a.bits.size(); ++i) {
    band_a.bits[i] = a.bits[i] & static_cast<uint8_t>(1 - ea.bits[i]);
    band_b.bits[i] = b.bits[i] & static_cast<uint8_t>(1 - eb.bits[i]);
  }
  return mask_iou(band_a, band_b);
}

}  // namespace e2ec
