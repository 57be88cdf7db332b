#pragma once

// Ordered-polygon primitives: resampling, ray intersection, simplification,
// rasterization and IoU metrics. All functions are pure and thread-safe.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "e2ec/error.hpp"

namespace e2ec {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
inline Point2 operator*(Point2 p, double s) { return {s * p.x, s * p.y}; }
inline bool operator==(Point2 a, Point2 b) { return a.x == b.x && a.y == b.y; }

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 p) { return std::sqrt(p.x * p.x + p.y * p.y); }
inline double norm_l1(Point2 p) { return std::abs(p.x) + std::abs(p.y); }
inline double dist(Point2 a, Point2 b) { return norm(a - b); }
inline double dist_sq(Point2 a, Point2 b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

/// Closed simple polygon; the last vertex implicitly connects to the first.
/// Valid polygons have >= 3 vertices, finite coordinates and consecutive
/// vertices more than 1e-9 px apart (including the closing pair).
struct Polygon {
  std::vector<Point2> vertices;

  int size() const { return static_cast<int>(vertices.size()); }
};

/// Fixed-length model contour. Vertex order is meaningful: vertex i pairs
/// with label vertex i under fixed pairing.
struct Contour {
  std::vector<Point2> vertices;

  int size() const { return static_cast<int>(vertices.size()); }
};

/// Row-major binary occupancy grid.
struct MaskGrid {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> bits;  // height*width entries, 0 or 1

  bool at(int r, int c) const { return bits[static_cast<size_t>(r) * width + c] != 0; }
  void set(int r, int c, bool v) { bits[static_cast<size_t>(r) * width + c] = v ? 1 : 0; }
  int64_t count() const;
};

MaskGrid make_mask(int height, int width);

struct Box {
  double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;

  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
  Point2 center() const { return {0.5 * (min_x + max_x), 0.5 * (min_y + max_y)}; }
  double diagonal() const { return std::sqrt(width() * width() + height() * height()); }
};

Box bounding_box(std::span<const Point2> pts);

bool is_valid_polygon(const Polygon& p);
void require_valid_polygon(const Polygon& p);

/// Shoelace area; positive for counter-clockwise vertex order.
double signed_area(const Polygon& p);

/// Sum of edge lengths including the closing edge.
double polygon_perimeter(const Polygon& p);

/// Cumulative edge lengths, size() + 1 entries, front 0, back == perimeter.
std::vector<double> cumulative_lengths(const Polygon& p);

/// Boundary point at arc length s (wrapped into [0, perimeter)).
Point2 point_at_arclength(const Polygon& p, const std::vector<double>& cum, double s);

/// Returns the polygon with counter-clockwise orientation. Reversal keeps
/// the first vertex first. Throws ZeroArea if |signed area| < 1e-12.
Polygon normalize_orientation(const Polygon& p);

/// Distance from q to segment [a, b].
double point_segment_distance(Point2 q, Point2 a, Point2 b);

/// Distance from q to the nearest boundary edge of p.
double boundary_distance(const Polygon& p, Point2 q);

/// Even-odd point-in-polygon test over an arbitrary closed vertex ring.
bool point_in_polygon(std::span<const Point2> ring, Point2 q);

/// n vertices uniformly spaced by arc length starting at `start`, which must
/// lie on the boundary within 1e-6 px. Follows the polygon's vertex order.
Contour resample_uniform(const Polygon& p, int n, Point2 start);

enum class RayPick { farthest, nearest };

struct BoundaryHit {
  Point2 point;
  int edge = -1;      // index of the edge hit
  double edge_t = 0;  // parameter along that edge in [0, 1]
  double ray_t = 0;   // distance along the ray
};

/// Intersection of the ray from `center` at `angle` with the boundary.
/// With multiple crossings, `pick` selects the farthest (default) or nearest.
/// `center` must be strictly inside; NoIntersection is reported defensively.
BoundaryHit ray_boundary_hit(const Polygon& p, Point2 center, double angle,
                             RayPick pick = RayPick::farthest);
Point2 ray_boundary_intersection(const Polygon& p, Point2 center, double angle,
                                 RayPick pick = RayPick::farthest);

/// Ramer-Douglas-Peucker on the closed ring. Output is an index subsequence
/// (ascending); every dropped vertex lies within eps of the simplified
/// polyline. Falls back to 3 extreme vertices if fewer would remain.
std::vector<int> douglas_peucker_indices(const Polygon& p, double eps);
std::vector<Point2> douglas_peucker(const Polygon& p, double eps);

/// Splits every contour edge (v_i, v_{i+1 mod N}) into k equal sub-segments:
/// emits v_i plus k-1 interior points per edge, k*N points total.
std::vector<Point2> interpolate_subsegments(const Contour& c, int k);

/// Scanline fill: pixel (r, c) is set iff its center (c+0.5, r+0.5) is inside
/// the ring under the even-odd rule. Degenerate rings yield an empty mask.
MaskGrid rasterize(std::span<const Point2> ring, int height, int width);
MaskGrid rasterize(const Polygon& p, int height, int width);

/// |a&b| / |a|b|; 1.0 when both masks are empty.
double mask_iou(const MaskGrid& a, const MaskGrid& b);

/// Morphological erosion by a Chebyshev ball of radius d (out-of-grid pixels
/// count as background).
MaskGrid erode(const MaskGrid& m, int d);

/// IoU of the d-pixel-wide inner boundary bands (mask minus its erosion).
double boundary_iou(const MaskGrid& a, const MaskGrid& b, int d);

}  // namespace e2ec
