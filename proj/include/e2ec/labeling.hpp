#pragma once

// Per-instance training labels: the multi-direction-aligned N-vertex
// ground-truth contour, interpolated boundary points and key vertices.

#include <vector>

#include "e2ec/geometry.hpp"

namespace e2ec {

struct MDAConfig {
  int n_vertices = 128;    // N
  int m_aligned = 4;       // M; 0 and N are legal degenerate modes
  double start_angle = 0;  // radians, direction of the first fixed vertex
  int subsegments = 10;    // k, sub-segments per contour edge
  double dp_eps = 0;       // simplification tolerance in px; <= 0 selects
                           // 0.01 * max(bbox width, bbox height)
  bool dp_on_raw = true;   // key vertices from the raw polygon (vs sampled contour)
  RayPick ray_pick = RayPick::farthest;
};

void validate(const MDAConfig& cfg);

double default_dp_eps(const Polygon& p);

struct LabeledInstance {
  Polygon raw_polygon;  // CCW-normalized annotation boundary
  Point2 center;
  Contour gt_contour;             // N vertices, MDA-sampled
  std::vector<Point2> gt_interp;  // k*N interpolated boundary points
  std::vector<Point2> gt_keys;    // key vertices from simplification
  int n_key = 0;
};

/// Bounding-box center if it lies strictly inside, else the area centroid.
/// Throws CenterOutside when both fall outside the polygon.
Point2 compute_center(const Polygon& p);

/// Area centroid of a simple polygon.
Point2 polygon_centroid(const Polygon& p);

/// Indices of the direction-fixed contour vertices: {0, N/M, 2N/M, ...} for
/// M > 0, empty for M == 0.
std::vector<int> mda_fixed_indices(const MDAConfig& cfg);

/// Multi-direction-aligned sampling. Fixed vertices sit on rays from the
/// center at start_angle + 2*pi*j/M; the vertices between consecutive fixed
/// vertices are uniform in arc length along the boundary segment connecting
/// them. M == 0 degrades to plain uniform resampling from the start-angle
/// ray hit; M == N makes every vertex a ray hit (polar sampling).
Contour mda_sample(const Polygon& p, Point2 center, const MDAConfig& cfg);

/// Full label assembly: center, MDA contour, interpolated points, key
/// vertices. The input polygon is CCW-normalized first.
LabeledInstance build_label(const Polygon& p, const MDAConfig& cfg);

}  // namespace e2ec
