#pragma once

// Vector rendering of ground-truth polygons, predicted stage contours and
// per-vertex deformation paths.

#include <string>
#include <vector>

#include "e2ec/labeling.hpp"
#include "e2ec/losses.hpp"

namespace e2ec {

struct RenderSpec {
  bool show_initial = false;
  bool show_coarse = false;
  bool show_iter1 = false;
  bool show_final = true;
  bool draw_paths = false;  // segments from stage-k vertex i to stage-(k+1) vertex i
  double scale = 4.0;       // output px per image px
  std::string gt_color = "#888888";
  std::string initial_color = "#1f77b4";
  std::string coarse_color = "#ff7f0e";
  std::string iter1_color = "#2ca02c";
  std::string final_color = "#d62728";
  std::string path_color = "#444444";
};

void validate(const RenderSpec& spec);

/// One <g> element per selected stage plus a ground-truth group; optional
/// deformation-path groups between consecutive selected stages (zero-length
/// segments omitted). `config_note` is embedded in a <desc> element.
std::string render_stages_svg(const Polygon& gt, const ContourStages& stages,
                              const RenderSpec& spec, int image_h, int image_w,
                              const std::string& config_note);

/// Side-by-side panels of the label sampling for several alignment counts,
/// with center, rays and fixed vertices marked.
std::string render_mda_panels_svg(const Polygon& polygon, const MDAConfig& base,
                                  const std::vector<int>& m_values, int image_h, int image_w,
                                  double scale, const std::string& config_note);

}  // namespace e2ec
