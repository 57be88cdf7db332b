#pragma once

// Central finite-difference verification of every analytic gradient: the
// loss functions (w.r.t. predicted vertices) and the full model pipeline
// (w.r.t. every parameter tensor and the feature grid).
//
// A probe is rejected when the discrete decision signature of the pipeline
// changes within +-reject_radius of the probed value, i.e. the sample sits
// too close to a kink or matching-switch boundary for the difference
// quotient to be meaningful.

#include <cstdint>
#include <string>
#include <vector>

#include "e2ec/training.hpp"

namespace e2ec {

struct GradCheckConfig {
  uint64_t seed = 3;
  int n_vertices = 16;
  int channels = 4;
  int grid_hw = 16;
  double step = 1e-5;           // central-difference half step
  double reject_radius = 1e-3;  // kink-proximity rejection radius
  double tol = 1e-4;            // max allowed relative error
};

struct GradCheckItem {
  std::string name;
  int checked = 0;
  int rejected = 0;
  double max_rel_err = 0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckItem> items;
  bool all_pass = false;
  int total_checked = 0;
  int total_rejected = 0;
};

GradCheckReport run_grad_check(const GradCheckConfig& cfg);

}  // namespace e2ec
