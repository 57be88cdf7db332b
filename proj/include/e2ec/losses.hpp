#pragma once

// Training losses with analytic gradients w.r.t. the predicted vertices:
// fixed-pairing smooth-L1, the two dynamic-matching components, a chamfer
// baseline and the weighted overall objective.
//
// Matching is non-differentiable; assignments are always computed from the
// pre-deformation contour (pred_in) and treated as constants, so gradients
// flow only into the penalized contour (pred_out).

#include <span>
#include <vector>

#include "e2ec/geometry.hpp"
#include "e2ec/labeling.hpp"

namespace e2ec {

struct MatchAssignment {
  std::vector<int> pred_to_interp;  // per predicted vertex: nearest gt_interp index
  std::vector<int> key_to_pred;     // per key vertex: nearest predicted-vertex index
};

struct LossConfig {
  double alpha = 0.1;          // weight of the initial-contour loss
  double beta = 0.1;           // weight of the coarse-contour loss
  double smooth_l1_delta = 1;  // quadratic/linear transition in px
};

/// Scalar loss plus its gradient per predicted vertex.
struct LossValue {
  double value = 0;
  std::vector<Point2> grad;
  // Discrete decisions taken while evaluating (assignment indices, kink-side
  // flags). Finite-difference checks compare these across probes to reject
  // samples that straddle a non-smooth boundary.
  std::vector<int32_t> signature;
};

LossValue smooth_l1_contour(const Contour& pred, const Contour& gt, double delta = 1.0);

std::vector<int> match_pred_to_interp(const Contour& pred_in, std::span<const Point2> gt_interp);
std::vector<int> match_key_to_pred(const Contour& pred_in, std::span<const Point2> gt_keys);

LossValue loss_pull_to_boundary(const Contour& pred_out, std::span<const Point2> gt_interp,
                                const std::vector<int>& assign);
LossValue loss_pull_keys(const Contour& pred_out, std::span<const Point2> gt_keys,
                         const std::vector<int>& assign);

MatchAssignment dml_assignment(const Contour& pred_in, const LabeledInstance& label);

/// (pull-to-boundary + pull-keys) / 2 with both assignments taken from
/// pred_in and held constant; gradient w.r.t. pred_out only.
LossValue dynamic_matching_loss(const Contour& pred_in, const Contour& pred_out,
                                const LabeledInstance& label);

/// Symmetric nearest-neighbour L2 loss (order-insensitive baseline).
LossValue chamfer_loss(const Contour& pred, const Contour& gt);

enum class FinalLossKind { dml, smooth_l1, chamfer };

struct ContourStages {
  Contour initial;
  Contour coarse;
  Contour iter1;
  Contour iter2;
};

struct LossBreakdown {
  double l_init = 0;
  double l_coarse = 0;
  double l_iter1 = 0;
  double l_iter2 = 0;
  double l_overall = 0;  // alpha*l_init + beta*l_coarse + l_iter1 + l_iter2
  // d l_overall / d vertex, per stage (loss weights included).
  std::vector<Point2> g_init, g_coarse, g_iter1, g_iter2;
  std::vector<int32_t> signature;
};

/// Stage losses: smooth L1 against the label contour for initial, coarse and
/// iter1; the final stage is supervised by `final_kind` (dynamic matching by
/// default, with iter1 as the matching contour).
LossBreakdown overall_loss(const ContourStages& stages, const LabeledInstance& label,
                           const LossConfig& cfg, FinalLossKind final_kind = FinalLossKind::dml);

}  // namespace e2ec
