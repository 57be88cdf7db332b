#include "e2ec/losses.hpp"

#include <cmath>
#include <limits>

namespace e2ec {

namespace {

inline double smooth_l1(double d, double delta) {
  const double a = std::abs(d);
  return a < delta ? 0.5 * d * d / delta : a - 0.5 * delta;
}

inline double smooth_l1_grad(double d, double delta) {
  if (std::abs(d) < delta) return d / delta;
  return d > 0 ? 1.0 : -1.0;
}

inline int32_t sign_of(double d) { return d > 0 ? 1 : (d < 0 ? -1 : 0); }

}  // namespace

LossValue smooth_l1_contour(const Contour& pred, const Contour& gt, double delta) {
  const int n = pred.size();
  if (n != gt.size()) throw Error(Errc::length_mismatch, "smooth_l1_contour vertex counts differ");
  if (n == 0) throw Error(Errc::length_mismatch, "smooth_l1_contour on empty contours");
  LossValue out;
  out.grad.assign(n, Point2{});
  for (int i = 0; i < n; ++i) {
    const Point2 d = pred.vertices[i] - gt.vertices[i];
    out.value += smooth_l1(d.x, delta) + smooth_l1(d.y, delta);
    out.grad[i] = {smooth_l1_grad(d.x, delta) / n, smooth_l1_grad(d.y, delta) / n};
    // 0 in the quadratic regime, +-1 on the linear branches.
    out.signature.push_back(std::abs(d.x) < delta ? 0 : sign_of(d.x));
    out.signature.push_back(std::abs(d.y) < delta ? 0 : sign_of(d.y));
  }
  out.value /= n;
  return out;
}

namespace {

std::vector<int> nearest_indices(std::span<const Point2> queries, std::span<const Point2> candidates) {
  std::vector<int> out(queries.size(), 0);
  for (size_t i = 0; i < queries.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_j = 0;
    for (size_t j = 0; j < candidates.size(); ++j) {
      const double d = dist_sq(queries[i], candidates[j]);
      if (d < best) {  // strict: ties keep the lowest index
        best = d;
        best_j = static_cast<int>(j);
      }
    }
    out[i] = best_j;
  }
  return out;
}

}  // namespace

std::vector<int> match_pred_to_interp(const Contour& pred_in, std::span<const Point2> gt_interp) {
  if (gt_interp.empty()) throw Error(Errc::config_error, "match_pred_to_interp: empty candidates");
  return nearest_indices(pred_in.vertices, gt_interp);
}

std::vector<int> match_key_to_pred(const Contour& pred_in, std::span<const Point2> gt_keys) {
  if (gt_keys.empty()) throw Error(Errc::config_error, "match_key_to_pred: empty keys");
  return nearest_indices(gt_keys, pred_in.vertices);
}

LossValue loss_pull_to_boundary(const Contour& pred_out, std::span<const Point2> gt_interp,
                                const std::vector<int>& assign) {
  const int n = pred_out.size();
  if (static_cast<int>(assign.size()) != n) {
    throw Error(Errc::length_mismatch, "pull_to_boundary assignment size differs from contour");
  }
  LossValue out;
  out.grad.assign(n, Point2{});
  for (int i = 0; i < n; ++i) {
    const int j = assign[i];
    if (j < 0 || j >= static_cast<int>(gt_interp.size())) {
      throw Error(Errc::index_out_of_range, "pull_to_boundary assignment index");
    }
    const Point2 d = pred_out.vertices[i] - gt_interp[j];
    out.value += norm_l1(d);
    out.grad[i] = {static_cast<double>(sign_of(d.x)) / n, static_cast<double>(sign_of(d.y)) / n};
    out.signature.push_back(j);
    out.signature.push_back(sign_of(d.x));
    out.signature.push_back(sign_of(d.y));
  }
  out.value /= n;
  return out;
}

LossValue loss_pull_keys(const Contour& pred_out, std::span<const Point2> gt_keys,
                         const std::vector<int>& assign) {
  const int n_key = static_cast<int>(gt_keys.size());
  if (static_cast<int>(assign.size()) != n_key) {
    throw Error(Errc::length_mismatch, "pull_keys assignment size differs from key count");
  }
  LossValue out;
  out.grad.assign(pred_out.size(), Point2{});
  for (int i = 0; i < n_key; ++i) {
    const int j = assign[i];
    if (j < 0 || j >= pred_out.size()) {
      throw Error(Errc::index_out_of_range, "pull_keys assignment index");
    }
    const Point2 d = pred_out.vertices[j] - gt_keys[i];
    out.value += norm_l1(d);
    // Several keys may share one predicted vertex; contributions accumulate.
    out.grad[j].x += static_cast<double>(sign_of(d.x)) / n_key;
    out.grad[j].y += static_cast<double>(sign_of(d.y)) / n_key;
    out.signature.push_back(j);
    out.signature.push_back(sign_of(d.x));
    out.signature.push_back(sign_of(d.y));
  }
  out.value /= n_key;
  return out;
}

MatchAssignment dml_assignment(const Contour& pred_in, const LabeledInstance& label) {
  MatchAssignment a;
  a.pred_to_interp = match_pred_to_interp(pred_in, label.gt_interp);
  a.key_to_pred = match_key_to_pred(pred_in, label.gt_keys);
  return a;
}

LossValue dynamic_matching_loss(const Contour& pred_in, const Contour& pred_out,
                                const LabeledInstance& label) {
  if (pred_in.size() != pred_out.size()) {
    throw Error(Errc::length_mismatch, "dynamic_matching_loss contour sizes differ");
  }
  const MatchAssignment a = dml_assignment(pred_in, label);
  const LossValue l1 = loss_pull_to_boundary(pred_out, label.gt_interp, a.pred_to_interp);
  const LossValue l2 = loss_pull_keys(pred_out, label.gt_keys, a.key_to_pred);
  LossValue out;
  out.value = 0.5 * (l1.value + l2.value);
  out.grad.assign(pred_out.size(), Point2{});
  for (int i = 0; i < pred_out.size(); ++i) {
    out.grad[i] = 0.5 * (l1.grad[i] + l2.grad[i]);
  }
  out.signature = l1.signature;
  out.signature.insert(out.signature.end(), l2.signature.begin(), l2.signature.end());
  return out;
}

LossValue chamfer_loss(const Contour& pred, const Contour& gt) {
  const int np = pred.size();
  const int ng = gt.size();
  if (np == 0 || ng == 0) throw Error(Errc::length_mismatch, "chamfer_loss on empty point set");
  LossValue out;
  out.grad.assign(np, Point2{});

  for (int i = 0; i < np; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_j = 0;
    for (int j = 0; j < ng; ++j) {
      const double d = dist_sq(pred.vertices[i], gt.vertices[j]);
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    const double dn = std::sqrt(best);
    out.value += dn / np;
    if (dn > 0) {
      out.grad[i] = out.grad[i] + (1.0 / (dn * np)) * (pred.vertices[i] - gt.vertices[best_j]);
    }
    out.signature.push_back(best_j);
  }
  for (int j = 0; j < ng; ++j) {
    double best = std::numeric_limits<double>::infinity();
    int best_i = 0;
    for (int i = 0; i < np; ++i) {
      const double d = dist_sq(gt.vertices[j], pred.vertices[i]);
      if (d < best) {
        best = d;
        best_i = i;
      }
    }
    const double dn = std::sqrt(best);
    out.value += dn / ng;
    if (dn > 0) {
      out.grad[best_i] = out.grad[best_i] + (1.0 / (dn * ng)) * (pred.vertices[best_i] - gt.vertices[j]);
    }
    out.signature.push_back(best_i);
  }
  return out;
}

LossBreakdown overall_loss(const ContourStages& stages, const LabeledInstance& label,
                           const LossConfig& cfg, FinalLossKind final_kind) {
  const int n = stages.initial.size();
  if (stages.coarse.size() != n || stages.iter1.size() != n || stages.iter2.size() != n) {
    throw Error(Errc::length_mismatch, "overall_loss stages have differing vertex counts");
  }

  const LossValue init = smooth_l1_contour(stages.initial, label.gt_contour, cfg.smooth_l1_delta);
  const LossValue coarse = smooth_l1_contour(stages.coarse, label.gt_contour, cfg.smooth_l1_delta);
  const LossValue iter1 = smooth_l1_contour(stages.iter1, label.gt_contour, cfg.smooth_l1_delta);

  const LossValue iter2 = [&] {
    switch (final_kind) {
      case FinalLossKind::smooth_l1:
        return smooth_l1_contour(stages.iter2, label.gt_contour, cfg.smooth_l1_delta);
      case FinalLossKind::chamfer:
        return chamfer_loss(stages.iter2, label.gt_contour);
      case FinalLossKind::dml:
      default:
        return dynamic_matching_loss(stages.iter1, stages.iter2, label);
    }
  }();

  LossBreakdown out;
  out.l_init = init.value;
  out.l_coarse = coarse.value;
  out.l_iter1 = iter1.value;
  out.l_iter2 = iter2.value;
  out.l_overall = cfg.alpha * init.value + cfg.beta * coarse.value + iter1.value + iter2.value;

  out.g_init.assign(n, Point2{});
  out.g_coarse.assign(n, Point2{});
  out.g_iter1.assign(n, Point2{});
  for (int i = 0; i < n; ++i) {
    out.g_init[i] = cfg.alpha * init.grad[i];
    out.g_coarse[i] = cfg.beta * coarse.grad[i];
    out.g_iter1[i] = iter1.grad[i];
  }
  out.g_iter2 = iter2.grad;

  out.signature = init.signature;
  for (const LossValue* lv : {&coarse, &iter1, &iter2}) {
    out.signature.push_back(-1000000);  // section marker
    out.signature.insert(out.signature.end(), lv->signature.begin(), lv->signature.end());
  }
  return out;
}

}  // namespace e2ec
