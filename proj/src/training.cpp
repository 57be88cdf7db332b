#include "e2ec/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

namespace e2ec {

const char* to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::blob: return "blob";
    case ShapeFamily::star: return "star";
    case ShapeFamily::rect: return "rect";
    case ShapeFamily::ellipse: return "ellipse";
  }
  return "blob";
}

ShapeFamily shape_family_from_string(const std::string& s) {
  if (s == "blob") return ShapeFamily::blob;
  if (s == "star") return ShapeFamily::star;
  if (s == "rect") return ShapeFamily::rect;
  if (s == "ellipse") return ShapeFamily::ellipse;
  throw Error(Errc::config_error, "unknown shape family: " + s);
}

namespace {

bool segments_properly_intersect(Point2 a, Point2 b, Point2 c, Point2 d) {
  const double d1 = cross(b - a, c - a);
  const double d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c);
  const double d4 = cross(d - c, b - c);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

}  // namespace

bool polygon_self_intersects(const Polygon& p) {
  const int n = p.size();
  for (int i = 0; i < n; ++i) {
    const Point2 a = p.vertices[i];
    const Point2 b = p.vertices[(i + 1) % n];
    for (int j = i + 1; j < n; ++j) {
      if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;  // shared endpoint
      const Point2 c = p.vertices[j];
      const Point2 d = p.vertices[(j + 1) % n];
      if (segments_properly_intersect(a, b, c, d)) return true;
    }
  }
  return false;
}

namespace {

Polygon radial_polygon(Point2 center, const std::vector<double>& radii, double angle0) {
  Polygon p;
  const int n = static_cast<int>(radii.size());
  p.vertices.resize(n);
  for (int i = 0; i < n; ++i) {
    const double a = angle0 + 2.0 * std::numbers::pi * i / n;
    p.vertices[i] = center + Point2{radii[i] * std::cos(a), radii[i] * std::sin(a)};
  }
  return p;
}

Polygon draw_polygon(const SynthConfig& cfg, std::mt19937_64& rng) {
  const double size = std::min(cfg.image_h, cfg.image_w);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  const Point2 center{cfg.image_w * uni(0.40, 0.60), cfg.image_h * uni(0.40, 0.60)};
  const double max_r = 0.36 * size;

  switch (cfg.family) {
    case ShapeFamily::blob: {
      const int nv = std::max(12, cfg.vertex_budget);
      const double base = uni(0.16, 0.30) * size;
      double amp[5], phase[5];
      for (int j = 0; j < 5; ++j) {
        amp[j] = base * uni(0.0, 0.22) / (1.0 + 0.5 * j);
        phase[j] = uni(0.0, 2.0 * std::numbers::pi);
      }
      std::vector<double> radii(nv);
      for (int i = 0; i < nv; ++i) {
        const double th = 2.0 * std::numbers::pi * i / nv;
        double r = base;
        for (int j = 0; j < 5; ++j) r += amp[j] * std::cos((j + 2) * th + phase[j]);
        radii[i] = std::clamp(r, 0.35 * base, max_r);
      }
      return radial_polygon(center, radii, uni(0.0, 2.0 * std::numbers::pi));
    }
    case ShapeFamily::star: {
      std::uniform_int_distribution<int> spikes_d(5, 9);
      const int spikes = spikes_d(rng);
      const double outer = uni(0.20, 0.32) * size;
      const double inner_ratio = uni(0.40, 0.60);
      std::vector<double> radii(2 * spikes);
      for (int i = 0; i < 2 * spikes; ++i) {
        const double r = (i % 2 == 0) ? outer : outer * inner_ratio;
        radii[i] = std::clamp(r * uni(0.92, 1.08), 0.05 * size, max_r);
      }
      return radial_polygon(center, radii, uni(0.0, 2.0 * std::numbers::pi));
    }
    case ShapeFamily::rect: {
      const double hw = uni(0.12, 0.30) * size;
      const double hh = uni(0.12, 0.30) * size;
      const double rot = uni(0.0, std::numbers::pi / 2);
      const double c = std::cos(rot), s = std::sin(rot);
      Polygon p;
      for (const auto& [dx, dy] : {std::pair{-hw, -hh}, {hw, -hh}, {hw, hh}, {-hw, hh}}) {
        p.vertices.push_back(center + Point2{dx * c - dy * s, dx * s + dy * c});
      }
      return p;
    }
    case ShapeFamily::ellipse: {
      const int nv = std::max(12, cfg.vertex_budget);
      const double a = uni(0.14, 0.32) * size;
      const double b = uni(0.10, 0.26) * size;
      const double rot = uni(0.0, std::numbers::pi);
      const double cr = std::cos(rot), sr = std::sin(rot);
      Polygon p;
      p.vertices.resize(nv);
      for (int i = 0; i < nv; ++i) {
        const double th = 2.0 * std::numbers::pi * i / nv;
        const double ex = a * std::cos(th), ey = b * std::sin(th);
        p.vertices[i] = center + Point2{ex * cr - ey * sr, ex * sr + ey * cr};
      }
      return p;
    }
  }
  throw Error(Errc::config_error, "unreachable shape family");
}

bool inside_image(const Polygon& p, const SynthConfig& cfg) {
  for (const Point2& v : p.vertices) {
    if (v.x < 1.0 || v.y < 1.0 || v.x > cfg.image_w - 1.0 || v.y > cfg.image_h - 1.0) return false;
  }
  return true;
}

}  // namespace

std::vector<Instance> generate_dataset(const SynthConfig& cfg, const MDAConfig& mda) {
  validate(mda);
  std::mt19937_64 rng(cfg.seed);
  std::vector<Instance> out;
  out.reserve(cfg.n_instances);
  for (int id = 0; id < cfg.n_instances; ++id) {
    bool ok = false;
    for (int attempt = 0; attempt < cfg.max_rejects; ++attempt) {
      Polygon p = draw_polygon(cfg, rng);
      if (!is_valid_polygon(p) || !inside_image(p, cfg) || polygon_self_intersects(p)) continue;
      try {
        Instance inst;
        inst.id = id;
        inst.family = cfg.family;
        inst.label = build_label(p, mda);
        inst.polygon = inst.label.raw_polygon;
        out.push_back(std::move(inst));
        ok = true;
        break;
      } catch (const Error&) {
        continue;  // CenterOutside etc.: resample
      }
    }
    if (!ok) {
      throw Error(Errc::generation_exhausted,
                  "could not generate instance " + std::to_string(id) + " after " +
                      std::to_string(cfg.max_rejects) + " attempts");
    }
  }
  return out;
}

std::vector<Instance> relabel(const std::vector<Instance>& data, const MDAConfig& mda) {
  std::vector<Instance> out = data;
  for (Instance& inst : out) inst.label = build_label(inst.polygon, mda);
  return out;
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  double lr = cfg.learning_rate;
  for (int m : cfg.lr_milestones) {
    if (epoch >= m) lr *= cfg.lr_decay;
  }
  return lr;
}

TrainState make_train_state(const std::vector<Instance>& data, const TrainConfig& cfg) {
  TrainState st;
  ModelConfig mc = cfg.model;
  mc.n_vertices = cfg.mda.n_vertices;
  st.params = make_params(mc);
  st.grids.reserve(data.size());
  st.instance_ids.reserve(data.size());
  for (const Instance& inst : data) {
    st.grids.push_back(make_grid(mc, cfg.grid_seed + 0x9e3779b97f4a7c15ULL * (inst.id + 1)));
    st.instance_ids.push_back(inst.id);
  }
  return st;
}

namespace {

// Adam / plain gradient descent over a flat list of tensors.
struct Optimizer {
  const TrainConfig* cfg = nullptr;
  int64_t step = 0;
  std::vector<std::vector<double>> m, v;  // adam moments, one pair per tensor slot

  void ensure_slots(size_t n_slots, const std::vector<size_t>& sizes) {
    if (cfg->optimizer != OptimizerKind::adam || !m.empty()) return;
    m.resize(n_slots);
    v.resize(n_slots);
    for (size_t i = 0; i < n_slots; ++i) {
      m[i].assign(sizes[i], 0.0);
      v[i].assign(sizes[i], 0.0);
    }
  }

  void apply(size_t slot, double* theta, const double* grad, size_t size, double lr) {
    if (cfg->optimizer == OptimizerKind::gd) {
      for (size_t k = 0; k < size; ++k) theta[k] -= lr * grad[k];
      return;
    }
    const double b1 = cfg->adam_beta1, b2 = cfg->adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
    std::vector<double>& ms = m[slot];
    std::vector<double>& vs = v[slot];
    for (size_t k = 0; k < size; ++k) {
      ms[k] = b1 * ms[k] + (1 - b1) * grad[k];
      vs[k] = b2 * vs[k] + (1 - b2) * grad[k] * grad[k];
      theta[k] -= lr * (ms[k] / bc1) / (std::sqrt(vs[k] / bc2) + cfg->adam_eps);
    }
  }
};

MaskGrid stage_mask(const Contour& c, int h, int w) {
  return rasterize(std::span<const Point2>(c.vertices), h, w);
}

}  // namespace

TrainResult train(const std::vector<Instance>& data, const TrainConfig& cfg) {
  if (data.empty()) throw Error(Errc::config_error, "train on empty dataset");
  if (cfg.epochs < 0) throw Error(Errc::config_error, "negative epoch count");
  for (const Instance& inst : data) {
    if (inst.label.gt_contour.size() != cfg.mda.n_vertices) {
      throw Error(Errc::config_error, "instance labels do not match the configured N");
    }
  }
  TrainResult res;
  res.state = make_train_state(data, cfg);
  ModelParams& params = res.state.params;
  const int n_inst = static_cast<int>(data.size());
  const int batch = std::max(1, cfg.batch_size);

  // Optimizer slots: shared tensors first, then one slot per instance grid.
  std::vector<TensorRef> shared = tensor_refs(params);
  std::vector<size_t> slot_sizes;
  for (const TensorRef& t : shared) slot_sizes.push_back(t.size);
  for (const FeatureGrid& g : res.state.grids) slot_sizes.push_back(g.values.size());
  Optimizer opt;
  opt.cfg = &cfg;
  opt.ensure_slots(slot_sizes.size(), slot_sizes);

  // Cached ground-truth masks for the per-epoch IoU columns.
  std::vector<MaskGrid> gt_masks;
  gt_masks.reserve(data.size());
  for (const Instance& inst : data) {
    gt_masks.push_back(rasterize(inst.polygon, cfg.model.image_h, cfg.model.image_w));
  }

  std::vector<std::vector<double>> shared_sum(shared.size());
  for (size_t t = 0; t < shared.size(); ++t) shared_sum[t].assign(shared[t].size, 0.0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    double sum_init = 0, sum_coarse = 0, sum_iter1 = 0, sum_iter2 = 0, sum_overall = 0;

    for (int first = 0; first < n_inst; first += batch) {
      const int last = std::min(first + batch, n_inst);
      const int bsz = last - first;
      for (auto& buf : shared_sum) std::fill(buf.begin(), buf.end(), 0.0);
      std::vector<std::vector<double>> grid_grads(bsz);

      for (int bi = 0; bi < bsz; ++bi) {
        const int idx = first + bi;
        const Instance& inst = data[idx];
        const ModelOutputs outs = forward(params, res.state.grids[idx], inst.label.center);
        const LossBreakdown lb =
            overall_loss(outs.stages, inst.label, cfg.loss, cfg.final_loss);
        if (!std::isfinite(lb.l_overall) || lb.l_overall > cfg.divergence_threshold) {
          std::ostringstream msg;
          msg << "epoch " << epoch << " instance " << inst.id << " l_overall=" << lb.l_overall
              << " (init=" << lb.l_init << " coarse=" << lb.l_coarse << " iter1=" << lb.l_iter1
              << " iter2=" << lb.l_iter2 << ")";
          throw Error(Errc::divergence_detected, msg.str());
        }
        sum_init += lb.l_init;
        sum_coarse += lb.l_coarse;
        sum_iter1 += lb.l_iter1;
        sum_iter2 += lb.l_iter2;
        sum_overall += lb.l_overall;

        ModelGrads g = make_zero_grads(params, res.state.grids[idx]);
        const StageGrads sg{lb.g_init, lb.g_coarse, lb.g_iter1, lb.g_iter2};
        backward(params, res.state.grids[idx], outs, sg, g);
        std::vector<TensorRef> grefs = tensor_refs(g);
        for (size_t t = 0; t < shared.size(); ++t) {
          for (size_t k = 0; k < shared[t].size; ++k) shared_sum[t][k] += grefs[t].data[k];
        }
        grid_grads[bi] = std::move(g.grid);
      }

      // Batch-mean gradients; instance order inside the batch is fixed.
      const double inv_b = 1.0 / bsz;
      ++opt.step;
      for (size_t t = 0; t < shared.size(); ++t) {
        for (double& x : shared_sum[t]) x *= inv_b;
        opt.apply(t, shared[t].data, shared_sum[t].data(), shared[t].size, lr);
      }
      for (int bi = 0; bi < bsz; ++bi) {
        const int idx = first + bi;
        for (double& x : grid_grads[bi]) x *= inv_b;
        opt.apply(shared.size() + idx, res.state.grids[idx].values.data(), grid_grads[bi].data(),
                  grid_grads[bi].size(), lr);
      }
      ++params.revision;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.l_init = sum_init / n_inst;
    rec.l_coarse = sum_coarse / n_inst;
    rec.l_iter1 = sum_iter1 / n_inst;
    rec.l_iter2 = sum_iter2 / n_inst;
    rec.l_overall = sum_overall / n_inst;
    double iou_i = 0, iou_c = 0, iou_f = 0;
    for (int idx = 0; idx < n_inst; ++idx) {
      const ModelOutputs outs = forward(params, res.state.grids[idx], data[idx].label.center);
      const int h = cfg.model.image_h, w = cfg.model.image_w;
      iou_i += mask_iou(stage_mask(outs.stages.initial, h, w), gt_masks[idx]);
      iou_c += mask_iou(stage_mask(outs.stages.coarse, h, w), gt_masks[idx]);
      iou_f += mask_iou(stage_mask(outs.stages.iter2, h, w), gt_masks[idx]);
    }
    rec.iou_initial = iou_i / n_inst;
    rec.iou_coarse = iou_c / n_inst;
    rec.iou_final = iou_f / n_inst;
    res.history.push_back(rec);
  }
  return res;
}

namespace {

double mean_vertex_l1(const Contour& pred, const Contour& gt) {
  double acc = 0;
  for (int i = 0; i < pred.size(); ++i) acc += norm_l1(pred.vertices[i] - gt.vertices[i]);
  return acc / pred.size();
}

template <typename Fn>
double instances_per_second(int n_instances, Fn&& body) {
  using clock = std::chrono::steady_clock;
  double best = 0;
  for (int rep = 0; rep < 3; ++rep) {
    int iters = 0;
    const auto t0 = clock::now();
    double elapsed = 0;
    do {
      body();
      ++iters;
      elapsed = std::chrono::duration<double>(clock::now() - t0).count();
    } while (elapsed < 0.2);
    best = std::max(best, iters * static_cast<double>(n_instances) / elapsed);
  }
  return best;
}

}  // namespace

EvalReport evaluate(const TrainState& state, const std::vector<Instance>& data,
                    bool measure_throughput) {
  if (data.size() != state.grids.size()) {
    throw Error(Errc::dimension_mismatch, "evaluate: dataset and grid counts differ");
  }
  EvalReport rep;
  rep.n_instances = static_cast<int>(data.size());
  const ModelConfig& mc = state.params.cfg;
  const int h = mc.image_h, w = mc.image_w;

  for (size_t i = 0; i < data.size(); ++i) {
    const Instance& inst = data[i];
    const ModelOutputs outs = forward(state.params, state.grids[i], inst.label.center);
    const MaskGrid gt = rasterize(inst.polygon, h, w);
    const Contour* stages[3] = {&outs.stages.initial, &outs.stages.coarse, &outs.stages.iter2};
    StageEval* slots[3] = {&rep.initial, &rep.coarse, &rep.final_stage};
    for (int s = 0; s < 3; ++s) {
      const MaskGrid pm = stage_mask(*stages[s], h, w);
      slots[s]->vertex_l1 += mean_vertex_l1(*stages[s], inst.label.gt_contour);
      slots[s]->mask_iou += mask_iou(pm, gt);
      slots[s]->boundary_iou_d1 += boundary_iou(pm, gt, 1);
      slots[s]->boundary_iou_d2 += boundary_iou(pm, gt, 2);
    }
  }
  for (StageEval* s : {&rep.initial, &rep.coarse, &rep.final_stage}) {
    s->vertex_l1 /= rep.n_instances;
    s->mask_iou /= rep.n_instances;
    s->boundary_iou_d1 /= rep.n_instances;
    s->boundary_iou_d2 /= rep.n_instances;
  }

  if (measure_throughput) {
    rep.initial.instances_per_s = instances_per_second(rep.n_instances, [&] {
      for (size_t i = 0; i < data.size(); ++i) {
        init_contour(data[i].label.center, state.params, state.grids[i]);
      }
    });
    rep.coarse.instances_per_s = instances_per_second(rep.n_instances, [&] {
      for (size_t i = 0; i < data.size(); ++i) {
        const Contour init = init_contour(data[i].label.center, state.params, state.grids[i]);
        if (mc.use_global_deform) {
          global_deform(init, data[i].label.center, state.params, state.grids[i]);
        }
      }
    });
    rep.final_stage.instances_per_s = instances_per_second(rep.n_instances, [&] {
      for (size_t i = 0; i < data.size(); ++i) {
        forward(state.params, state.grids[i], data[i].label.center);
      }
    });
  }
  return rep;
}

std::vector<AblationRow> run_ablation(AblationSuite suite, const SynthConfig& synth,
                                      const TrainConfig& base) {
  struct Variant {
    std::string name;
    TrainConfig cfg;
  };
  std::vector<Variant> variants;
  switch (suite) {
    case AblationSuite::loss: {
      for (const auto& [name, kind] :
           {std::pair<std::string, FinalLossKind>{"smooth_l1", FinalLossKind::smooth_l1},
            {"chamfer", FinalLossKind::chamfer},
            {"dml", FinalLossKind::dml}}) {
        TrainConfig c = base;
        c.final_loss = kind;
        variants.push_back({name, c});
      }
      break;
    }
    case AblationSuite::alignment_m: {
      for (int m : {1, 2, 4, 8}) {
        TrainConfig c = base;
        c.final_loss = FinalLossKind::smooth_l1;
        c.mda.m_aligned = m;
        variants.push_back({"m" + std::to_string(m), c});
      }
      break;
    }
    case AblationSuite::components: {
      TrainConfig baseline = base;
      baseline.model.learned_init = false;
      baseline.model.use_global_deform = false;
      baseline.mda.m_aligned = 0;
      baseline.final_loss = FinalLossKind::smooth_l1;
      variants.push_back({"baseline", baseline});
      TrainConfig arch = base;
      arch.mda.m_aligned = 0;
      arch.final_loss = FinalLossKind::smooth_l1;
      variants.push_back({"arch", arch});
      TrainConfig mda_cfg = base;
      mda_cfg.final_loss = FinalLossKind::smooth_l1;
      variants.push_back({"arch+mda", mda_cfg});
      variants.push_back({"arch+mda+dml", base});
      break;
    }
  }

  std::vector<AblationRow> rows;
  for (const Variant& v : variants) {
    const std::vector<Instance> data = generate_dataset(synth, v.cfg.mda);
    const TrainResult tr = train(data, v.cfg);
    rows.push_back({v.name, evaluate(tr.state, data, /*measure_throughput=*/false)});
  }
  return rows;
}

}  // namespace e2ec
