#pragma once

// Synthetic polygon datasets, the end-to-end training loop, evaluation
// metrics and the ablation harness.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "e2ec/labeling.hpp"
#include "e2ec/losses.hpp"
#include "e2ec/model.hpp"

namespace e2ec {

enum class ShapeFamily { blob, star, rect, ellipse };

const char* to_string(ShapeFamily f);
ShapeFamily shape_family_from_string(const std::string& s);

struct SynthConfig {
  int n_instances = 200;
  ShapeFamily family = ShapeFamily::blob;
  int image_h = 96;
  int image_w = 96;
  int vertex_budget = 48;  // raw vertices per polygon (families may round)
  uint64_t seed = 0;
  int max_rejects = 1000;  // per instance, before GenerationExhausted
};

struct Instance {
  int id = 0;
  ShapeFamily family = ShapeFamily::blob;
  Polygon polygon;
  LabeledInstance label;
};

bool polygon_self_intersects(const Polygon& p);

/// Deterministic for a given seed. Every returned instance is simple, lies
/// inside the image with a margin and passes label construction.
std::vector<Instance> generate_dataset(const SynthConfig& cfg, const MDAConfig& mda);

/// Rebuilds the labels of existing polygons under a different MDA config.
std::vector<Instance> relabel(const std::vector<Instance>& data, const MDAConfig& mda);

enum class OptimizerKind { gd, adam };

struct TrainConfig {
  int epochs = 150;
  double learning_rate = 1e-4;
  std::vector<int> lr_milestones = {80, 120};
  double lr_decay = 0.5;
  int batch_size = 8;
  OptimizerKind optimizer = OptimizerKind::gd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double divergence_threshold = 1e6;
  uint64_t grid_seed = 99;  // per-instance grid seeds derive from this
  MDAConfig mda;
  LossConfig loss;
  ModelConfig model;
  FinalLossKind final_loss = FinalLossKind::dml;
};

/// lr0 * decay^(number of milestones <= epoch); epochs are 1-based.
double lr_at_epoch(const TrainConfig& cfg, int epoch);

struct EpochRecord {
  int epoch = 0;
  double l_init = 0, l_coarse = 0, l_iter1 = 0, l_iter2 = 0, l_overall = 0;
  double lr = 0;
  double iou_initial = 0, iou_coarse = 0, iou_final = 0;
};

struct TrainState {
  ModelParams params;
  std::vector<FeatureGrid> grids;  // parallel to the training dataset
  std::vector<int> instance_ids;
};

TrainState make_train_state(const std::vector<Instance>& data, const TrainConfig& cfg);

struct TrainResult {
  TrainState state;
  std::vector<EpochRecord> history;
};

/// Batch gradient descent on the weighted stage objective. Throws
/// DivergenceDetected when the loss goes non-finite or above the threshold.
TrainResult train(const std::vector<Instance>& data, const TrainConfig& cfg);

struct StageEval {
  double vertex_l1 = 0;
  double mask_iou = 0;
  double boundary_iou_d1 = 0;
  double boundary_iou_d2 = 0;
  double instances_per_s = 0;
};

struct EvalReport {
  StageEval initial;
  StageEval coarse;
  StageEval final_stage;
  int n_instances = 0;
};

/// Rasterizes the predicted contour of each stage against the ground-truth
/// polygon at image resolution. Throughput timing is optional so that
/// reports stay bit-reproducible when it is off.
EvalReport evaluate(const TrainState& state, const std::vector<Instance>& data,
                    bool measure_throughput = true);

enum class AblationSuite { loss, alignment_m, components };

struct AblationRow {
  std::string name;
  EvalReport report;
};

/// Trains matched configs differing only in the ablated factor from a shared
/// seed. loss: final-stage supervision in {smooth_l1, chamfer, dml};
/// alignment_m: M in {1,2,4,8}; components: fixed-circle baseline, then
/// +learnable init/global deform, +alignment, +dynamic matching.
std::vector<AblationRow> run_ablation(AblationSuite suite, const SynthConfig& synth,
                                      const TrainConfig& base);

}  // namespace e2ec
