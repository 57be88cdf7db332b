// Command-line front end: dataset generation, label inspection, training,
// evaluation, gradient checking, benchmarking and SVG rendering.
//
// Exit codes: 0 ok, 1 usage error, 2 runtime failure, 3 check failure.

#include <CLI11.hpp>

#include <cstdio>
#include <map>
#include <numbers>
#include <string>

#include "e2ec/dataset_io.hpp"
#include "e2ec/grad_check.hpp"
#include "e2ec/svg.hpp"
#include "e2ec/training.hpp"

namespace {

using namespace e2ec;

struct MdaFlags {
  int n = 128;
  int m = 4;
  double start_angle = 0;
  int k = 10;
  double dp_eps = 0;
  bool dp_on_contour = false;
  std::string ray_pick = "farthest";

  void attach(CLI::App* cmd) {
    cmd->add_option("--n", n, "contour vertex count N");
    cmd->add_option("--m", m, "aligned direction count M (0..N, must divide N)");
    cmd->add_option("--start-angle", start_angle, "first fixed direction in radians");
    cmd->add_option("--k", k, "sub-segments per label edge");
    cmd->add_option("--dp-eps", dp_eps, "key-vertex simplification tolerance (<=0: auto)");
    cmd->add_flag("--dp-on-contour", dp_on_contour,
                  "simplify the sampled contour instead of the raw polygon");
    cmd->add_option("--ray-pick", ray_pick, "farthest|nearest crossing for alignment rays")
        ->check(CLI::IsMember({"farthest", "nearest"}));
  }

  MDAConfig to_config() const {
    MDAConfig cfg;
    cfg.n_vertices = n;
    cfg.m_aligned = m;
    cfg.start_angle = start_angle;
    cfg.subsegments = k;
    cfg.dp_eps = dp_eps;
    cfg.dp_on_raw = !dp_on_contour;
    cfg.ray_pick = ray_pick == "nearest" ? RayPick::nearest : RayPick::farthest;
    validate(cfg);
    return cfg;
  }
};

struct TrainFlags {
  MdaFlags mda;
  int channels = 8;
  int grid = 32;
  int init_hidden = 64;
  int refine_mid = 16;
  int kernel = 9;
  double offset_scale = 1.0;
  bool fixed_circle = false;
  bool no_global_deform = false;
  double fixed_radius = 0;
  int epochs = 150;
  double lr = 3e-3;
  std::vector<int> milestones = {80, 120};
  double decay = 0.5;
  int batch = 8;
  std::string optimizer = "adam";
  std::string final_loss = "dml";
  double alpha = 0.1;
  double beta = 0.1;
  double delta = 1.0;
  uint64_t seed = 1;

  void attach(CLI::App* cmd) {
    mda.attach(cmd);
    mda.n = 32;  // desk-scale default for training commands
    cmd->add_option("--c", channels, "feature channels C");
    cmd->add_option("--grid", grid, "feature grid side length");
    cmd->add_option("--init-hidden", init_hidden, "initialization head hidden width");
    cmd->add_option("--refine-mid", refine_mid, "refinement conv channels");
    cmd->add_option("--kernel", kernel, "circular conv kernel width (odd)");
    cmd->add_option("--offset-scale", offset_scale, "multiplier on regressed offsets");
    cmd->add_flag("--fixed-circle", fixed_circle, "fixed circle instead of the learned init");
    cmd->add_flag("--no-global-deform", no_global_deform, "skip the global deformation module");
    cmd->add_option("--fixed-radius", fixed_radius, "fixed-circle radius (<=0: auto)");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--lr", lr, "initial learning rate");
    cmd->add_option("--milestones", milestones, "epochs at which the rate decays")
        ->delimiter(',');
    cmd->add_option("--decay", decay, "learning-rate decay factor");
    cmd->add_option("--batch", batch, "batch size");
    cmd->add_option("--optimizer", optimizer, "gd|adam")
        ->check(CLI::IsMember({"gd", "adam"}));
    cmd->add_option("--final-loss", final_loss, "dml|smooth_l1|chamfer")
        ->check(CLI::IsMember({"dml", "smooth_l1", "chamfer"}));
    cmd->add_option("--alpha", alpha, "initial-contour loss weight");
    cmd->add_option("--beta", beta, "coarse-contour loss weight");
    cmd->add_option("--delta", delta, "smooth-L1 transition in px");
    cmd->add_option("--seed", seed, "parameter/grid seed")->envname("E2EC_SEED");
  }

  TrainConfig to_config(int image_h, int image_w) const {
    TrainConfig cfg;
    cfg.mda = mda.to_config();
    cfg.model.n_vertices = cfg.mda.n_vertices;
    cfg.model.channels = channels;
    cfg.model.grid_h = cfg.model.grid_w = grid;
    cfg.model.image_h = image_h;
    cfg.model.image_w = image_w;
    cfg.model.init_hidden = init_hidden;
    cfg.model.refine_mid = refine_mid;
    cfg.model.kernel_width = kernel;
    cfg.model.offset_scale = offset_scale;
    cfg.model.learned_init = !fixed_circle;
    cfg.model.use_global_deform = !no_global_deform;
    cfg.model.fixed_init_radius = fixed_radius;
    cfg.model.seed = seed;
    cfg.grid_seed = seed + 1;
    cfg.epochs = epochs;
    cfg.learning_rate = lr;
    cfg.lr_milestones = milestones;
    cfg.lr_decay = decay;
    cfg.batch_size = batch;
    cfg.optimizer = optimizer == "gd" ? OptimizerKind::gd : OptimizerKind::adam;
    cfg.final_loss = final_loss == "smooth_l1"
                         ? FinalLossKind::smooth_l1
                         : (final_loss == "chamfer" ? FinalLossKind::chamfer : FinalLossKind::dml);
    cfg.loss.alpha = alpha;
    cfg.loss.beta = beta;
    cfg.loss.smooth_l1_delta = delta;
    return cfg;
  }
};

// Instances ordered to match a checkpoint's instance id list.
std::vector<Instance> align_to_checkpoint(const std::vector<Instance>& data,
                                          const std::vector<int>& ids) {
  std::map<int, const Instance*> by_id;
  for (const Instance& inst : data) by_id[inst.id] = &inst;
  std::vector<Instance> out;
  out.reserve(ids.size());
  for (int id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw Error(Errc::config_error,
                  "checkpoint references instance " + std::to_string(id) + " not in the dataset");
    }
    out.push_back(*it->second);
  }
  return out;
}

MDAConfig mda_from_checkpoint(const Json& config) {
  if (!config.contains("mda")) {
    throw Error(Errc::config_error, "checkpoint config lacks an mda section");
  }
  return mda_from_json(config.at("mda"));
}

int cmd_gen_data(const std::string& out, int n_instances, const std::string& family,
                 uint64_t seed, int image, int vertex_budget) {
  SynthConfig synth;
  synth.n_instances = n_instances;
  synth.family = shape_family_from_string(family);
  synth.image_h = synth.image_w = image;
  synth.vertex_budget = vertex_budget;
  synth.seed = seed;
  MDAConfig mda;  // label invariants are validated at generation time
  const std::vector<Instance> data = generate_dataset(synth, mda);
  Dataset ds;
  ds.image_h = synth.image_h;
  ds.image_w = synth.image_w;
  ds.config = to_json(synth);
  for (const Instance& inst : data) ds.instances.push_back({inst.id, inst.family, inst.polygon});
  write_dataset(out, ds);
  std::printf("wrote %zu instances to %s\n", ds.instances.size(), out.c_str());
  return 0;
}

int cmd_sample_labels(const std::string& data_path, const std::string& out, const MdaFlags& flags,
                      const std::string& svg_path, int svg_instance) {
  const Dataset ds = read_dataset(data_path);
  const MDAConfig mda = flags.to_config();
  const std::vector<Instance> data = label_dataset(ds, mda);
  write_text_file(out, labels_to_json(data, mda).dump(2) + "\n");
  if (!svg_path.empty()) {
    if (svg_instance < 0 || svg_instance >= static_cast<int>(ds.instances.size())) {
      throw Error(Errc::config_error, "svg instance index out of range");
    }
    const std::string svg =
        render_mda_panels_svg(ds.instances[svg_instance].polygon, mda, {1, 2, 4, 8}, ds.image_h,
                              ds.image_w, 4.0, to_json(mda).dump());
    write_text_file(svg_path, svg);
  }
  std::printf("labeled %zu instances -> %s\n", data.size(), out.c_str());
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& ckpt_path,
              const std::string& history_path, const TrainFlags& flags) {
  const Dataset ds = read_dataset(data_path);
  const TrainConfig cfg = flags.to_config(ds.image_h, ds.image_w);
  const std::vector<Instance> data = label_dataset(ds, cfg.mda);
  const TrainResult res = train(data, cfg);
  Json config = to_json(cfg);
  config["dataset"] = data_path;
  save_checkpoint(ckpt_path, res.state, config);
  if (!history_path.empty()) {
    write_text_file(history_path, history_csv(res.history, config));
  }
  if (res.history.empty()) {
    std::printf("wrote untrained state for %zu instances -> %s\n", data.size(), ckpt_path.c_str());
  } else {
    const EpochRecord& last = res.history.back();
    std::printf("trained %d epochs on %zu instances: l_overall %.4f, final IoU %.4f -> %s\n",
                cfg.epochs, data.size(), last.l_overall, last.iou_final, ckpt_path.c_str());
  }
  return 0;
}

int cmd_eval(const std::string& data_path, const std::string& ckpt_path, const std::string& out,
             bool no_throughput) {
  const Dataset ds = read_dataset(data_path);
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  const MDAConfig mda = mda_from_checkpoint(ckpt.config);
  const std::vector<Instance> data =
      align_to_checkpoint(label_dataset(ds, mda), ckpt.state.instance_ids);
  const EvalReport rep = evaluate(ckpt.state, data, !no_throughput);
  Json config = ckpt.config;
  config["dataset"] = data_path;
  write_text_file(out, eval_report_to_json(rep, config).dump(2) + "\n");
  std::printf("eval %zu instances: mask IoU initial %.4f coarse %.4f final %.4f -> %s\n",
              data.size(), rep.initial.mask_iou, rep.coarse.mask_iou, rep.final_stage.mask_iou,
              out.c_str());
  return 0;
}

int cmd_grad_check(const GradCheckConfig& cfg) {
  const GradCheckReport rep = run_grad_check(cfg);
  for (const GradCheckItem& item : rep.items) {
    std::printf("%-24s %s  max_rel_err %.3e  checked %d  rejected %d\n", item.name.c_str(),
                item.pass ? "ok  " : "FAIL", item.max_rel_err, item.checked, item.rejected);
  }
  if (!rep.all_pass) {
    std::printf("gradient check FAILED\n");
    return 3;
  }
  std::printf("all checks passed (%d gradients, %d rejected near kinks)\n", rep.total_checked,
              rep.total_rejected);
  return 0;
}

int cmd_bench(const std::string& data_path, const std::string& ckpt_path, const std::string& out,
              const TrainFlags& flags) {
  const Dataset ds = read_dataset(data_path);
  TrainState state;
  std::vector<Instance> data;
  Json config;
  if (!ckpt_path.empty()) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    const MDAConfig mda = mda_from_checkpoint(ckpt.config);
    data = align_to_checkpoint(label_dataset(ds, mda), ckpt.state.instance_ids);
    state = std::move(ckpt.state);
    config = ckpt.config;
  } else {
    const TrainConfig cfg = flags.to_config(ds.image_h, ds.image_w);
    data = label_dataset(ds, cfg.mda);
    state = make_train_state(data, cfg);
    config = to_json(cfg);
  }
  config["dataset"] = data_path;
  const EvalReport rep = evaluate(state, data, /*measure_throughput=*/true);
  std::printf("stage      instances/s\n");
  std::printf("initial    %10.1f\n", rep.initial.instances_per_s);
  std::printf("coarse     %10.1f\n", rep.coarse.instances_per_s);
  std::printf("final      %10.1f\n", rep.final_stage.instances_per_s);
  if (!out.empty()) {
    write_text_file(out, eval_report_to_json(rep, config).dump(2) + "\n");
  }
  return 0;
}

int cmd_render(const std::string& data_path, const std::string& ckpt_path, int instance,
               const std::string& out, const std::string& stages_csv, bool paths, double scale) {
  const Dataset ds = read_dataset(data_path);
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  const MDAConfig mda = mda_from_checkpoint(ckpt.config);
  const std::vector<Instance> data =
      align_to_checkpoint(label_dataset(ds, mda), ckpt.state.instance_ids);

  int slot = -1;
  for (size_t i = 0; i < data.size(); ++i) {
    if (data[i].id == instance) slot = static_cast<int>(i);
  }
  if (slot < 0) throw Error(Errc::config_error, "instance id not found in checkpoint");

  RenderSpec spec;
  spec.show_initial = spec.show_coarse = spec.show_iter1 = spec.show_final = false;
  spec.draw_paths = paths;
  spec.scale = scale;
  std::stringstream ss(stages_csv);
  std::string stage;
  while (std::getline(ss, stage, ',')) {
    if (stage == "initial") spec.show_initial = true;
    else if (stage == "coarse") spec.show_coarse = true;
    else if (stage == "iter1") spec.show_iter1 = true;
    else if (stage == "final" || stage == "iter2") spec.show_final = true;
    else throw Error(Errc::config_error, "unknown stage: " + stage);
  }

  const ModelOutputs outs =
      forward(ckpt.state.params, ckpt.state.grids[slot], data[slot].label.center);
  Json config = ckpt.config;
  config["dataset"] = data_path;
  config["render_stages"] = stages_csv;
  const std::string svg = render_stages_svg(data[slot].polygon, outs.stages, spec, ds.image_h,
                                            ds.image_w, config.dump());
  write_text_file(out, svg);
  std::printf("rendered instance %d -> %s\n", instance, out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contour-based instance segmentation toolkit"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic polygon dataset");
  std::string gen_out;
  int gen_n = 200;
  std::string gen_family = "blob";
  uint64_t gen_seed = 0;
  int gen_image = 96;
  int gen_budget = 48;
  gen->add_option("--out", gen_out, "output dataset JSON")->required();
  gen->add_option("--n", gen_n, "instance count");
  gen->add_option("--family", gen_family, "blob|star|rect|ellipse")
      ->check(CLI::IsMember({"blob", "star", "rect", "ellipse"}));
  gen->add_option("--seed", gen_seed, "generation seed")->envname("E2EC_SEED");
  gen->add_option("--image", gen_image, "square image side length");
  gen->add_option("--vertex-budget", gen_budget, "raw vertices per polygon");

  // sample-labels
  auto* labels = app.add_subcommand("sample-labels", "dump training labels for a dataset");
  std::string lab_data, lab_out, lab_svg;
  int lab_svg_instance = 0;
  MdaFlags lab_mda;
  labels->add_option("--data", lab_data, "dataset JSON")->required();
  labels->add_option("--out", lab_out, "output labels JSON")->required();
  labels->add_option("--svg", lab_svg, "optional alignment-panel SVG (M=1,2,4,8)");
  labels->add_option("--instance", lab_svg_instance, "instance index for the SVG");
  lab_mda.attach(labels);

  // train
  auto* tr = app.add_subcommand("train", "train the contour model on a dataset");
  std::string tr_data, tr_out, tr_history;
  TrainFlags tr_flags;
  tr->add_option("--data", tr_data, "dataset JSON")->required();
  tr->add_option("--out", tr_out, "output checkpoint")->required();
  tr->add_option("--history", tr_history, "metric history CSV");
  tr_flags.attach(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint against its dataset");
  std::string ev_data, ev_ckpt, ev_out;
  bool ev_no_tp = false;
  ev->add_option("--data", ev_data, "dataset JSON")->required();
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--out", ev_out, "output report JSON")->required();
  ev->add_flag("--no-throughput", ev_no_tp, "skip throughput timing (reproducible output)");

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of every gradient");
  GradCheckConfig gc_cfg;
  gc->add_option("--seed", gc_cfg.seed, "check seed")->envname("E2EC_SEED");
  gc->add_option("--n", gc_cfg.n_vertices, "contour vertices");
  gc->add_option("--c", gc_cfg.channels, "feature channels");
  gc->add_option("--grid", gc_cfg.grid_hw, "feature grid side length");
  gc->add_option("--step", gc_cfg.step, "central difference half step");
  gc->add_option("--reject-radius", gc_cfg.reject_radius, "kink rejection radius");
  gc->add_option("--tol", gc_cfg.tol, "max relative error");

  // bench
  auto* be = app.add_subcommand("bench", "per-stage throughput");
  std::string be_data, be_ckpt, be_out;
  TrainFlags be_flags;
  be->add_option("--data", be_data, "dataset JSON")->required();
  be->add_option("--checkpoint", be_ckpt, "checkpoint (fresh parameters when omitted)");
  be->add_option("--out", be_out, "output report JSON");
  be_flags.attach(be);

  // render
  auto* re = app.add_subcommand("render", "render contours and deformation paths to SVG");
  std::string re_data, re_ckpt, re_out, re_stages = "initial,coarse,final";
  int re_instance = 0;
  bool re_paths = false;
  double re_scale = 4.0;
  re->add_option("--data", re_data, "dataset JSON")->required();
  re->add_option("--checkpoint", re_ckpt, "checkpoint file")->required();
  re->add_option("--out", re_out, "output SVG")->required();
  re->add_option("--instance", re_instance, "instance id to draw");
  re->add_option("--stages", re_stages, "comma list of initial,coarse,iter1,final");
  re->add_flag("--paths", re_paths, "draw per-vertex deformation paths");
  re->add_option("--scale", re_scale, "SVG pixels per image pixel");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_out, gen_n, gen_family, gen_seed, gen_image, gen_budget);
    if (labels->parsed()) return cmd_sample_labels(lab_data, lab_out, lab_mda, lab_svg, lab_svg_instance);
    if (tr->parsed()) return cmd_train(tr_data, tr_out, tr_history, tr_flags);
    if (ev->parsed()) return cmd_eval(ev_data, ev_ckpt, ev_out, ev_no_tp);
    if (gc->parsed()) return cmd_grad_check(gc_cfg);
    if (be->parsed()) return cmd_bench(be_data, be_ckpt, be_out, be_flags);
    if (re->parsed()) return cmd_render(re_data, re_ckpt, re_instance, re_out, re_stages, re_paths, re_scale);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
