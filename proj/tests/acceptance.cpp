// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Invoke with --cli <path-to-cli-binary> (needed by criterion 8).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "e2ec/dataset_io.hpp"
#include "e2ec/grad_check.hpp"
#include "e2ec/svg.hpp"
#include "e2ec/training.hpp"
#include "oracles.hpp"
#include "xml_check.hpp"

using namespace e2ec;

namespace {

constexpr double kPi = std::numbers::pi;

using clock_t_ = std::chrono::steady_clock;

double seconds_since(clock_t_::time_point t0) {
  return std::chrono::duration<double>(clock_t_::now() - t0).count();
}

double wrapped_angle_diff(double a, double b) {
  double d = std::fmod(a - b, 2 * kPi);
  if (d > kPi) d -= 2 * kPi;
  if (d < -kPi) d += 2 * kPi;
  return std::abs(d);
}

struct Criterion {
  int id;
  const char* summary;
  bool pass;
  std::string detail;
};

// --- 1: geometric oracle suite over 500 seeded random polygons ------------

Criterion geometric_suite() {
  const auto t0 = clock_t_::now();
  std::mt19937 rng(1001);
  int bad = 0;
  std::string detail;
  for (int rep = 0; rep < 500; ++rep) {
    const int nv = 10 + rep % 31;
    const Polygon p = normalize_orientation(
        oracle::random_radial_polygon(rng, nv, 8.0 + (rep % 7), 0.45, {40, 40}));
    const Point2 center = compute_center(p);

    // Uniform resampling stays on the boundary.
    const Contour res = resample_uniform(p, 64, p.vertices[0]);
    for (const Point2& v : res.vertices) {
      if (boundary_distance(p, v) > 1e-9) ++bad;
    }

    // MDA fixed vertices sit on their rays.
    MDAConfig m4;
    m4.n_vertices = 32;
    m4.m_aligned = 4;
    const Contour c4 = mda_sample(p, center, m4);
    for (int j = 0; j < 4; ++j) {
      const Point2 v = c4.vertices[j * 8] - center;
      if (wrapped_angle_diff(std::atan2(v.y, v.x), kPi * j / 2) > 1e-9) ++bad;
    }

    // M == N equals pointwise polar sampling.
    MDAConfig mn;
    mn.n_vertices = 32;
    mn.m_aligned = 32;
    const Contour polar = mda_sample(p, center, mn);
    for (int j = 0; j < 32; ++j) {
      const Point2 want = ray_boundary_intersection(p, center, 2 * kPi * j / 32);
      if (dist(polar.vertices[j], want) > 1e-9) ++bad;
    }

    // Douglas-Peucker deviation bound, checked exhaustively.
    const double eps = default_dp_eps(p);
    const std::vector<int> kept = douglas_peucker_indices(p, eps);
    std::vector<Point2> simplified;
    for (int i : kept) simplified.push_back(p.vertices[i]);
    std::vector<bool> is_kept(p.vertices.size(), false);
    for (int i : kept) is_kept[i] = true;
    for (size_t i = 0; i < p.vertices.size(); ++i) {
      if (!is_kept[i] && oracle::polyline_distance(p.vertices[i], simplified) > eps + 1e-9) ++bad;
    }
  }
  const double secs = seconds_since(t0);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%d residual violations over 500 polygons, %.1f s", bad, secs);
  return {1, "geometric oracle suite (500 seeded polygons)", bad == 0 && secs < 30.0, buf};
}

// --- 2: matching equivalence against brute force ---------------------------

Criterion matching_suite() {
  const auto t0 = clock_t_::now();
  std::mt19937 rng(1002);
  int mismatches = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const Polygon p = oracle::random_radial_polygon(rng, 14, 10.0, 0.4, {30, 30});
    MDAConfig cfg;
    cfg.n_vertices = 32;
    cfg.subsegments = 10;
    LabeledInstance label;
    try {
      label = build_label(p, cfg);
    } catch (const Error&) {
      continue;
    }
    std::uniform_real_distribution<double> u(-14.0, 14.0);
    Contour pred;
    pred.vertices.resize(32);
    for (Point2& v : pred.vertices) v = label.center + Point2{u(rng), u(rng)};

    const std::vector<int> m1 = match_pred_to_interp(pred, label.gt_interp);
    for (int i = 0; i < 32; ++i) {
      if (m1[i] != oracle::nearest_index_bruteforce(pred.vertices[i], label.gt_interp)) {
        ++mismatches;
      }
    }
    const std::vector<int> m2 = match_key_to_pred(pred, label.gt_keys);
    for (size_t k = 0; k < label.gt_keys.size(); ++k) {
      if (m2[k] != oracle::nearest_index_bruteforce(label.gt_keys[k], pred.vertices)) {
        ++mismatches;
      }
    }
  }
  const double secs = seconds_since(t0);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%d mismatches over 1000 instances, %.1f s", mismatches, secs);
  return {2, "matching equivalence vs brute force (1000 instances)",
          mismatches == 0 && secs < 10.0, buf};
}

// --- 3: gradient suite ------------------------------------------------------

Criterion gradient_suite() {
  const auto t0 = clock_t_::now();
  GradCheckConfig cfg;
  cfg.seed = 3;
  cfg.n_vertices = 16;
  cfg.channels = 4;
  cfg.grid_hw = 16;
  cfg.tol = 1e-4;
  const GradCheckReport rep = run_grad_check(cfg);
  const double secs = seconds_since(t0);
  double worst = 0;
  for (const GradCheckItem& item : rep.items) worst = std::max(worst, item.max_rel_err);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "%zu tensors, %d gradients checked, %d rejected near kinks, worst rel err %.2e, "
                "%.1f s",
                rep.items.size(), rep.total_checked, rep.total_rejected, worst, secs);
  return {3, "finite-difference gradient suite (losses + all parameter tensors)",
          rep.all_pass && secs < 120.0, buf};
}

// --- 4: structural identities ----------------------------------------------

Criterion structural_identities() {
  std::string detail;
  bool ok = true;

  // DML vanishes on a subset-consistent prediction.
  MDAConfig sq_cfg;
  sq_cfg.n_vertices = 8;
  sq_cfg.m_aligned = 4;
  const LabeledInstance sq =
      build_label(Polygon{{{1, -1}, {1, 1}, {-1, 1}, {-1, -1}}}, sq_cfg);
  const double dml = dynamic_matching_loss(sq.gt_contour, sq.gt_contour, sq).value;
  if (dml != 0.0) {
    ok = false;
    detail += "dml!=0 ";
  }

  // Chamfer is invariant to cyclic shifts.
  std::mt19937 rng(1004);
  std::uniform_real_distribution<double> u(-5, 5);
  Contour pts;
  pts.vertices.resize(24);
  for (Point2& v : pts.vertices) v = {u(rng), u(rng)};
  Contour rolled = pts;
  std::rotate(rolled.vertices.begin(), rolled.vertices.begin() + 7, rolled.vertices.end());
  if (chamfer_loss(rolled, pts).value != 0.0) {
    ok = false;
    detail += "chamfer-shift!=0 ";
  }

  // Circular convolution is bit-exactly shift-equivariant.
  ConvKernel k;
  k.c_in = 3;
  k.c_out = 5;
  k.width = 9;
  k.w.resize(static_cast<size_t>(3) * 5 * 9);
  k.b.resize(5);
  for (double& x : k.w) x = u(rng);
  for (double& x : k.b) x = u(rng);
  const int n = 32;
  std::vector<double> feats(n * 3);
  for (double& x : feats) x = u(rng);
  const std::vector<double> base = circular_conv(feats, n, k);
  for (int s : {1, 9, 17}) {
    std::vector<double> shifted(n * 3);
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) shifted[i * 3 + c] = feats[((i + s) % n) * 3 + c];
    }
    const std::vector<double> out = circular_conv(shifted, n, k);
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < 5; ++c) {
        if (out[i * 5 + c] != base[((i + s) % n) * 5 + c]) {
          ok = false;
          detail += "conv-shift ";
        }
      }
    }
  }

  // Global deformation widths at N=32, C=8.
  ModelConfig mc;
  mc.n_vertices = 32;
  mc.channels = 8;
  ModelParams params = make_params(mc);
  if (params.global.fc1.in != 264 || params.global.fc1.out != 64 ||
      params.global.fc2.out != 64) {
    ok = false;
    detail += "widths ";
  }

  if (detail.empty()) detail = "dml=0, chamfer shift=0, conv shift bit-exact, widths 264->64";
  return {4, "structural identities", ok, detail};
}

// --- 5: toy end-to-end convergence ------------------------------------------

Criterion convergence_run() {
  const auto t0 = clock_t_::now();
  TrainConfig cfg;
  cfg.mda.n_vertices = 32;
  cfg.model.n_vertices = 32;
  cfg.model.channels = 8;
  cfg.model.grid_h = cfg.model.grid_w = 32;
  cfg.model.image_h = cfg.model.image_w = 96;
  cfg.epochs = 150;
  cfg.lr_milestones = {80, 120};  // default schedule shape
  cfg.lr_decay = 0.5;
  cfg.batch_size = 8;
  cfg.optimizer = OptimizerKind::adam;
  cfg.learning_rate = 3e-3;
  SynthConfig synth;
  synth.n_instances = 200;
  synth.family = ShapeFamily::blob;
  synth.image_h = synth.image_w = 96;
  synth.seed = 7;
  const std::vector<Instance> data = generate_dataset(synth, cfg.mda);
  const TrainResult res = train(data, cfg);
  const EvalReport rep = evaluate(res.state, data, /*measure_throughput=*/false);
  const double secs = seconds_since(t0);
  const bool ordered = rep.final_stage.mask_iou >= rep.coarse.mask_iou &&
                       rep.coarse.mask_iou >= rep.initial.mask_iou;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "final IoU %.4f (>= 0.85), stages %.4f/%.4f/%.4f, %.0f s (< 600)",
                rep.final_stage.mask_iou, rep.initial.mask_iou, rep.coarse.mask_iou,
                rep.final_stage.mask_iou, secs);
  return {5, "toy end-to-end convergence (200 blobs)",
          rep.final_stage.mask_iou >= 0.85 && ordered && secs < 600.0, buf};
}

// --- 6: directional ablation reproduction ------------------------------------

Criterion ablation_directions() {
  const int epochs = 100;
  auto base_cfg = [&] {
    TrainConfig cfg;
    cfg.mda.n_vertices = 32;
    cfg.model.n_vertices = 32;
    cfg.model.channels = 8;
    cfg.model.grid_h = cfg.model.grid_w = 32;
    cfg.model.image_h = cfg.model.image_w = 96;
    cfg.epochs = epochs;
    cfg.lr_milestones = {epochs * 8 / 15, epochs * 12 / 15};
    cfg.batch_size = 8;
    cfg.optimizer = OptimizerKind::adam;
    cfg.learning_rate = 3e-3;
    return cfg;
  };
  double dml_biou = 0, sl1_biou = 0, m4_l1 = 0, m1_l1 = 0;
  for (uint64_t seed : {11ull, 12ull, 13ull}) {
    SynthConfig synth;
    synth.n_instances = 60;
    synth.family = ShapeFamily::star;
    synth.image_h = synth.image_w = 96;
    synth.seed = seed;
    for (const FinalLossKind kind : {FinalLossKind::dml, FinalLossKind::smooth_l1}) {
      TrainConfig cfg = base_cfg();
      cfg.final_loss = kind;
      const std::vector<Instance> data = generate_dataset(synth, cfg.mda);
      const EvalReport rep = evaluate(train(data, cfg).state, data, false);
      (kind == FinalLossKind::dml ? dml_biou : sl1_biou) +=
          rep.final_stage.boundary_iou_d2 / 3.0;
    }
    for (const int m : {4, 1}) {
      TrainConfig cfg = base_cfg();
      cfg.final_loss = FinalLossKind::smooth_l1;
      cfg.mda.m_aligned = m;
      const std::vector<Instance> data = generate_dataset(synth, cfg.mda);
      const EvalReport rep = evaluate(train(data, cfg).state, data, false);
      (m == 4 ? m4_l1 : m1_l1) += rep.final_stage.vertex_l1 / 3.0;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "boundary IoU dml %.4f >= smooth_l1 %.4f; vertex L1 m4 %.4f <= m1 %.4f "
                "(3-seed means)",
                dml_biou, sl1_biou, m4_l1, m1_l1);
  return {6, "directional ablation reproduction (star shapes)",
          dml_biou >= sl1_biou && m4_l1 <= m1_l1, buf};
}

// --- 7: throughput ordering ---------------------------------------------------

int run_cmd(const std::string& cmd);

Criterion throughput_ordering(const std::string& cli) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "e2ec_acceptance_bench";
  fs::remove_all(dir);
  fs::create_directories(dir);

  MDAConfig mda;
  mda.n_vertices = 32;
  SynthConfig synth;
  synth.n_instances = 32;
  synth.image_h = synth.image_w = 96;
  synth.seed = 19;
  const std::vector<Instance> data = generate_dataset(synth, mda);
  Dataset ds;
  ds.image_h = ds.image_w = 96;
  ds.config = to_json(synth);
  for (const Instance& inst : data) ds.instances.push_back({inst.id, inst.family, inst.polygon});
  const std::string d = (dir / "d.json").string();
  const std::string out = (dir / "bench.json").string();
  write_dataset(d, ds);

  const int rc = run_cmd(cli + " bench --data " + d + " --out " + out + " --n 32 --c 8 --grid 32 > " +
                         (dir / "log.txt").string() + " 2>&1");
  if (rc != 0) {
    return {7, "throughput ordering across stages", false,
            "bench exited with " + std::to_string(rc)};
  }
  const Json rep = Json::parse(read_text_file(out));
  const double ips_initial = rep.at("initial").at("instances_per_s").get<double>();
  const double ips_coarse = rep.at("coarse").at("instances_per_s").get<double>();
  const double ips_final = rep.at("final").at("instances_per_s").get<double>();
  char buf[128];
  std::snprintf(buf, sizeof(buf), "bench instances/s initial %.0f >= coarse %.0f >= final %.0f",
                ips_initial, ips_coarse, ips_final);
  return {7, "throughput ordering across stages",
          ips_initial >= ips_coarse && ips_coarse >= ips_final, buf};
}

// --- 8: CLI round-trip ---------------------------------------------------------

int run_cmd(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Criterion cli_round_trip(const std::string& cli) {
  const auto t0 = clock_t_::now();
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "e2ec_acceptance_cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string d = (dir / "d.json").string();
  const std::string labels = (dir / "labels.json").string();
  const std::string mda_svg = (dir / "mda.svg").string();
  const std::string ckpt = (dir / "ck.bin").string();
  const std::string hist = (dir / "h.csv").string();
  const std::string report = (dir / "report.json").string();
  const std::string svg = (dir / "render.svg").string();
  const std::string log = " >> " + (dir / "log.txt").string() + " 2>&1";

  std::string detail;
  bool ok = true;
  const std::vector<std::string> steps = {
      cli + " gen-data --n 30 --family blob --seed 7 --image 64 --out " + d,
      cli + " sample-labels --data " + d + " --out " + labels + " --n 32 --m 4 --svg " + mda_svg,
      cli + " train --data " + d + " --out " + ckpt + " --history " + hist +
          " --n 32 --c 8 --grid 32 --epochs 30 --batch 8",
      cli + " eval --data " + d + " --checkpoint " + ckpt + " --out " + report +
          " --no-throughput",
      cli + " render --data " + d + " --checkpoint " + ckpt + " --instance 0 --out " + svg +
          " --stages initial,coarse,final --paths",
  };
  for (const std::string& step : steps) {
    const int rc = run_cmd(step + log);
    if (rc != 0) {
      ok = false;
      detail = "exit " + std::to_string(rc) + " from: " + step;
      break;
    }
  }

  if (ok) {
    try {
      const Json ds = Json::parse(read_text_file(d));
      ok = ok && ds.contains("version") && ds.contains("image_size") && ds.contains("config") &&
           ds.at("instances").size() == 30;
      for (const Json& inst : ds.at("instances")) {
        ok = ok && inst.contains("id") && inst.contains("shape_family") &&
             inst.at("polygon").size() >= 3;
      }
      const Json lj = Json::parse(read_text_file(labels));
      ok = ok && lj.contains("config") && lj.at("instances").size() == 30;
      const Json rj = Json::parse(read_text_file(report));
      for (const char* stage : {"initial", "coarse", "final"}) {
        ok = ok && rj.at(stage).contains("mask_iou") && rj.at(stage).contains("vertex_l1");
      }
      ok = ok && rj.contains("config");
      const std::string hist_text = read_text_file(hist);
      ok = ok && hist_text.rfind("# config:", 0) == 0;
      ok = ok && hist_text.find("epoch,l_init,l_coarse,l_iter1,l_iter2,l_overall,lr,") !=
                     std::string::npos;
      ok = ok && oracle::xml_well_formed(read_text_file(svg));
      ok = ok && oracle::xml_well_formed(read_text_file(mda_svg));
      if (!ok) detail = "artifact schema validation failed";
    } catch (const std::exception& e) {
      ok = false;
      detail = std::string("artifact parse failure: ") + e.what();
    }
  }
  const double secs = seconds_since(t0);
  if (ok) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "gen-data/sample-labels/train/eval/render all exit 0, %.0f s",
                  secs);
    detail = buf;
  }
  return {8, "CLI round-trip with schema-valid artifacts", ok && secs < 300.0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--cli") cli = argv[i + 1];
  }
  if (cli.empty()) {
    std::fprintf(stderr, "usage: acceptance --cli <path-to-cli-binary>\n");
    return 2;
  }

  std::vector<Criterion> results;
  results.push_back(geometric_suite());
  results.push_back(matching_suite());
  results.push_back(gradient_suite());
  results.push_back(structural_identities());
  results.push_back(convergence_run());
  results.push_back(ablation_directions());
  results.push_back(throughput_ordering(cli));
  results.push_back(cli_round_trip(cli));

  int failures = 0;
  for (const Criterion& c : results) {
    std::printf("%s [%d] %s: %s\n", c.pass ? "PASS" : "FAIL", c.id, c.summary, c.detail.c_str());
    failures += c.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(results.size()) - failures,
              results.size());
  return failures == 0 ? 0 : 1;
}
