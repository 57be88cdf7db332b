#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>
#include <random>

#include "e2ec/grad_check.hpp"
#include "e2ec/model.hpp"

using namespace e2ec;

namespace {

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.n_vertices = 16;
  cfg.channels = 4;
  cfg.grid_h = cfg.grid_w = 16;
  cfg.image_h = cfg.image_w = 48;
  cfg.init_hidden = 8;
  cfg.refine_mid = 8;
  cfg.kernel_width = 9;
  return cfg;
}

void randomize(ModelParams& params, uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (TensorRef& t : tensor_refs(params)) {
    for (size_t k = 0; k < t.size; ++k) t.data[k] = u(rng);
  }
  ++params.revision;
}

Contour random_contour(std::mt19937_64& rng, int n, Point2 center, double radius) {
  std::uniform_real_distribution<double> u(-radius, radius);
  Contour c;
  c.vertices.resize(n);
  for (int i = 0; i < n; ++i) c.vertices[i] = center + Point2{u(rng), u(rng)};
  return c;
}

}  // namespace

TEST_CASE("sample_features interpolation identity and constant field") {
  ModelConfig cfg = toy_config();
  FeatureGrid g = make_grid(cfg, 5);

  const Point2 site{3.0, 7.0};
  const std::vector<double> f = sample_features(g, std::span<const Point2>(&site, 1));
  for (int ch = 0; ch < cfg.channels; ++ch) CHECK(f[ch] == g.at(7, 3, ch));

  FeatureGrid flat = g;
  std::fill(flat.values.begin(), flat.values.end(), 1.25);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.3, 14.7);
  std::vector<Point2> pts(10);
  for (Point2& p : pts) p = {u(rng), u(rng)};
  std::vector<SamplePoint> cache;
  const std::vector<double> cf = sample_features(flat, pts, &cache);
  for (double v : cf) CHECK(v == 1.25);

  std::vector<double> dfeat(cf.size(), 1.0);
  std::vector<double> grid_grad(flat.values.size(), 0.0);
  std::vector<Point2> pts_grad(pts.size(), Point2{});
  sample_features_backward(flat, cache, dfeat, grid_grad, pts_grad);
  for (const Point2& pg : pts_grad) {
    CHECK(pg.x == 0.0);  // constant field: zero spatial gradient
    CHECK(pg.y == 0.0);
  }
}

TEST_CASE("sample_features gradients match finite differences") {
  ModelConfig cfg = toy_config();
  FeatureGrid g = make_grid(cfg, 6);
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.2, 14.6);
  std::vector<Point2> pts(6);
  for (Point2& p : pts) p = {u(rng), u(rng)};

  std::vector<SamplePoint> cache;
  std::vector<double> base = sample_features(g, pts, &cache);

  // Random scalar projection of the output for a single FD direction.
  std::vector<double> w(base.size());
  std::uniform_real_distribution<double> uw(-1, 1);
  for (double& x : w) x = uw(rng);
  auto value = [&] {
    const std::vector<double> f = sample_features(g, pts);
    double acc = 0;
    for (size_t i = 0; i < f.size(); ++i) acc += w[i] * f[i];
    return acc;
  };

  std::vector<double> grid_grad(g.values.size(), 0.0);
  std::vector<Point2> pts_grad(pts.size(), Point2{});
  sample_features_backward(g, cache, w, grid_grad, pts_grad);

  const double h = 1e-6;
  for (size_t k = 0; k < g.values.size(); k += 7) {
    const double q0 = g.values[k];
    g.values[k] = q0 + h;
    const double up = value();
    g.values[k] = q0 - h;
    const double dn = value();
    g.values[k] = q0;
    const double fd = (up - dn) / (2 * h);
    CHECK(std::abs(fd - grid_grad[k]) < 1e-5 * std::max(1.0, std::abs(fd)));
  }
  for (size_t i = 0; i < pts.size(); ++i) {
    for (int axis = 0; axis < 2; ++axis) {
      double* slot = axis == 0 ? &pts[i].x : &pts[i].y;
      const double analytic = axis == 0 ? pts_grad[i].x : pts_grad[i].y;
      const double q0 = *slot;
      *slot = q0 + h;
      const double up = value();
      *slot = q0 - h;
      const double dn = value();
      *slot = q0;
      const double fd = (up - dn) / (2 * h);
      CHECK(std::abs(fd - analytic) < 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("init_contour: zero weights, ring bias, re-evaluation oracle") {
  ModelConfig cfg = toy_config();
  ModelParams params = make_params(cfg);
  FeatureGrid grid = make_grid(cfg, 3);
  const Point2 center{20, 22};

  const Contour at_center = init_contour(center, params, grid);
  for (const Point2& v : at_center.vertices) CHECK(dist(v, center) == 0.0);

  // Bias-only ring of radius 5.
  const double r = 5.0;
  for (int i = 0; i < cfg.n_vertices; ++i) {
    const double a = 2.0 * std::numbers::pi * i / cfg.n_vertices;
    params.init.fc2.b[2 * i] = r * std::cos(a);
    params.init.fc2.b[2 * i + 1] = r * std::sin(a);
  }
  ++params.revision;
  const Contour ring = init_contour(center, params, grid);
  for (const Point2& v : ring.vertices) {
    CHECK(dist(v, center) == doctest::Approx(r).epsilon(1e-12));
  }

  randomize(params, 77);
  const Contour out = init_contour(center, params, grid);
  // Independent re-evaluation.
  const double kx = static_cast<double>(cfg.grid_w - 1) / (cfg.image_w - 1);
  const double ky = static_cast<double>(cfg.grid_h - 1) / (cfg.image_h - 1);
  const Point2 gpt{center.x * kx, center.y * ky};
  const std::vector<double> feat = sample_features(grid, std::span<const Point2>(&gpt, 1));
  std::vector<double> hidden(cfg.init_hidden);
  for (int o = 0; o < cfg.init_hidden; ++o) {
    double acc = params.init.fc1.b[o];
    for (int i = 0; i < cfg.channels; ++i) acc += params.init.fc1.w[o * cfg.channels + i] * feat[i];
    hidden[o] = std::max(0.0, acc);
  }
  for (int i = 0; i < cfg.n_vertices; ++i) {
    for (int axis = 0; axis < 2; ++axis) {
      const int o = 2 * i + axis;
      double acc = params.init.fc2.b[o];
      for (int j = 0; j < cfg.init_hidden; ++j) {
        acc += params.init.fc2.w[o * cfg.init_hidden + j] * hidden[j];
      }
      const double want = (axis == 0 ? center.x : center.y) + cfg.offset_scale * acc;
      CHECK((axis == 0 ? out.vertices[i].x : out.vertices[i].y) ==
            doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("global_deform widths match the documented architecture") {
  ModelConfig cfg = toy_config();
  cfg.n_vertices = 32;
  cfg.channels = 8;
  ModelParams params = make_params(cfg);
  CHECK(params.global.fc1.in == 264);   // (N+1)*C
  CHECK(params.global.fc1.out == 64);   // hidden width N*2
  CHECK(params.global.fc2.in == 64);
  CHECK(params.global.fc2.out == 64);   // output width N*2
  CHECK(params.init.fc2.out == 64);
}

TEST_CASE("global_deform with zero output layer is the identity") {
  ModelConfig cfg = toy_config();
  ModelParams params = make_params(cfg);
  randomize(params, 31);
  std::fill(params.global.fc2.w.begin(), params.global.fc2.w.end(), 0.0);
  std::fill(params.global.fc2.b.begin(), params.global.fc2.b.end(), 0.0);
  ++params.revision;
  FeatureGrid grid = make_grid(cfg, 8);
  std::mt19937_64 rng(12);
  const Contour initial = random_contour(rng, cfg.n_vertices, {24, 24}, 8.0);
  const Contour coarse = global_deform(initial, {24, 24}, params, grid);
  for (int i = 0; i < cfg.n_vertices; ++i) CHECK(coarse.vertices[i] == initial.vertices[i]);
}

TEST_CASE("circular_conv identity, constant field and brute-force oracle") {
  const int n = 12, cin = 3;
  ConvKernel ident;
  ident.c_in = cin;
  ident.c_out = cin;
  ident.width = 5;
  ident.w.assign(static_cast<size_t>(cin) * cin * 5, 0.0);
  ident.b.assign(cin, 0.0);
  for (int c = 0; c < cin; ++c) ident.w[(c * cin + c) * 5 + 2] = 1.0;  // center tap

  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> feats(n * cin);
  for (double& x : feats) x = u(rng);
  const std::vector<double> same = circular_conv(feats, n, ident);
  for (size_t i = 0; i < feats.size(); ++i) CHECK(same[i] == feats[i]);

  ConvKernel avg;
  avg.c_in = cin;
  avg.c_out = 1;
  avg.width = 5;
  avg.w.assign(static_cast<size_t>(cin) * 5, 1.0 / (cin * 5));
  avg.b.assign(1, 0.0);
  std::vector<double> flat(n * cin, 2.5);
  const std::vector<double> avg_out = circular_conv(flat, n, avg);
  for (double v : avg_out) CHECK(v == doctest::Approx(2.5).epsilon(1e-12));

  ConvKernel k;
  k.c_in = cin;
  k.c_out = 4;
  k.width = 5;
  k.w.resize(static_cast<size_t>(cin) * 4 * 5);
  k.b.resize(4);
  for (double& x : k.w) x = u(rng);
  for (double& x : k.b) x = u(rng);
  const std::vector<double> got = circular_conv(feats, n, k);
  for (int i = 0; i < n; ++i) {
    for (int co = 0; co < 4; ++co) {
      double want = k.b[co];
      for (int t = 0; t < 5; ++t) {
        for (int ci = 0; ci < cin; ++ci) {
          want += k.w[(co * cin + ci) * 5 + t] * feats[((i + t - 2 + n) % n) * cin + ci];
        }
      }
      CHECK(got[i * 4 + co] == doctest::Approx(want).epsilon(1e-12));
    }
  }

  ConvKernel wide = k;
  wide.width = 15;
  wide.w.resize(static_cast<size_t>(cin) * 4 * 15);
  CHECK_THROWS_WITH_AS(circular_conv(feats, n, wide), doctest::Contains("KernelTooWide"), Error);
}

TEST_CASE("refine with zero head is the identity") {
  ModelConfig cfg = toy_config();
  ModelParams params = make_params(cfg);
  randomize(params, 55);
  std::fill(params.refine1.head.w.begin(), params.refine1.head.w.end(), 0.0);
  std::fill(params.refine1.head.b.begin(), params.refine1.head.b.end(), 0.0);
  ++params.revision;
  FeatureGrid grid = make_grid(cfg, 4);
  std::mt19937_64 rng(16);
  const Contour c = random_contour(rng, cfg.n_vertices, {24, 24}, 9.0);
  const Contour out = refine(c, params.refine1, params, grid);
  for (int i = 0; i < cfg.n_vertices; ++i) CHECK(out.vertices[i] == c.vertices[i]);
}

TEST_CASE("refine is bit-exactly shift-equivariant") {
  ModelConfig cfg = toy_config();
  ModelParams params = make_params(cfg);
  randomize(params, 21);
  FeatureGrid grid = make_grid(cfg, 22);
  std::mt19937_64 rng(23);
  const Contour c = random_contour(rng, cfg.n_vertices, {24, 24}, 9.0);

  for (int s : {1, 5, 11}) {
    Contour shifted;
    shifted.vertices.resize(cfg.n_vertices);
    for (int i = 0; i < cfg.n_vertices; ++i) {
      shifted.vertices[i] = c.vertices[(i + s) % cfg.n_vertices];
    }
    const Contour a = refine(shifted, params.refine1, params, grid);
    const Contour b = refine(c, params.refine1, params, grid);
    for (int i = 0; i < cfg.n_vertices; ++i) {
      CHECK(a.vertices[i].x == b.vertices[(i + s) % cfg.n_vertices].x);
      CHECK(a.vertices[i].y == b.vertices[(i + s) % cfg.n_vertices].y);
    }
  }
}

TEST_CASE("forward: degenerate zero-offset model and disabled refinement") {
  ModelConfig cfg = toy_config();
  ModelParams params = make_params(cfg);  // offset layers start at zero
  FeatureGrid grid = make_grid(cfg, 2);
  const Point2 center{24, 20};
  const ModelOutputs outs = forward(params, grid, center);
  for (const Contour* c : {&outs.stages.initial, &outs.stages.coarse, &outs.stages.iter1,
                           &outs.stages.iter2}) {
    for (const Point2& v : c->vertices) CHECK(dist(v, center) == 0.0);
  }

  // Randomize init + global, keep refinement heads zero: iter2 == coarse.
  randomize(params, 99);
  for (AffineLayer* head : {&params.refine1.head, &params.refine2.head}) {
    std::fill(head->w.begin(), head->w.end(), 0.0);
    std::fill(head->b.begin(), head->b.end(), 0.0);
  }
  ++params.revision;
  const ModelOutputs fast = forward(params, grid, center);
  for (int i = 0; i < cfg.n_vertices; ++i) {
    CHECK(fast.stages.iter2.vertices[i] == fast.stages.coarse.vertices[i]);
    CHECK(fast.stages.iter1.vertices[i] == fast.stages.coarse.vertices[i]);
  }
}

TEST_CASE("forward with a fixed-circle initialization") {
  ModelConfig cfg = toy_config();
  cfg.learned_init = false;
  cfg.use_global_deform = false;
  cfg.fixed_init_radius = 7.5;
  ModelParams params = make_params(cfg);
  FeatureGrid grid = make_grid(cfg, 2);
  const ModelOutputs outs = forward(params, grid, {24, 24});
  for (const Point2& v : outs.stages.initial.vertices) {
    CHECK(dist(v, {24, 24}) == doctest::Approx(7.5).epsilon(1e-12));
  }
  for (int i = 0; i < cfg.n_vertices; ++i) {
    CHECK(outs.stages.coarse.vertices[i] == outs.stages.initial.vertices[i]);
  }
}

TEST_CASE("forward determinism and translation behaviour") {
  ModelConfig cfg = toy_config();
  ModelParams params = make_params(cfg);
  randomize(params, 42);
  FeatureGrid grid = make_grid(cfg, 11);
  const Point2 center{22.5, 23.5};

  const ModelOutputs a = forward(params, grid, center);
  const ModelOutputs b = forward(params, grid, center);
  for (int i = 0; i < cfg.n_vertices; ++i) {
    CHECK(a.stages.iter2.vertices[i].x == b.stages.iter2.vertices[i].x);
    CHECK(a.stages.iter2.vertices[i].y == b.stages.iter2.vertices[i].y);
  }

  // Roll the grid one cell right/down and translate the center by one cell's
  // worth of pixels: every stage translates identically.
  const double cell_px_x = static_cast<double>(cfg.image_w - 1) / (cfg.grid_w - 1);
  const double cell_px_y = static_cast<double>(cfg.image_h - 1) / (cfg.grid_h - 1);
  FeatureGrid rolled = grid;
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) {
      for (int ch = 0; ch < grid.channels; ++ch) {
        rolled.at(r, c, ch) = grid.at((r - 1 + grid.height) % grid.height,
                                      (c - 1 + grid.width) % grid.width, ch);
      }
    }
  }
  const Point2 moved_center = center + Point2{cell_px_x, cell_px_y};
  const ModelOutputs moved = forward(params, rolled, moved_center);
  for (int i = 0; i < cfg.n_vertices; ++i) {
    CHECK(moved.stages.iter2.vertices[i].x ==
          doctest::Approx(a.stages.iter2.vertices[i].x + cell_px_x).epsilon(1e-9));
    CHECK(moved.stages.iter2.vertices[i].y ==
          doctest::Approx(a.stages.iter2.vertices[i].y + cell_px_y).epsilon(1e-9));
  }
}

TEST_CASE("backward: zero loss gradients and single-stage dependency structure") {
  ModelConfig cfg = toy_config();
  ModelParams params = make_params(cfg);
  randomize(params, 61);
  FeatureGrid grid = make_grid(cfg, 13);
  const ModelOutputs outs = forward(params, grid, {24, 24});

  ModelGrads g = make_zero_grads(params, grid);
  backward(params, grid, outs, StageGrads{}, g);
  for (TensorRef& t : tensor_refs(g)) {
    for (size_t k = 0; k < t.size; ++k) CHECK(t.data[k] == 0.0);
  }
  for (double v : g.grid) CHECK(v == 0.0);

  // Supervising only the initial stage reaches the init head and the grid,
  // nothing else.
  StageGrads sg;
  sg.d_initial.assign(cfg.n_vertices, Point2{0.5, -0.25});
  ModelGrads g2 = make_zero_grads(params, grid);
  backward(params, grid, outs, sg, g2);
  auto tensor_norm = [](const std::vector<double>& v) {
    double acc = 0;
    for (double x : v) acc += std::abs(x);
    return acc;
  };
  CHECK(tensor_norm(g2.init.fc1.w) > 0);
  CHECK(tensor_norm(g2.init.fc2.w) > 0);
  CHECK(tensor_norm(g2.grid) > 0);
  CHECK(tensor_norm(g2.global.fc1.w) == 0.0);
  CHECK(tensor_norm(g2.global.fc2.w) == 0.0);
  CHECK(tensor_norm(g2.refine1.conv.w) == 0.0);
  CHECK(tensor_norm(g2.refine2.head.w) == 0.0);
}

TEST_CASE("backward rejects a stale cache") {
  ModelConfig cfg = toy_config();
  ModelParams params = make_params(cfg);
  FeatureGrid grid = make_grid(cfg, 17);
  const ModelOutputs outs = forward(params, grid, {24, 24});
  ++params.revision;  // simulate an optimizer step
  ModelGrads g = make_zero_grads(params, grid);
  CHECK_THROWS_WITH_AS(backward(params, grid, outs, StageGrads{}, g),
                       doctest::Contains("StaleCache"), Error);
}

TEST_CASE("full finite-difference sweep over every parameter tensor") {
  GradCheckConfig cfg;
  cfg.seed = 3;
  cfg.n_vertices = 16;
  cfg.channels = 4;
  cfg.grid_hw = 16;
  const GradCheckReport rep = run_grad_check(cfg);
  CHECK(rep.items.size() >= 14);  // 5 loss checks + 12 parameter tensors + grid
  for (const GradCheckItem& item : rep.items) {
    INFO(item.name, " max_rel_err=", item.max_rel_err, " checked=", item.checked, " rejected=",
         item.rejected);
    CHECK(item.pass);
    CHECK(item.checked > 0);
  }
  CHECK(rep.all_pass);
}
