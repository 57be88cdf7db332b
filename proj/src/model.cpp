#include "e2ec/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace e2ec {

void validate(const ModelConfig& cfg) {
  if (cfg.n_vertices < 3) throw Error(Errc::config_error, "model needs N >= 3");
  if (cfg.channels < 1) throw Error(Errc::config_error, "model needs C >= 1");
  if (cfg.grid_h < 2 || cfg.grid_w < 2) throw Error(Errc::config_error, "grid must be at least 2x2");
  if (cfg.image_h < 2 || cfg.image_w < 2) throw Error(Errc::config_error, "image must be at least 2x2");
  if (cfg.kernel_width < 1 || cfg.kernel_width % 2 == 0) {
    throw Error(Errc::config_error, "kernel width must be odd and positive");
  }
  if (cfg.kernel_width > cfg.n_vertices) {
    throw Error(Errc::kernel_too_wide, "kernel wider than the contour");
  }
  if (cfg.init_hidden < 1 || cfg.refine_mid < 1) {
    throw Error(Errc::config_error, "hidden widths must be positive");
  }
  if (!(cfg.offset_scale > 0) || !std::isfinite(cfg.offset_scale)) {
    throw Error(Errc::config_error, "offset_scale must be positive and finite");
  }
}

namespace {

void init_affine(AffineLayer& l, int in, int out, std::mt19937_64& rng, bool zero) {
  l.in = in;
  l.out = out;
  l.w.assign(static_cast<size_t>(in) * out, 0.0);
  l.b.assign(out, 0.0);
  if (!zero) {
    const double a = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-a, a);
    for (double& x : l.w) x = u(rng);
  }
}

void init_conv(ConvKernel& k, int c_in, int c_out, int width, std::mt19937_64& rng) {
  k.c_in = c_in;
  k.c_out = c_out;
  k.width = width;
  k.w.assign(static_cast<size_t>(c_in) * c_out * width, 0.0);
  k.b.assign(c_out, 0.0);
  const double a = 1.0 / std::sqrt(static_cast<double>(c_in) * width);
  std::uniform_real_distribution<double> u(-a, a);
  for (double& x : k.w) x = u(rng);
}

std::vector<double> affine_forward(const AffineLayer& l, std::span<const double> x) {
  std::vector<double> y(l.out);
  for (int o = 0; o < l.out; ++o) {
    double acc = l.b[o];
    const double* row = &l.w[static_cast<size_t>(o) * l.in];
    for (int i = 0; i < l.in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
  return y;
}

// dx may be empty (input gradient not needed).
void affine_backward(const AffineLayer& l, std::span<const double> x, std::span<const double> dy,
                     AffineLayer& grad, std::span<double> dx) {
  for (int o = 0; o < l.out; ++o) {
    const double g = dy[o];
    grad.b[o] += g;
    double* wg = &grad.w[static_cast<size_t>(o) * l.in];
    const double* row = &l.w[static_cast<size_t>(o) * l.in];
    for (int i = 0; i < l.in; ++i) {
      wg[i] += g * x[i];
      if (!dx.empty()) dx[i] += g * row[i];
    }
  }
}

inline double relu(double x) { return x > 0 ? x : 0.0; }

void push_sign_bits(std::vector<int32_t>& sig, std::span<const double> v) {
  int32_t word = 0;
  int nb = 0;
  for (double x : v) {
    word = (word << 1) | (x > 0 ? 1 : 0);
    if (++nb == 31) {
      sig.push_back(word);
      word = 0;
      nb = 0;
    }
  }
  if (nb > 0) sig.push_back(word);
}

void push_samples(std::vector<int32_t>& sig, std::span<const SamplePoint> s) {
  for (const SamplePoint& p : s) {
    sig.push_back(p.ix);
    sig.push_back(p.iy);
    sig.push_back((p.clamped_x ? 2 : 0) | (p.clamped_y ? 1 : 0));
  }
}

}  // namespace

ModelParams make_params(const ModelConfig& cfg) {
  validate(cfg);
  ModelParams p;
  p.cfg = cfg;
  std::mt19937_64 rng(cfg.seed);
  const int n2 = cfg.n_vertices * 2;
  init_affine(p.init.fc1, cfg.channels, cfg.init_hidden, rng, false);
  init_affine(p.init.fc2, cfg.init_hidden, n2, rng, true);
  init_affine(p.global.fc1, (cfg.n_vertices + 1) * cfg.channels, n2, rng, false);
  init_affine(p.global.fc2, n2, n2, rng, true);
  for (RefineModuleParams* r : {&p.refine1, &p.refine2}) {
    init_conv(r->conv, cfg.channels + 2, cfg.refine_mid, cfg.kernel_width, rng);
    init_affine(r->head, cfg.refine_mid + 2, 2, rng, true);
  }
  return p;
}

FeatureGrid make_grid(const ModelConfig& cfg, uint64_t seed) {
  FeatureGrid g;
  g.height = cfg.grid_h;
  g.width = cfg.grid_w;
  g.channels = cfg.channels;
  g.values.resize(static_cast<size_t>(g.height) * g.width * g.channels);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (double& v : g.values) v = u(rng);
  return g;
}

namespace {

void add_tensor(std::vector<TensorRef>& out, const std::string& name, std::vector<double>& v,
                std::vector<int> shape) {
  out.push_back(TensorRef{name, v.data(), v.size(), std::move(shape)});
}

void affine_refs(std::vector<TensorRef>& out, const std::string& prefix, AffineLayer& l) {
  add_tensor(out, prefix + ".w", l.w, {l.out, l.in});
  add_tensor(out, prefix + ".b", l.b, {l.out});
}

void conv_refs(std::vector<TensorRef>& out, const std::string& prefix, ConvKernel& k) {
  add_tensor(out, prefix + ".w", k.w, {k.c_out, k.c_in, k.width});
  add_tensor(out, prefix + ".b", k.b, {k.c_out});
}

}  // namespace

std::vector<TensorRef> tensor_refs(ModelParams& p) {
  std::vector<TensorRef> out;
  affine_refs(out, "init.fc1", p.init.fc1);
  affine_refs(out, "init.fc2", p.init.fc2);
  affine_refs(out, "global.fc1", p.global.fc1);
  affine_refs(out, "global.fc2", p.global.fc2);
  conv_refs(out, "refine1.conv", p.refine1.conv);
  affine_refs(out, "refine1.head", p.refine1.head);
  conv_refs(out, "refine2.conv", p.refine2.conv);
  affine_refs(out, "refine2.head", p.refine2.head);
  return out;
}

TensorRef tensor_ref(FeatureGrid& g, const std::string& name) {
  return TensorRef{name, g.values.data(), g.values.size(), {g.height, g.width, g.channels}};
}

std::vector<double> sample_features(const FeatureGrid& g, std::span<const Point2> pts,
                                    std::vector<SamplePoint>* cache) {
  const int C = g.channels;
  std::vector<double> out(pts.size() * static_cast<size_t>(C));
  if (cache) cache->resize(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    SamplePoint s;
    const double px = std::clamp(pts[i].x, 0.0, static_cast<double>(g.width - 1));
    const double py = std::clamp(pts[i].y, 0.0, static_cast<double>(g.height - 1));
    s.clamped_x = px != pts[i].x;
    s.clamped_y = py != pts[i].y;
    s.ix = std::min(static_cast<int>(std::floor(px)), g.width - 2);
    s.iy = std::min(static_cast<int>(std::floor(py)), g.height - 2);
    s.fx = px - s.ix;
    s.fy = py - s.iy;
    for (int ch = 0; ch < C; ++ch) {
      const double a = g.at(s.iy, s.ix, ch);
      const double b = g.at(s.iy, s.ix + 1, ch);
      const double c = g.at(s.iy + 1, s.ix, ch);
      const double d = g.at(s.iy + 1, s.ix + 1, ch);
      out[i * C + ch] = (1 - s.fy) * ((1 - s.fx) * a + s.fx * b) + s.fy * ((1 - s.fx) * c + s.fx * d);
    }
    if (cache) (*cache)[i] = s;
  }
  return out;
}

void sample_features_backward(const FeatureGrid& g, std::span<const SamplePoint> cache,
                              std::span<const double> dfeat, std::vector<double>& grid_grad,
                              std::span<Point2> pts_grad) {
  const int C = g.channels;
  auto gidx = [&](int r, int c, int ch) {
    return (static_cast<size_t>(r) * g.width + c) * C + ch;
  };
  for (size_t i = 0; i < cache.size(); ++i) {
    const SamplePoint& s = cache[i];
    double dpx = 0, dpy = 0;
    for (int ch = 0; ch < C; ++ch) {
      const double df = dfeat[i * C + ch];
      if (df == 0) continue;
      grid_grad[gidx(s.iy, s.ix, ch)] += df * (1 - s.fy) * (1 - s.fx);
      grid_grad[gidx(s.iy, s.ix + 1, ch)] += df * (1 - s.fy) * s.fx;
      grid_grad[gidx(s.iy + 1, s.ix, ch)] += df * s.fy * (1 - s.fx);
      grid_grad[gidx(s.iy + 1, s.ix + 1, ch)] += df * s.fy * s.fx;
      const double a = g.at(s.iy, s.ix, ch);
      const double b = g.at(s.iy, s.ix + 1, ch);
      const double c = g.at(s.iy + 1, s.ix, ch);
      const double d = g.at(s.iy + 1, s.ix + 1, ch);
      dpx += df * ((1 - s.fy) * (b - a) + s.fy * (d - c));
      dpy += df * ((1 - s.fx) * (c - a) + s.fx * (d - b));
    }
    if (!pts_grad.empty()) {
      pts_grad[i].x += s.clamped_x ? 0.0 : dpx;
      pts_grad[i].y += s.clamped_y ? 0.0 : dpy;
    }
  }
}

std::vector<double> circular_conv(std::span<const double> feats, int n, const ConvKernel& k) {
  if (k.width > n) throw Error(Errc::kernel_too_wide, "circular_conv kernel wider than sequence");
  if (feats.size() != static_cast<size_t>(n) * k.c_in) {
    throw Error(Errc::dimension_mismatch, "circular_conv feature buffer size");
  }
  const int half = k.width / 2;
  std::vector<double> out(static_cast<size_t>(n) * k.c_out);
  for (int i = 0; i < n; ++i) {
    for (int co = 0; co < k.c_out; ++co) {
      double acc = k.b[co];
      for (int t = 0; t < k.width; ++t) {
        const int src = (i + t - half + n) % n;
        const double* in_row = &feats[static_cast<size_t>(src) * k.c_in];
        const double* w_row = &k.w[(static_cast<size_t>(co) * k.c_in) * k.width];
        for (int ci = 0; ci < k.c_in; ++ci) {
          acc += w_row[static_cast<size_t>(ci) * k.width + t] * in_row[ci];
        }
      }
      out[static_cast<size_t>(i) * k.c_out + co] = acc;
    }
  }
  return out;
}

namespace {

void circular_conv_backward(std::span<const double> feats, int n, const ConvKernel& k,
                            std::span<const double> dout, ConvKernel& grad,
                            std::span<double> dfeats) {
  const int half = k.width / 2;
  for (int i = 0; i < n; ++i) {
    for (int co = 0; co < k.c_out; ++co) {
      const double g = dout[static_cast<size_t>(i) * k.c_out + co];
      if (g == 0) continue;
      grad.b[co] += g;
      for (int t = 0; t < k.width; ++t) {
        const int src = (i + t - half + n) % n;
        for (int ci = 0; ci < k.c_in; ++ci) {
          const size_t wi = (static_cast<size_t>(co) * k.c_in + ci) * k.width + t;
          grad.w[wi] += g * feats[static_cast<size_t>(src) * k.c_in + ci];
          dfeats[static_cast<size_t>(src) * k.c_in + ci] += g * k.w[wi];
        }
      }
    }
  }
}

struct RefineCache {
  std::vector<Point2> input;
  std::vector<SamplePoint> samples;
  std::vector<double> feats;     // N*C
  std::vector<Point2> rel;       // centroid-relative normalized coordinates
  double scale = 1;              // max(bbox diagonal, 1)
  double bw = 0, bh = 0, diag = 0;
  int ix_min = 0, ix_max = 0, iy_min = 0, iy_max = 0;
  bool diag_above_one = false;
  std::vector<double> conv_in;   // N*(C+2)
  std::vector<double> conv_out;  // N*mid, pre-relu
  std::vector<double> head_in;   // N*(mid+2)
  std::vector<double> offsets;   // N*2
};

}  // namespace

struct ForwardCache {
  uint64_t revision = 0;
  Point2 center;
  std::vector<SamplePoint> center_sample;
  std::vector<double> center_feat;  // C
  std::vector<double> init_pre;     // hidden, pre-relu
  std::vector<double> init_off;     // 2N
  std::vector<SamplePoint> global_samples;
  std::vector<double> global_feats;   // N*C
  std::vector<double> global_concat;  // (N+1)*C
  std::vector<double> global_pre;     // 2N, pre-relu
  RefineCache r1, r2;
  std::vector<int32_t> signature;
};

namespace {

Point2 to_grid(const ModelConfig& cfg, Point2 px) {
  const double kx = static_cast<double>(cfg.grid_w - 1) / (cfg.image_w - 1);
  const double ky = static_cast<double>(cfg.grid_h - 1) / (cfg.image_h - 1);
  return {px.x * kx, px.y * ky};
}

Point2 grid_scale(const ModelConfig& cfg) {
  return {static_cast<double>(cfg.grid_w - 1) / (cfg.image_w - 1),
          static_cast<double>(cfg.grid_h - 1) / (cfg.image_h - 1)};
}

// Order-independent mean so that cyclic vertex shifts reproduce bit-identical
// normalization values.
double sorted_mean(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double acc = 0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

Contour fixed_circle_contour(const ModelConfig& cfg, Point2 center) {
  const double r =
      cfg.fixed_init_radius > 0 ? cfg.fixed_init_radius : 0.25 * std::min(cfg.image_h, cfg.image_w);
  Contour c;
  c.vertices.resize(cfg.n_vertices);
  for (int i = 0; i < cfg.n_vertices; ++i) {
    const double a = 2.0 * std::numbers::pi * i / cfg.n_vertices;
    c.vertices[i] = center + Point2{r * std::cos(a), r * std::sin(a)};
  }
  return c;
}

void refine_forward(const Contour& in, const RefineModuleParams& R, const ModelParams& P,
                    const FeatureGrid& grid, RefineCache& rc, Contour& out,
                    std::vector<int32_t>& sig) {
  const ModelConfig& cfg = P.cfg;
  const int n = in.size();
  const int C = cfg.channels;
  const int mid = cfg.refine_mid;
  rc.input = in.vertices;

  std::vector<double> xs(n), ys(n);
  for (int i = 0; i < n; ++i) {
    xs[i] = in.vertices[i].x;
    ys[i] = in.vertices[i].y;
  }
  const Point2 centroid{sorted_mean(xs), sorted_mean(ys)};
  rc.ix_min = rc.ix_max = rc.iy_min = rc.iy_max = 0;
  for (int i = 1; i < n; ++i) {
    if (xs[i] < xs[rc.ix_min]) rc.ix_min = i;
    if (xs[i] > xs[rc.ix_max]) rc.ix_max = i;
    if (ys[i] < ys[rc.iy_min]) rc.iy_min = i;
    if (ys[i] > ys[rc.iy_max]) rc.iy_max = i;
  }
  rc.bw = xs[rc.ix_max] - xs[rc.ix_min];
  rc.bh = ys[rc.iy_max] - ys[rc.iy_min];
  rc.diag = std::sqrt(rc.bw * rc.bw + rc.bh * rc.bh);
  rc.diag_above_one = rc.diag > 1.0;
  rc.scale = rc.diag_above_one ? rc.diag : 1.0;

  rc.rel.resize(n);
  for (int i = 0; i < n; ++i) {
    rc.rel[i] = (1.0 / rc.scale) * (in.vertices[i] - centroid);
  }

  std::vector<Point2> gpts(n);
  for (int i = 0; i < n; ++i) gpts[i] = to_grid(cfg, in.vertices[i]);
  rc.feats = sample_features(grid, gpts, &rc.samples);

  rc.conv_in.assign(static_cast<size_t>(n) * (C + 2), 0.0);
  for (int i = 0; i < n; ++i) {
    double* row = &rc.conv_in[static_cast<size_t>(i) * (C + 2)];
    for (int ch = 0; ch < C; ++ch) row[ch] = rc.feats[static_cast<size_t>(i) * C + ch];
    row[C] = rc.rel[i].x;
    row[C + 1] = rc.rel[i].y;
  }
  rc.conv_out = circular_conv(rc.conv_in, n, R.conv);

  rc.head_in.assign(static_cast<size_t>(n) * (mid + 2), 0.0);
  rc.offsets.assign(static_cast<size_t>(n) * 2, 0.0);
  out.vertices.resize(n);
  for (int i = 0; i < n; ++i) {
    double* hin = &rc.head_in[static_cast<size_t>(i) * (mid + 2)];
    for (int m = 0; m < mid; ++m) hin[m] = relu(rc.conv_out[static_cast<size_t>(i) * mid + m]);
    hin[mid] = rc.rel[i].x;
    hin[mid + 1] = rc.rel[i].y;
    const std::vector<double> off =
        affine_forward(R.head, std::span<const double>(hin, mid + 2));
    rc.offsets[i * 2] = off[0];
    rc.offsets[i * 2 + 1] = off[1];
    out.vertices[i] = in.vertices[i] + cfg.offset_scale * Point2{off[0], off[1]};
  }

  push_samples(sig, rc.samples);
  sig.push_back(rc.ix_min);
  sig.push_back(rc.ix_max);
  sig.push_back(rc.iy_min);
  sig.push_back(rc.iy_max);
  sig.push_back(rc.diag_above_one ? 1 : 0);
  push_sign_bits(sig, rc.conv_out);
}

// Returns the gradient w.r.t. the module's input contour.
std::vector<Point2> refine_backward(const RefineCache& rc, const RefineModuleParams& R,
                                    const ModelParams& P, const FeatureGrid& grid,
                                    std::span<const Point2> d_out, RefineModuleParams& gR,
                                    std::vector<double>& grid_grad) {
  const ModelConfig& cfg = P.cfg;
  const int n = static_cast<int>(rc.input.size());
  const int C = cfg.channels;
  const int mid = cfg.refine_mid;

  std::vector<Point2> d_in(n, Point2{});
  std::vector<Point2> d_rel(n, Point2{});
  std::vector<double> d_conv_out(static_cast<size_t>(n) * mid, 0.0);

  std::vector<double> d_hin(mid + 2);
  for (int i = 0; i < n; ++i) {
    d_in[i] = d_in[i] + d_out[i];  // identity path
    const double d_off[2] = {cfg.offset_scale * d_out[i].x, cfg.offset_scale * d_out[i].y};
    std::fill(d_hin.begin(), d_hin.end(), 0.0);
    const double* hin = &rc.head_in[static_cast<size_t>(i) * (mid + 2)];
    affine_backward(R.head, std::span<const double>(hin, mid + 2),
                    std::span<const double>(d_off, 2), gR.head, d_hin);
    for (int m = 0; m < mid; ++m) {
      if (rc.conv_out[static_cast<size_t>(i) * mid + m] > 0) {
        d_conv_out[static_cast<size_t>(i) * mid + m] += d_hin[m];
      }
    }
    d_rel[i].x += d_hin[mid];
    d_rel[i].y += d_hin[mid + 1];
  }

  std::vector<double> d_conv_in(rc.conv_in.size(), 0.0);
  circular_conv_backward(rc.conv_in, n, R.conv, d_conv_out, gR.conv, d_conv_in);

  std::vector<double> d_feats(static_cast<size_t>(n) * C, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* row = &d_conv_in[static_cast<size_t>(i) * (C + 2)];
    for (int ch = 0; ch < C; ++ch) d_feats[static_cast<size_t>(i) * C + ch] = row[ch];
    d_rel[i].x += row[C];
    d_rel[i].y += row[C + 1];
  }

  std::vector<Point2> d_gpts(n, Point2{});
  sample_features_backward(grid, rc.samples, d_feats, grid_grad, d_gpts);
  const Point2 ks = grid_scale(cfg);
  for (int i = 0; i < n; ++i) {
    d_in[i].x += ks.x * d_gpts[i].x;
    d_in[i].y += ks.y * d_gpts[i].y;
  }

  // Normalized relative coordinates: rel_i = (c_i - mean(c)) / s.
  Point2 sum_g{};
  double t_scale = 0;
  for (int i = 0; i < n; ++i) {
    sum_g = sum_g + d_rel[i];
    t_scale += dot(d_rel[i], rc.rel[i]);
  }
  t_scale /= rc.scale;
  const double inv_s = 1.0 / rc.scale;
  for (int i = 0; i < n; ++i) {
    d_in[i] = d_in[i] + inv_s * d_rel[i] - (inv_s / n) * sum_g;
  }
  if (rc.diag_above_one) {
    const double dw = rc.bw / rc.diag;
    const double dh = rc.bh / rc.diag;
    d_in[rc.ix_max].x -= t_scale * dw;
    d_in[rc.ix_min].x += t_scale * dw;
    d_in[rc.iy_max].y -= t_scale * dh;
    d_in[rc.iy_min].y += t_scale * dh;
  }
  return d_in;
}

}  // namespace

ModelOutputs forward(const ModelParams& params, const FeatureGrid& grid, Point2 center) {
  const ModelConfig& cfg = params.cfg;
  const int n = cfg.n_vertices;
  const int C = cfg.channels;
  auto cache = std::make_shared<ForwardCache>();
  ForwardCache& fc = *cache;
  fc.revision = params.revision;
  fc.center = center;

  const Point2 gc = to_grid(cfg, center);
  fc.center_feat = sample_features(grid, std::span<const Point2>(&gc, 1), &fc.center_sample);
  push_samples(fc.signature, fc.center_sample);

  ModelOutputs out;
  // Initial contour.
  if (cfg.learned_init) {
    fc.init_pre = affine_forward(params.init.fc1, fc.center_feat);
    std::vector<double> h(fc.init_pre.size());
    for (size_t i = 0; i < h.size(); ++i) h[i] = relu(fc.init_pre[i]);
    fc.init_off = affine_forward(params.init.fc2, h);
    out.stages.initial.vertices.resize(n);
    for (int i = 0; i < n; ++i) {
      out.stages.initial.vertices[i] =
          center + cfg.offset_scale * Point2{fc.init_off[i * 2], fc.init_off[i * 2 + 1]};
    }
    push_sign_bits(fc.signature, fc.init_pre);
  } else {
    out.stages.initial = fixed_circle_contour(cfg, center);
  }

  // Global deformation.
  if (cfg.use_global_deform) {
    std::vector<Point2> gpts(n);
    for (int i = 0; i < n; ++i) gpts[i] = to_grid(cfg, out.stages.initial.vertices[i]);
    fc.global_feats = sample_features(grid, gpts, &fc.global_samples);
    fc.global_concat.assign(static_cast<size_t>(n + 1) * C, 0.0);
    std::copy(fc.global_feats.begin(), fc.global_feats.end(), fc.global_concat.begin());
    std::copy(fc.center_feat.begin(), fc.center_feat.end(),
              fc.global_concat.begin() + static_cast<size_t>(n) * C);
    fc.global_pre = affine_forward(params.global.fc1, fc.global_concat);
    std::vector<double> h(fc.global_pre.size());
    for (size_t i = 0; i < h.size(); ++i) h[i] = relu(fc.global_pre[i]);
    const std::vector<double> off = affine_forward(params.global.fc2, h);
    out.stages.coarse.vertices.resize(n);
    for (int i = 0; i < n; ++i) {
      out.stages.coarse.vertices[i] = out.stages.initial.vertices[i] +
                                      cfg.offset_scale * Point2{off[i * 2], off[i * 2 + 1]};
    }
    push_samples(fc.signature, fc.global_samples);
    push_sign_bits(fc.signature, fc.global_pre);
  } else {
    out.stages.coarse = out.stages.initial;
  }

  refine_forward(out.stages.coarse, params.refine1, params, grid, fc.r1, out.stages.iter1,
                 fc.signature);
  refine_forward(out.stages.iter1, params.refine2, params, grid, fc.r2, out.stages.iter2,
                 fc.signature);
  out.cache = std::move(cache);
  return out;
}

Contour init_contour(Point2 center, const ModelParams& params, const FeatureGrid& grid) {
  const ModelConfig& cfg = params.cfg;
  if (!cfg.learned_init) return fixed_circle_contour(cfg, center);
  const Point2 gc = to_grid(cfg, center);
  const std::vector<double> cfeat = sample_features(grid, std::span<const Point2>(&gc, 1));
  std::vector<double> h = affine_forward(params.init.fc1, cfeat);
  for (double& x : h) x = relu(x);
  const std::vector<double> off = affine_forward(params.init.fc2, h);
  Contour out;
  out.vertices.resize(cfg.n_vertices);
  for (int i = 0; i < cfg.n_vertices; ++i) {
    out.vertices[i] = center + cfg.offset_scale * Point2{off[i * 2], off[i * 2 + 1]};
  }
  return out;
}

Contour global_deform(const Contour& initial, Point2 center, const ModelParams& params,
                      const FeatureGrid& grid) {
  const ModelConfig& cfg = params.cfg;
  if (initial.size() != cfg.n_vertices) {
    throw Error(Errc::length_mismatch, "global_deform contour size != N");
  }
  const int n = cfg.n_vertices;
  const int C = cfg.channels;
  const Point2 gc = to_grid(cfg, center);
  const std::vector<double> cfeat = sample_features(grid, std::span<const Point2>(&gc, 1));
  std::vector<Point2> gpts(n);
  for (int i = 0; i < n; ++i) gpts[i] = to_grid(cfg, initial.vertices[i]);
  const std::vector<double> vfeats = sample_features(grid, gpts);
  std::vector<double> concat(static_cast<size_t>(n + 1) * C);
  std::copy(vfeats.begin(), vfeats.end(), concat.begin());
  std::copy(cfeat.begin(), cfeat.end(), concat.begin() + static_cast<size_t>(n) * C);
  std::vector<double> h = affine_forward(params.global.fc1, concat);
  for (double& x : h) x = relu(x);
  const std::vector<double> off = affine_forward(params.global.fc2, h);
  Contour out;
  out.vertices.resize(n);
  for (int i = 0; i < n; ++i) {
    out.vertices[i] =
        initial.vertices[i] + cfg.offset_scale * Point2{off[i * 2], off[i * 2 + 1]};
  }
  return out;
}

Contour refine(const Contour& contour, const RefineModuleParams& module, const ModelParams& params,
               const FeatureGrid& grid) {
  RefineCache rc;
  Contour out;
  std::vector<int32_t> sig;
  refine_forward(contour, module, params, grid, rc, out, sig);
  return out;
}

std::vector<int32_t> forward_signature(const ModelOutputs& out) {
  return out.cache ? out.cache->signature : std::vector<int32_t>{};
}

ModelGrads make_zero_grads(const ModelParams& p, const FeatureGrid& g) {
  ModelGrads z;
  auto zero_affine = [](const AffineLayer& l) {
    AffineLayer out;
    out.in = l.in;
    out.out = l.out;
    out.w.assign(l.w.size(), 0.0);
    out.b.assign(l.b.size(), 0.0);
    return out;
  };
  auto zero_conv = [](const ConvKernel& k) {
    ConvKernel out;
    out.c_in = k.c_in;
    out.c_out = k.c_out;
    out.width = k.width;
    out.w.assign(k.w.size(), 0.0);
    out.b.assign(k.b.size(), 0.0);
    return out;
  };
  z.init.fc1 = zero_affine(p.init.fc1);
  z.init.fc2 = zero_affine(p.init.fc2);
  z.global.fc1 = zero_affine(p.global.fc1);
  z.global.fc2 = zero_affine(p.global.fc2);
  z.refine1.conv = zero_conv(p.refine1.conv);
  z.refine1.head = zero_affine(p.refine1.head);
  z.refine2.conv = zero_conv(p.refine2.conv);
  z.refine2.head = zero_affine(p.refine2.head);
  z.grid.assign(g.values.size(), 0.0);
  return z;
}

std::vector<TensorRef> tensor_refs(ModelGrads& g) {
  std::vector<TensorRef> out;
  affine_refs(out, "init.fc1", g.init.fc1);
  affine_refs(out, "init.fc2", g.init.fc2);
  affine_refs(out, "global.fc1", g.global.fc1);
  affine_refs(out, "global.fc2", g.global.fc2);
  conv_refs(out, "refine1.conv", g.refine1.conv);
  affine_refs(out, "refine1.head", g.refine1.head);
  conv_refs(out, "refine2.conv", g.refine2.conv);
  affine_refs(out, "refine2.head", g.refine2.head);
  return out;
}

void backward(const ModelParams& params, const FeatureGrid& grid, const ModelOutputs& out,
              const StageGrads& stage_grads, ModelGrads& accum) {
  if (!out.cache) throw Error(Errc::stale_cache, "backward without a forward cache");
  const ForwardCache& fc = *out.cache;
  if (fc.revision != params.revision) {
    throw Error(Errc::stale_cache, "parameters changed since the forward pass");
  }
  const ModelConfig& cfg = params.cfg;
  const int n = cfg.n_vertices;
  const int C = cfg.channels;

  auto stage = [&](const std::vector<Point2>& g) -> std::vector<Point2> {
    if (g.empty()) return std::vector<Point2>(n, Point2{});
    if (static_cast<int>(g.size()) != n) {
      throw Error(Errc::length_mismatch, "stage gradient size != N");
    }
    return g;
  };

  std::vector<double> d_center_feat(C, 0.0);

  // iter2 -> iter1
  const std::vector<Point2> g_iter2 = stage(stage_grads.d_iter2);
  std::vector<Point2> g_iter1 =
      refine_backward(fc.r2, params.refine2, params, grid, g_iter2, accum.refine2, accum.grid);
  const std::vector<Point2> s_iter1 = stage(stage_grads.d_iter1);
  for (int i = 0; i < n; ++i) g_iter1[i] = g_iter1[i] + s_iter1[i];

  // iter1 -> coarse
  std::vector<Point2> g_coarse =
      refine_backward(fc.r1, params.refine1, params, grid, g_iter1, accum.refine1, accum.grid);
  const std::vector<Point2> s_coarse = stage(stage_grads.d_coarse);
  for (int i = 0; i < n; ++i) g_coarse[i] = g_coarse[i] + s_coarse[i];

  // coarse -> initial
  std::vector<Point2> g_initial(n, Point2{});
  if (cfg.use_global_deform) {
    std::vector<double> d_off(static_cast<size_t>(n) * 2);
    for (int i = 0; i < n; ++i) {
      g_initial[i] = g_initial[i] + g_coarse[i];  // identity path
      d_off[i * 2] = cfg.offset_scale * g_coarse[i].x;
      d_off[i * 2 + 1] = cfg.offset_scale * g_coarse[i].y;
    }
    std::vector<double> h(fc.global_pre.size());
    for (size_t i = 0; i < h.size(); ++i) h[i] = relu(fc.global_pre[i]);
    std::vector<double> d_h(h.size(), 0.0);
    affine_backward(params.global.fc2, h, d_off, accum.global.fc2, d_h);
    for (size_t i = 0; i < d_h.size(); ++i) {
      if (fc.global_pre[i] <= 0) d_h[i] = 0;
    }
    std::vector<double> d_concat(fc.global_concat.size(), 0.0);
    affine_backward(params.global.fc1, fc.global_concat, d_h, accum.global.fc1, d_concat);
    // Split the concatenated gradient back into vertex features + center feature.
    std::vector<Point2> d_gpts(n, Point2{});
    sample_features_backward(grid, fc.global_samples,
                             std::span<const double>(d_concat.data(), static_cast<size_t>(n) * C),
                             accum.grid, d_gpts);
    const Point2 ks = grid_scale(cfg);
    for (int i = 0; i < n; ++i) {
      g_initial[i].x += ks.x * d_gpts[i].x;
      g_initial[i].y += ks.y * d_gpts[i].y;
    }
    for (int ch = 0; ch < C; ++ch) {
      d_center_feat[ch] += d_concat[static_cast<size_t>(n) * C + ch];
    }
  } else {
    g_initial = g_coarse;
  }
  const std::vector<Point2> s_initial = stage(stage_grads.d_initial);
  for (int i = 0; i < n; ++i) g_initial[i] = g_initial[i] + s_initial[i];

  // initial -> init head (the center position itself is an input, not a parameter)
  if (cfg.learned_init) {
    std::vector<double> d_off(static_cast<size_t>(n) * 2);
    for (int i = 0; i < n; ++i) {
      d_off[i * 2] = cfg.offset_scale * g_initial[i].x;
      d_off[i * 2 + 1] = cfg.offset_scale * g_initial[i].y;
    }
    std::vector<double> h(fc.init_pre.size());
    for (size_t i = 0; i < h.size(); ++i) h[i] = relu(fc.init_pre[i]);
    std::vector<double> d_h(h.size(), 0.0);
    affine_backward(params.init.fc2, h, d_off, accum.init.fc2, d_h);
    for (size_t i = 0; i < d_h.size(); ++i) {
      if (fc.init_pre[i] <= 0) d_h[i] = 0;
    }
    affine_backward(params.init.fc1, fc.center_feat, d_h, accum.init.fc1, d_center_feat);
  }

  sample_features_backward(grid, fc.center_sample, d_center_feat, accum.grid, {});
}

}  // namespace e2ec
