#pragma once

// Contour network: learnable feature grid, contour-initialization head,
// global deformation module and two circular-convolution refinement modules,
// with exact hand-derived reverse-mode gradients.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "e2ec/geometry.hpp"
#include "e2ec/losses.hpp"

namespace e2ec {

struct ModelConfig {
  int n_vertices = 128;  // N
  int channels = 8;      // C, feature channels per grid cell
  int grid_h = 32;
  int grid_w = 32;
  int image_h = 96;  // pixel extent the grid is stretched over
  int image_w = 96;
  int init_hidden = 64;  // hidden width of the initialization head
  int refine_mid = 16;   // conv output channels in the refinement modules
  int kernel_width = 9;
  double offset_scale = 1.0;      // multiplier on every regressed offset
  bool learned_init = true;       // false: fixed circle around the center
  bool use_global_deform = true;  // false: coarse == initial
  double fixed_init_radius = 0;   // <= 0 selects 0.25 * min(image_h, image_w)
  uint64_t seed = 1;
};

void validate(const ModelConfig& cfg);

/// Learnable per-instance feature field. Cell (0,0) sits at pixel (0,0) and
/// cell (H-1, W-1) at pixel (image_w-1, image_h-1).
struct FeatureGrid {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;  // ((r*width)+c)*channels + ch

  double& at(int r, int c, int ch) {
    return values[(static_cast<size_t>(r) * width + c) * channels + ch];
  }
  double at(int r, int c, int ch) const {
    return values[(static_cast<size_t>(r) * width + c) * channels + ch];
  }
};

/// y = W x + b with W stored row-major (out x in).
struct AffineLayer {
  int in = 0;
  int out = 0;
  std::vector<double> w;
  std::vector<double> b;
};

/// 1-D kernel over the vertex dimension, w[(co*c_in + ci)*width + t].
struct ConvKernel {
  int c_in = 0;
  int c_out = 0;
  int width = 0;
  std::vector<double> w;
  std::vector<double> b;
};

struct InitHead {
  AffineLayer fc1;  // C -> hidden
  AffineLayer fc2;  // hidden -> N*2
};

struct GlobalDeformParams {
  AffineLayer fc1;  // (N+1)*C -> N*2
  AffineLayer fc2;  // N*2 -> N*2
};

struct RefineModuleParams {
  ConvKernel conv;   // (C+2) -> refine_mid, periodic over N vertices
  AffineLayer head;  // (refine_mid + 2) -> 2, applied per vertex
};

struct ModelParams {
  ModelConfig cfg;
  InitHead init;
  GlobalDeformParams global;
  RefineModuleParams refine1;
  RefineModuleParams refine2;
  // Bumped on every optimizer update; forward caches record it so a stale
  // cache cannot be paired with mutated parameters.
  uint64_t revision = 0;
};

/// Seeded parameter construction. Offset-producing output layers start at
/// zero so the predicted contour begins as the degenerate point at the
/// center; the remaining layers get small uniform random weights.
ModelParams make_params(const ModelConfig& cfg);
FeatureGrid make_grid(const ModelConfig& cfg, uint64_t seed);

struct TensorRef {
  std::string name;
  double* data = nullptr;
  size_t size = 0;
  std::vector<int> shape;
};

std::vector<TensorRef> tensor_refs(ModelParams& p);
TensorRef tensor_ref(FeatureGrid& g, const std::string& name);

// ---------------------------------------------------------------------------
// Feature sampling (bilinear, clamped)

/// Cached interpolation state for one sampled point.
struct SamplePoint {
  int ix = 0;
  int iy = 0;
  double fx = 0;
  double fy = 0;
  bool clamped_x = false;
  bool clamped_y = false;
};

/// Bilinear interpolation of grid values at each point (grid coordinates,
/// clamped into bounds). Output is pts.size()*channels.
std::vector<double> sample_features(const FeatureGrid& g, std::span<const Point2> pts,
                                    std::vector<SamplePoint>* cache = nullptr);

/// Accumulates d(loss)/d(grid values) into grid_grad and the exact spatial
/// derivative d(loss)/d(point) into pts_grad (zero along clamped axes).
void sample_features_backward(const FeatureGrid& g, std::span<const SamplePoint> cache,
                              std::span<const double> dfeat, std::vector<double>& grid_grad,
                              std::span<Point2> pts_grad);

/// Periodic 1-D convolution along the vertex dimension. feats holds n rows of
/// k.c_in channels. Throws KernelTooWide if k.width > n.
std::vector<double> circular_conv(std::span<const double> feats, int n, const ConvKernel& k);

// ---------------------------------------------------------------------------
// Forward / backward

struct ForwardCache;  // internal; owned by ModelOutputs

struct ModelOutputs {
  ContourStages stages;
  std::shared_ptr<const ForwardCache> cache;
};

/// initial -> coarse -> iter1 -> iter2. The center is the (ground-truth)
/// instance center; it is an input, not a parameter.
ModelOutputs forward(const ModelParams& params, const FeatureGrid& grid, Point2 center);

/// Standalone stage evaluations (forward() composes these).
Contour init_contour(Point2 center, const ModelParams& params, const FeatureGrid& grid);
Contour global_deform(const Contour& initial, Point2 center, const ModelParams& params,
                      const FeatureGrid& grid);
Contour refine(const Contour& contour, const RefineModuleParams& module,
               const ModelParams& params, const FeatureGrid& grid);

/// Discrete decisions taken during the forward pass (interpolation cells,
/// clamp and relu masks, bbox extremes). Used by finite-difference checks to
/// reject probes that cross a non-smooth boundary.
std::vector<int32_t> forward_signature(const ModelOutputs& out);

struct StageGrads {
  std::vector<Point2> d_initial;
  std::vector<Point2> d_coarse;
  std::vector<Point2> d_iter1;
  std::vector<Point2> d_iter2;
};

struct ModelGrads {
  InitHead init;
  GlobalDeformParams global;
  RefineModuleParams refine1;
  RefineModuleParams refine2;
  std::vector<double> grid;  // same layout as FeatureGrid.values
};

ModelGrads make_zero_grads(const ModelParams& p, const FeatureGrid& g);
std::vector<TensorRef> tensor_refs(ModelGrads& g);

/// Exact reverse-mode gradients for every parameter and the feature grid,
/// accumulating the supervision arriving at all four stages. Throws
/// StaleCache if the parameters changed since the forward pass.
void backward(const ModelParams& params, const FeatureGrid& grid, const ModelOutputs& out,
              const StageGrads& stage_grads, ModelGrads& accum);

}  // namespace e2ec
