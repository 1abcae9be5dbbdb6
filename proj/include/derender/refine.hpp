#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "derender/diffrender.hpp"

namespace derender {

struct RefineConfig {
  int iterations = 200;
  double learning_rate = 0.02;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Adam steps on font logits are this many times the learning rate. With
  // equal steps the free affines bend a wrong font toward the target faster
  // than the attention can move off it.
  double font_step_scale = 5.0;
  // Echoed in reports. The optimizer itself draws no random numbers, so a
  // run is a pure function of its inputs.
  std::uint64_t seed = 0;
};

void validate(const RefineConfig& config);

struct RefineReport {
  std::vector<double> loss_trace;  // loss of the iterate evaluated at each step
  int best_iteration = 0;
  double initial_l1 = 0;
  double final_l1 = 0;  // loss of the returned (best) iterate
  double initial_psnr = 0;
  double final_psnr = 0;
  double wall_time = 0;  // seconds
  bool failed = false;   // set when a non-finite value aborted the run
  std::string error;
};

struct RefineResult {
  RefinableParams params;
  RefineReport report;
};

using FrozenGroups = std::set<ParamGroup>;

/// Called after every iteration with (iteration, loss). Returning false stops
/// the run early; the best iterate so far is still returned.
using RefineProgress = std::function<bool(int, double)>;

/// Adam on the flat parameter vector; returns the lowest-loss iterate.
RefineResult refine(const RefinableParams& initial, const GlyphAtlas& atlas, const RasterImage& background_crop,
                    const RasterImage& target, const RefineConfig& refine_config, const DiffConfig& diff_config,
                    const FrozenGroups& frozen = {}, const RefineProgress& progress = {});

/// refine() with the listed parameter groups held fixed.
RefineReport ablate(const RefinableParams& initial, const GlyphAtlas& atlas, const RasterImage& background_crop,
                    const RasterImage& target, const RefineConfig& refine_config, const DiffConfig& diff_config,
                    const FrozenGroups& frozen);

/// PSNR of the reconstruction of `params` against `target`.
double reconstruction_psnr(const RefinableParams& params, const GlyphAtlas& atlas,
                           const RasterImage& background_crop, const RasterImage& target,
                           const DiffConfig& config);

}  // namespace derender
