#include "derender/refine.hpp"

#include <chrono>

#include <fmt/format.h>

namespace derender {

void validate(const RefineConfig& c) {
  if (c.iterations < 1) throw Error("refine", "iterations must be >= 1");
  if (!(c.learning_rate > 0)) throw Error("refine", "learning_rate must be > 0");
  if (!(c.adam_beta1 >= 0 && c.adam_beta1 < 1) || !(c.adam_beta2 >= 0 && c.adam_beta2 < 1)) {
    throw Error("refine", "Adam betas must lie in [0, 1)");
  }
  if (!(c.adam_eps > 0)) throw Error("refine", "adam_eps must be > 0");
  if (!(c.font_step_scale > 0)) throw Error("refine", "font_step_scale must be > 0");
}

double reconstruction_psnr(const RefinableParams& params, const GlyphAtlas& atlas,
                           const RasterImage& background_crop, const RasterImage& target,
                           const DiffConfig& config) {
  return psnr(reconstruct(params, atlas, background_crop, config), target.cast<double>());
}

RefineResult refine(const RefinableParams& initial, const GlyphAtlas& atlas, const RasterImage& background_crop,
                    const RasterImage& target, const RefineConfig& rc, const DiffConfig& dc,
                    const FrozenGroups& frozen, const RefineProgress& progress) {
  validate(rc);
  const auto start = std::chrono::steady_clock::now();

  RefinableParams current = initial;
  Eigen::VectorXd theta = pack(initial);
  Eigen::VectorXd mask = Eigen::VectorXd::Ones(theta.size());  // per-coordinate step scale
  for (const auto& span : param_layout(initial)) {
    if (frozen.count(span.group)) mask.segment(span.offset, span.size).setZero();
    if (span.group == ParamGroup::font) mask.segment(span.offset, span.size) *= rc.font_step_scale;
  }
  Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());

  RefineResult result{initial, {}};
  auto& report = result.report;
  double best = std::numeric_limits<double>::infinity();
  double b1t = 1, b2t = 1;
  for (int it = 0; it < rc.iterations; ++it) {
    LossAndGradients lg;
    try {
      lg = loss_and_gradients(current, atlas, background_crop, target, dc);
    } catch (const Error& err) {
      report.failed = true;
      report.error = err.what();
      break;
    }
    report.loss_trace.push_back(lg.loss);
    if (lg.loss < best) {
      best = lg.loss;
      report.best_iteration = it;
      result.params = current;
    }
    if (progress && !progress(it, lg.loss)) break;

    const Eigen::VectorXd g = lg.grads.values.cwiseProduct(mask);
    m = rc.adam_beta1 * m + (1 - rc.adam_beta1) * g;
    v = rc.adam_beta2 * v + (1 - rc.adam_beta2) * g.cwiseAbs2();
    b1t *= rc.adam_beta1;
    b2t *= rc.adam_beta2;
    const Eigen::ArrayXd m_hat = m.array() / (1 - b1t);
    const Eigen::ArrayXd v_hat = v.array() / (1 - b2t);
    theta -= (rc.learning_rate * m_hat / (v_hat.sqrt() + rc.adam_eps)).matrix().cwiseProduct(mask);
    unpack(theta, current);
  }

  if (report.loss_trace.empty()) {
    report.initial_l1 = report.final_l1 = std::numeric_limits<double>::quiet_NaN();
  } else {
    report.initial_l1 = report.loss_trace.front();
    report.final_l1 = best;
    report.initial_psnr = reconstruction_psnr(initial, atlas, background_crop, target, dc);
    report.final_psnr = reconstruction_psnr(result.params, atlas, background_crop, target, dc);
  }
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

RefineReport ablate(const RefinableParams& initial, const GlyphAtlas& atlas, const RasterImage& background_crop,
                    const RasterImage& target, const RefineConfig& rc, const DiffConfig& dc,
                    const FrozenGroups& frozen) {
  return refine(initial, atlas, background_crop, target, rc, dc, frozen).report;
}

}  // namespace derender
