#pragma once

#include <Eigen/Core>

#include <string>
#include <string_view>
#include <vector>

#include "derender/atlas.hpp"
#include "derender/compositor.hpp"
#include "derender/imaging.hpp"

namespace derender {

using Affine6 = Eigen::Matrix<double, 6, 1>;  // [m00 m01 m10 m11 tx ty] displacements

struct DiffConfig {
  int top_k_fonts = 20;
  double db_steepness = 50;
  double crop_padding = 0.25;  // fraction of the word box, per axis
  int min_crop_padding = 8;    // px
};

enum class ParamGroup { font, placement, color, border, shadow };

std::string_view group_name(ParamGroup g);

/// Fixed placement of one character inside the crop: its cell center maps to
/// `center` (continuous crop coordinates) at `cell_scale` crop px per cell px.
struct CharAnchor {
  int glyph_index = 0;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double cell_scale = 1;
  double ref_length = 1;  // px; affine entries are displacements at this distance
};

/// Unconstrained parameters of one word. Decoded values come from softmax
/// (font, border bin), sigmoid (colors, visibilities) and softplus (blur).
///
/// Affines are stored as displacements: M = I + [m00 m01; m10 m11] / L and
/// t = (tx, ty) px, acting about the word center (word affine) or the
/// character center (char affines).
struct RefinableParams {
  Eigen::VectorXd font_logits;
  Affine6 word_affine = Affine6::Zero();
  std::vector<Affine6> char_affines;
  Eigen::Vector3d fill_color_logits = Eigen::Vector3d::Zero();
  double border_visibility_logit = 0;
  double shadow_visibility_logit = 0;
  Eigen::Matrix<double, kBorderBins, 1> border_bin_logits = Eigen::Matrix<double, kBorderBins, 1>::Zero();
  Eigen::Vector3d border_color_logits = Eigen::Vector3d::Zero();
  Eigen::Vector3d shadow_color_logits = Eigen::Vector3d::Zero();
  double shadow_blur_raw = 0;
  Eigen::Vector2d shadow_offset = Eigen::Vector2d::Zero();

  // Fixed during refinement.
  std::string text;
  std::vector<CharAnchor> anchors;
  Eigen::Vector2d word_center = Eigen::Vector2d::Zero();  // crop coordinates
  double word_ref_length = 1;
  PixelRect crop;  // canvas pixels covered by the crop

  int char_count() const { return static_cast<int>(anchors.size()); }
};

struct ParamSpan {
  std::string name;
  Index offset = 0;
  Index size = 0;
  ParamGroup group = ParamGroup::font;
};

/// Flat layout of the continuous parameters, in this order: font_logits,
/// word_affine, char_affines, fill_color, border_visibility,
/// shadow_visibility, border_bins, border_color, shadow_color, shadow_blur,
/// shadow_offset.
std::vector<ParamSpan> param_layout(const RefinableParams& params);
Eigen::VectorXd pack(const RefinableParams& params);
void unpack(const Eigen::VectorXd& flat, RefinableParams& params);

struct GradientVector {
  Eigen::VectorXd values;
  std::vector<ParamSpan> index_map;

  const ParamSpan& span(std::string_view name) const;
  Eigen::VectorXd segment(std::string_view name) const;
};

double sigmoid(double x);
double logit(double p);
double softplus(double x);
double inverse_softplus(double y);

/// Softmax over all logits, then keep the `top_k` largest (lower index wins
/// ties) and renormalize. Dropped fonts get exactly 0.
Eigen::VectorXd font_attention(const Eigen::VectorXd& logits, int top_k);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

/// Differentiable binarization of sigmoid(logit) with steepness k.
double soft_visibility(double logit, double k);

Color decode_color(const Eigen::Vector3d& logits);
Eigen::Vector3d encode_color(const Color& color);

/// Attention-weighted sum of atlas cells.
AlphaMapT<double> blended_glyph(const GlyphAtlas& atlas, const Eigen::VectorXd& attention, int glyph_index,
                                GlyphVariant variant);
/// Border cell blended over fonts and over border bins.
AlphaMapT<double> blended_border(const GlyphAtlas& atlas, const Eigen::VectorXd& attention,
                                 const Eigen::VectorXd& bin_weights, int glyph_index);

/// Index-space map from cell pixels to crop pixels for character `i`,
/// as a 3x3 homogeneous matrix.
Eigen::Matrix3d char_transform(const RefinableParams& params, int i, int cell_resolution);

struct Reconstruction {
  RasterImageT<double> image;
  AlphaMapT<double> shadow;
  AlphaMapT<double> fill;
  AlphaMapT<double> border;
};

Reconstruction reconstruct_layers(const RefinableParams& params, const GlyphAtlas& atlas,
                                  const RasterImage& background_crop, const DiffConfig& config);
RasterImageT<double> reconstruct(const RefinableParams& params, const GlyphAtlas& atlas,
                                 const RasterImage& background_crop, const DiffConfig& config);

struct LossAndGradients {
  double loss = 0;
  GradientVector grads;
};

/// Mean absolute error of the reconstruction against `target` and its exact
/// gradient. The L1 subgradient at a zero residual is 0.
LossAndGradients loss_and_gradients(const RefinableParams& params, const GlyphAtlas& atlas,
                                    const RasterImage& background_crop, const RasterImage& target,
                                    const DiffConfig& config);
double evaluate_loss(const RefinableParams& params, const GlyphAtlas& atlas, const RasterImage& background_crop,
                     const RasterImage& target, const DiffConfig& config);

/// Crop around `word_box` padded per DiffConfig, clipped to the canvas.
PixelRect word_crop(const Box& word_box, Index canvas_width, Index canvas_height, const DiffConfig& config);

/// Parameters that reproduce `element` exactly: one-hot font and border bin,
/// hard visibilities, identity affines, anchors from layout(). The crop
/// defaults to word_crop() of the layout box.
RefinableParams params_from_element(const TextElement& element, const GlyphAtlas& atlas, Index canvas_width,
                                    Index canvas_height, const DiffConfig& config);
RefinableParams params_from_element(const TextElement& element, const GlyphAtlas& atlas, const PixelRect& crop);

}  // namespace derender
