#include "derender/pipeline.hpp"

#include <fmt/format.h>

#include "derender/export.hpp"
#include "derender/initialize.hpp"
#include "derender/recovery_suite.hpp"

namespace derender {

void validate_words(const RasterImage& image, const std::vector<PixelRect>& boxes,
                    const std::vector<std::string>& texts) {
  if (boxes.empty()) throw Error("pipeline", "at least one word box is required");
  if (boxes.size() != texts.size()) {
    throw Error("pipeline", fmt::format("{} boxes but {} texts", boxes.size(), texts.size()));
  }
  const PixelRect canvas{0, 0, image.width(), image.height()};
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (boxes[i].empty() || boxes[i].intersect(canvas) != boxes[i]) {
      throw Error("pipeline", fmt::format("boxes[{}] lies outside the {}x{} image", i, image.width(), image.height()));
    }
    if (texts[i].empty()) throw Error("pipeline", fmt::format("texts[{}] is empty", i));
  }
}

RasterImage inpaint_words(const RasterImage& image, const std::vector<PixelRect>& boxes) {
  AlphaMap mask(image.width(), image.height());
  for (const auto& b : boxes) mask.plane() = mask.plane().max(estimate_mask(image, b).plane());
  return inpaint(image, mask);
}

std::vector<RefinableParams> initialize_words(const RasterImage& image, const RasterImage& background,
                                              const std::vector<PixelRect>& boxes,
                                              const std::vector<std::string>& texts, const GlyphAtlas& atlas,
                                              const DiffConfig& config) {
  std::vector<RefinableParams> out;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    out.push_back(initial_guess(image, background, boxes[i], texts[i], atlas, config).params);
  }
  return out;
}

DerenderResult refine_words(const RasterImage& image, const RasterImage& background,
                            const std::vector<PixelRect>& boxes, std::vector<RefinableParams> initial,
                            const GlyphAtlas& atlas, const DerenderOptions& options, const WordProgress& progress) {
  validate(options.refine);
  if (boxes.size() != initial.size()) throw Error("pipeline", "one initial parameter set per box is required");
  require_same_size(image, background, "refine_words");

  DerenderResult result;
  result.background = background;
  result.words.resize(initial.size());
  result.params.resize(initial.size());
  parallel_for(static_cast<int>(initial.size()), options.threads, [&](int i) {
    const RefinableParams& p0 = initial[i];
    const RasterImage bg = background.crop(p0.crop);
    const RasterImage target = image.crop(p0.crop);
    RefineProgress cb;
    if (progress) cb = [&, i](int it, double loss) { return progress(i, it, loss); };
    RefineResult r = refine(p0, atlas, bg, target, options.refine, options.diff, {}, cb);
    WordReport& w = result.words[i];
    w.text = p0.text;
    w.box = boxes[i];
    w.crop = p0.crop;
    w.l1_before = r.report.initial_l1;
    w.l1_after = r.report.final_l1;
    w.psnr_before = r.report.initial_psnr;
    w.psnr_after = r.report.final_psnr;
    w.iterations = static_cast<int>(r.report.loss_trace.size());
    w.best_iteration = r.report.best_iteration;
    w.wall_time = r.report.wall_time;
    w.failed = r.report.failed;
    w.error = r.report.error;
    result.params[i] = std::move(r.params);
  });

  Document doc;
  doc.canvas_width = image.width();
  doc.canvas_height = image.height();
  doc.background = background;
  for (std::size_t i = 0; i < result.params.size(); ++i) {
    const PixelRect& b = boxes[i];
    const Box word{static_cast<double>(b.x0), static_cast<double>(b.y0), static_cast<double>(b.x1()),
                   static_cast<double>(b.y1())};
    doc.elements.push_back(export_element(result.params[i], atlas, word, options.diff));
    result.words[i].font = atlas.font(doc.elements.back().font_index).name;
  }
  validate_document(doc, atlas);
  result.document = std::move(doc);
  return result;
}

DerenderResult derender_image(const RasterImage& image, const std::vector<PixelRect>& boxes,
                              const std::vector<std::string>& texts, const GlyphAtlas& atlas,
                              const DerenderOptions& options, const WordProgress& progress) {
  validate_words(image, boxes, texts);
  validate(options.refine);
  const RasterImage background = inpaint_words(image, boxes);
  auto initial = initialize_words(image, background, boxes, texts, atlas, options.diff);
  return refine_words(image, background, boxes, std::move(initial), atlas, options, progress);
}

nlohmann::json report_to_json(const std::vector<WordReport>& words) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& w : words) {
    nlohmann::json j = {{"text", w.text},
                        {"box", {w.box.x0, w.box.y0, w.box.width, w.box.height}},
                        {"crop", {w.crop.x0, w.crop.y0, w.crop.width, w.crop.height}},
                        {"l1_before", w.l1_before},
                        {"l1_after", w.l1_after},
                        {"psnr_before", w.psnr_before},
                        {"psnr_after", w.psnr_after},
                        {"iterations", w.iterations},
                        {"best_iteration", w.best_iteration},
                        {"wall_time", w.wall_time},
                        {"font", w.font},
                        {"failed", w.failed}};
    if (w.failed) j["error"] = w.error;
    out.push_back(std::move(j));
  }
  return out;
}

std::vector<EvalRow> evaluate_documents(const Document& predicted, const Document& truth, const GlyphAtlas& atlas,
                                        const DiffConfig& config) {
  if (predicted.canvas_width != truth.canvas_width || predicted.canvas_height != truth.canvas_height) {
    throw Error("pipeline", "eval: predicted and truth canvases differ in size");
  }
  if (predicted.elements.size() != truth.elements.size()) {
    throw Error("pipeline", fmt::format("eval: {} predicted elements vs {} in truth", predicted.elements.size(),
                                        truth.elements.size()));
  }
  const RasterImage a = render_document(predicted, atlas);
  const RasterImage b = render_document(truth, atlas);
  std::vector<EvalRow> rows;
  for (std::size_t i = 0; i < truth.elements.size(); ++i) {
    const TextElement& t = truth.elements[i];
    const TextElement& p = predicted.elements[i];
    const PixelRect crop = word_crop(layout(t, atlas).word_box, truth.canvas_width, truth.canvas_height, config);
    EvalRow r;
    r.element = static_cast<int>(i);
    r.text = t.text;
    const RasterImage ca = a.crop(crop), cb = b.crop(crop);
    r.l1 = l1_error(ca, cb);
    r.psnr = psnr(ca, cb);
    r.font_match = p.font_index == t.font_index;
    r.color_error = (p.effects.fill.color - t.effects.fill.color).abs().maxCoeff();
    if (t.effects.border.visible && p.effects.border.visible) {
      r.color_error = std::max(r.color_error, (p.effects.border.color - t.effects.border.color).abs().maxCoeff());
    }
    if (t.effects.shadow.visible && p.effects.shadow.visible) {
      r.color_error = std::max(r.color_error, (p.effects.shadow.color - t.effects.shadow.color).abs().maxCoeff());
    }
    r.visibility_accuracy = 0.5 * ((p.effects.border.visible == t.effects.border.visible) +
                                   (p.effects.shadow.visible == t.effects.shadow.visible));
    rows.push_back(r);
  }
  return rows;
}

nlohmann::json eval_to_json(const EvalRow& r) {
  return {{"element", r.element},         {"text", r.text},
          {"l1", r.l1},                   {"psnr", r.psnr},
          {"font_match", r.font_match},   {"color_error", r.color_error},
          {"visibility_accuracy", r.visibility_accuracy}};
}

}  // namespace derender
