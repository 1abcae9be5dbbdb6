#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "derender/compositor.hpp"
#include "derender/refine.hpp"

namespace derender {

struct WordReport {
  std::string text;
  PixelRect box;
  PixelRect crop;
  double l1_before = 0, l1_after = 0;
  double psnr_before = 0, psnr_after = 0;
  int iterations = 0;
  int best_iteration = 0;
  double wall_time = 0;
  std::string font;
  bool failed = false;
  std::string error;
};

struct DerenderResult {
  Document document;
  RasterImage background;  // inpainted canvas
  std::vector<WordReport> words;
  std::vector<RefinableParams> params;  // refined, one per word
};

/// (word index, iteration, loss). Returning false stops that word's refinement.
using WordProgress = std::function<bool(int, int, double)>;

struct DerenderOptions {
  RefineConfig refine;
  DiffConfig diff;
  int threads = 0;  // 0 = hardware concurrency
};

void validate_words(const RasterImage& image, const std::vector<PixelRect>& boxes,
                    const std::vector<std::string>& texts);

/// Inpaints the union of every word's estimated mask.
RasterImage inpaint_words(const RasterImage& image, const std::vector<PixelRect>& boxes);

/// Initial parameters from the heuristic parser for each word.
std::vector<RefinableParams> initialize_words(const RasterImage& image, const RasterImage& background,
                                              const std::vector<PixelRect>& boxes,
                                              const std::vector<std::string>& texts, const GlyphAtlas& atlas,
                                              const DiffConfig& config);

/// Refines each word from `initial` against `image` over `background` (in
/// parallel) and exports the document.
DerenderResult refine_words(const RasterImage& image, const RasterImage& background,
                            const std::vector<PixelRect>& boxes, std::vector<RefinableParams> initial,
                            const GlyphAtlas& atlas, const DerenderOptions& options,
                            const WordProgress& progress = {});

/// Full pipeline: inpaint, initialize, refine, export.
DerenderResult derender_image(const RasterImage& image, const std::vector<PixelRect>& boxes,
                              const std::vector<std::string>& texts, const GlyphAtlas& atlas,
                              const DerenderOptions& options, const WordProgress& progress = {});

nlohmann::json report_to_json(const std::vector<WordReport>& words);

/// One row per word of the predicted/truth comparison.
struct EvalRow {
  int element = 0;
  std::string text;
  double l1 = 0;
  double psnr = 0;
  bool font_match = false;
  double color_error = 0;        // max channel error over fill and visible border/shadow colours
  double visibility_accuracy = 0;  // fraction of the two visibility flags that agree
};

/// Compares renders (over each truth word's crop) and styles of two documents
/// with the same canvas, matching elements by index.
std::vector<EvalRow> evaluate_documents(const Document& predicted, const Document& truth, const GlyphAtlas& atlas,
                                        const DiffConfig& config = {});

nlohmann::json eval_to_json(const EvalRow& row);

}  // namespace derender
