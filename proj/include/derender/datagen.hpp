#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "derender/atlas.hpp"
#include "derender/compositor.hpp"

namespace derender {

enum class BackgroundKind { flat, linear_gradient, noise_texture, user_image };

std::string to_string(BackgroundKind kind);
BackgroundKind background_kind_from_string(const std::string& name);

struct GenConfig {
  std::uint64_t seed = 42;
  int count = 50;
  Index canvas_min_width = 192, canvas_max_width = 320;
  Index canvas_min_height = 96, canvas_max_height = 160;
  std::vector<std::string> words = default_word_list();
  std::vector<int> font_indices;  // empty: every font in the atlas
  int words_per_sample = 1;
  int min_font_size = 16, max_font_size = 64;
  double border_probability = 0.5;
  double shadow_probability = 0.5;
  double min_blur = 0.5, max_blur = 3.0;
  double max_offset = 5.0;    // shadow offsets drawn from [-max, max] per axis
  double min_contrast = 0.2;  // L-inf distance, fill vs local background mean
  std::vector<BackgroundKind> backgrounds = {BackgroundKind::flat, BackgroundKind::linear_gradient,
                                             BackgroundKind::noise_texture};
  std::filesystem::path user_background_dir;
  int max_attempts = 200;  // placement resamples before giving up

  static std::vector<std::string> default_word_list();
};

/// Throws on empty ranges, bad probabilities or a missing word list.
void validate(const GenConfig& config, const GlyphAtlas& atlas);

struct Sample {
  RasterImage image;  // exactly render_document(truth)
  Document truth;
  std::vector<PixelRect> word_boxes;  // integer hull of each element's ink box
};

/// Per-sample seed: sample i depends only on (seed, i), so samples can be
/// produced in any order or in parallel.
std::uint64_t sample_seed(std::uint64_t seed, int index);

Sample generate_sample(const GenConfig& config, const GlyphAtlas& atlas, int index);
std::vector<Sample> generate(const GenConfig& config, const GlyphAtlas& atlas);

/// Integer pixel hull of the element's ink box, clipped to the canvas.
PixelRect word_pixel_box(const TextElement& element, const GlyphAtlas& atlas, Index canvas_width,
                         Index canvas_height);

/// Writes NNNN.png (8-bit encoding of the image), NNNN.json (truth) and
/// manifest.json (config echo and per-sample word boxes) into `dir`.
void write_corpus(const GenConfig& config, const GlyphAtlas& atlas, const std::filesystem::path& dir,
                  const std::function<void(int)>& on_sample = {});

}  // namespace derender
