#include "derender/datagen.hpp"

#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "derender/document.hpp"
#include "derender/png_io.hpp"

namespace derender {

namespace {

// SplitMix64: tiny, seedable, and identical on every platform, unlike the
// standard distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Inclusive integer range.
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t state_;
};

Color random_color(Rng& rng) {
  Color c;
  for (int i = 0; i < 3; ++i) c[i] = static_cast<double>(rng.integer(5, 250)) / 255.0;
  return c;
}

double round_to(double v, double step) { return std::round(v / step) * step; }

std::vector<std::filesystem::path> user_images(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!dir.empty() && std::filesystem::is_directory(dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

RasterImage make_background(BackgroundKind kind, Index w, Index h, Rng& rng, const GenConfig& config) {
  switch (kind) {
    case BackgroundKind::flat:
      return RasterImage::filled(w, h, random_color(rng));
    case BackgroundKind::linear_gradient: {
      const Color c0 = random_color(rng), c1 = random_color(rng);
      const double theta = rng.uniform(0, 2 * M_PI);
      const double ux = std::cos(theta), uy = std::sin(theta);
      const double extent = std::abs(ux) * w + std::abs(uy) * h;
      RasterImage img(w, h);
      for (Index y = 0; y < h; ++y) {
        for (Index x = 0; x < w; ++x) {
          const double t = std::clamp(((x + 0.5 - 0.5 * w) * ux + (y + 0.5 - 0.5 * h) * uy) / extent + 0.5, 0.0, 1.0);
          img.set_pixel(x, y, ((1 - t) * c0 + t * c1).cast<float>());
        }
      }
      return quantize_8bit(img);
    }
    case BackgroundKind::noise_texture: {
      // Smooth value noise: a coarse random grid around a base colour, upsampled.
      const Color base = random_color(rng);
      const Index cell = rng.integer(12, 32);
      const Index gw = w / cell + 2, gh = h / cell + 2;
      RasterImage grid(gw, gh);
      for (Index y = 0; y < gh; ++y) {
        for (Index x = 0; x < gw; ++x) {
          Rgb<float> v;
          for (int c = 0; c < 3; ++c) v[c] = static_cast<float>(std::clamp(base[c] + rng.uniform(-0.15, 0.15), 0.0, 1.0));
          grid.set_pixel(x, y, v);
        }
      }
      return quantize_8bit(resize_bilinear(grid, w, h));
    }
    case BackgroundKind::user_image: {
      const auto files = user_images(config.user_background_dir);
      if (files.empty()) {
        throw Error("datagen", fmt::format("no .png backgrounds in '{}'", config.user_background_dir.string()));
      }
      const RasterImage src = read_png(files[rng.integer(0, static_cast<std::int64_t>(files.size()) - 1)]);
      return quantize_8bit(resize_bilinear(src, w, h));
    }
  }
  throw Error("datagen", "unknown background kind");
}

// Pixels an element's effects may reach beyond its ink box.
double effect_margin(const TextElement& e, const GlyphAtlas& atlas) {
  const double cell_scale = e.font_size / atlas.em_px();
  double m = 0;
  if (e.effects.border.visible) m = (e.effects.border.width_bin + 1) * cell_scale + 1;
  if (e.effects.shadow.visible) {
    m = std::max(m, std::max(std::abs(e.effects.shadow.offset_x), std::abs(e.effects.shadow.offset_y)) +
                        3 * e.effects.shadow.blur + 1);
  }
  return m + 2;
}

Color region_mean(const RasterImage& img, const PixelRect& r) {
  Color c;
  for (int i = 0; i < 3; ++i) c[i] = img.channel(i).block(r.y0, r.x0, r.height, r.width).cast<double>().mean();
  return c;
}

double linf(const Color& a, const Color& b) { return (a - b).abs().maxCoeff(); }

}  // namespace

std::string to_string(BackgroundKind kind) {
  switch (kind) {
    case BackgroundKind::flat: return "flat";
    case BackgroundKind::linear_gradient: return "linear-gradient";
    case BackgroundKind::noise_texture: return "noise-texture";
    case BackgroundKind::user_image: return "user-image";
  }
  return "?";
}

BackgroundKind background_kind_from_string(const std::string& name) {
  for (auto k : {BackgroundKind::flat, BackgroundKind::linear_gradient, BackgroundKind::noise_texture,
                 BackgroundKind::user_image}) {
    if (to_string(k) == name) return k;
  }
  throw Error("datagen", fmt::format("unknown background kind '{}'", name));
}

std::vector<std::string> GenConfig::default_word_list() {
  return {"Sale",  "Design", "Hello",  "Style", "Font",   "Magic", "Shadow", "Border", "Winter", "Summer",
          "Title", "Novel",  "Poster", "Bold",  "Render", "Glyph", "Letter", "Vector", "Cover",  "Story",
          "Night", "Light",  "River",  "Ocean", "Forest", "Dream", "Quiet",  "Brave",  "Moon",   "Star"};
}

void validate(const GenConfig& c, const GlyphAtlas& atlas) {
  auto fail = [](const std::string& what) { throw Error("datagen", what); };
  if (c.count < 0) fail("count must be >= 0");
  if (c.words.empty()) fail("word list is empty");
  for (const auto& w : c.words) {
    if (w.empty()) fail("word list contains an empty word");
    for (char ch : w) {
      if (!atlas.has_glyph(ch)) fail(fmt::format("word '{}' uses glyph '{}' missing from the atlas", w, ch));
    }
  }
  if (c.canvas_min_width < 8 || c.canvas_min_width > c.canvas_max_width) fail("bad canvas width range");
  if (c.canvas_min_height < 8 || c.canvas_min_height > c.canvas_max_height) fail("bad canvas height range");
  if (c.canvas_max_width > kMaxCanvasSide || c.canvas_max_height > kMaxCanvasSide) fail("canvas range exceeds limit");
  if (c.min_font_size < 1 || c.min_font_size > c.max_font_size) fail("bad font size range");
  if (c.words_per_sample < 1) fail("words_per_sample must be >= 1");
  if (!(c.border_probability >= 0 && c.border_probability <= 1)) fail("border_probability must lie in [0, 1]");
  if (!(c.shadow_probability >= 0 && c.shadow_probability <= 1)) fail("shadow_probability must lie in [0, 1]");
  if (!(c.min_blur >= 0 && c.min_blur <= c.max_blur)) fail("bad blur range");
  if (!(c.max_offset >= 0)) fail("max_offset must be >= 0");
  if (!(c.min_contrast >= 0 && c.min_contrast < 1)) fail("min_contrast must lie in [0, 1)");
  if (c.backgrounds.empty()) fail("no background kinds selected");
  if (c.max_attempts < 1) fail("max_attempts must be >= 1");
  for (int f : c.font_indices) {
    if (f < 0 || f >= atlas.font_count()) fail(fmt::format("font index {} out of range", f));
  }
  for (auto k : c.backgrounds) {
    if (k == BackgroundKind::user_image && user_images(c.user_background_dir).empty()) {
      fail(fmt::format("user background directory '{}' has no .png files", c.user_background_dir.string()));
    }
  }
}

std::uint64_t sample_seed(std::uint64_t seed, int index) {
  Rng mix(seed ^ (0xD1B54A32D192ED03ull * (static_cast<std::uint64_t>(index) + 1)));
  return mix.next();
}

PixelRect word_pixel_box(const TextElement& element, const GlyphAtlas& atlas, Index canvas_width,
                         Index canvas_height) {
  const Box b = layout(element, atlas).word_box;
  const Index x0 = static_cast<Index>(std::floor(b.x0)), y0 = static_cast<Index>(std::floor(b.y0));
  const PixelRect r{x0, y0, static_cast<Index>(std::ceil(b.x1)) - x0, static_cast<Index>(std::ceil(b.y1)) - y0};
  return r.intersect({0, 0, canvas_width, canvas_height});
}

Sample generate_sample(const GenConfig& config, const GlyphAtlas& atlas, int index) {
  Rng rng(sample_seed(config.seed, index));
  std::vector<int> fonts = config.font_indices;
  if (fonts.empty()) {
    fonts.resize(atlas.font_count());
    std::iota(fonts.begin(), fonts.end(), 0);
  }

  Document doc;
  doc.canvas_width = rng.integer(config.canvas_min_width, config.canvas_max_width);
  doc.canvas_height = rng.integer(config.canvas_min_height, config.canvas_max_height);
  const auto kind = config.backgrounds[rng.integer(0, static_cast<std::int64_t>(config.backgrounds.size()) - 1)];
  doc.background = make_background(kind, doc.canvas_width, doc.canvas_height, rng, config);

  std::vector<PixelRect> claimed;  // effect extents of placed words
  for (int w = 0; w < config.words_per_sample; ++w) {
    bool placed = false;
    for (int attempt = 0; attempt < config.max_attempts && !placed; ++attempt) {
      TextElement e;
      e.text = config.words[rng.integer(0, static_cast<std::int64_t>(config.words.size()) - 1)];
      e.font_index = fonts[rng.integer(0, static_cast<std::int64_t>(fonts.size()) - 1)];
      e.font_size = static_cast<double>(rng.integer(config.min_font_size, config.max_font_size));
      auto& fx = e.effects;
      fx.border.visible = rng.bernoulli(config.border_probability);
      fx.border.width_bin = static_cast<int>(rng.integer(1, kBorderBins));
      fx.shadow.visible = rng.bernoulli(config.shadow_probability);
      fx.shadow.blur = round_to(rng.uniform(config.min_blur, config.max_blur), 0.01);
      fx.shadow.offset_x = round_to(rng.uniform(-config.max_offset, config.max_offset), 0.01);
      fx.shadow.offset_y = round_to(rng.uniform(-config.max_offset, config.max_offset), 0.01);

      // Integer origin keeping every effect inside the canvas.
      const Box unit = layout(e, atlas).word_box;  // origin (0, 0)
      const double m = effect_margin(e, atlas);
      const double lo_x = std::ceil(m - unit.x0), hi_x = std::floor(doc.canvas_width - m - unit.x1);
      const double lo_y = std::ceil(m - unit.y0), hi_y = std::floor(doc.canvas_height - m - unit.y1);
      if (hi_x < lo_x || hi_y < lo_y) continue;
      e.origin = Eigen::Vector2d(static_cast<double>(rng.integer(static_cast<std::int64_t>(lo_x), static_cast<std::int64_t>(hi_x))),
                                 static_cast<double>(rng.integer(static_cast<std::int64_t>(lo_y), static_cast<std::int64_t>(hi_y))));
      const Box b = layout(e, atlas).word_box;
      const PixelRect extent =
          PixelRect{static_cast<Index>(std::floor(b.x0 - m)), static_cast<Index>(std::floor(b.y0 - m)),
                    static_cast<Index>(std::ceil(b.width() + 2 * m)) + 1,
                    static_cast<Index>(std::ceil(b.height() + 2 * m)) + 1}
              .intersect({0, 0, doc.canvas_width, doc.canvas_height});
      if (std::any_of(claimed.begin(), claimed.end(), [&](const PixelRect& r) { return !r.intersect(extent).empty(); })) {
        continue;
      }

      // Colours, with the contrast floors.
      const Color local = region_mean(doc.background, extent);
      fx.fill.color = random_color(rng);
      fx.border.color = random_color(rng);
      fx.shadow.color = random_color(rng);
      if (linf(fx.fill.color, local) < config.min_contrast) continue;
      if (fx.border.visible && linf(fx.border.color, fx.fill.color) < config.min_contrast) continue;

      claimed.push_back(extent);
      doc.elements.push_back(std::move(e));
      placed = true;
    }
    if (!placed) {
      throw Error("datagen", fmt::format("sample {}: could not place word {} within {} attempts", index, w,
                                         config.max_attempts));
    }
  }

  validate_document(doc, atlas);
  Sample s;
  s.image = render_document(doc, atlas);
  for (const auto& e : doc.elements) {
    s.word_boxes.push_back(word_pixel_box(e, atlas, doc.canvas_width, doc.canvas_height));
  }
  s.truth = std::move(doc);
  return s;
}

std::vector<Sample> generate(const GenConfig& config, const GlyphAtlas& atlas) {
  validate(config, atlas);
  std::vector<Sample> out;
  out.reserve(config.count);
  for (int i = 0; i < config.count; ++i) out.push_back(generate_sample(config, atlas, i));
  return out;
}

void write_corpus(const GenConfig& config, const GlyphAtlas& atlas, const std::filesystem::path& dir,
                  const std::function<void(int)>& on_sample) {
  validate(config, atlas);
  std::filesystem::create_directories(dir);
  nlohmann::json samples = nlohmann::json::array();
  for (int i = 0; i < config.count; ++i) {
    const Sample s = generate_sample(config, atlas, i);
    const std::string stem = fmt::format("{:04d}", i);
    write_png(dir / (stem + ".png"), s.image);
    save_document(s.truth, dir / (stem + ".json"));
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : s.word_boxes) boxes.push_back({b.x0, b.y0, b.width, b.height});
    samples.push_back({{"image", stem + ".png"}, {"truth", stem + ".json"}, {"word_boxes", boxes}});
    if (on_sample) on_sample(i);
  }
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : config.backgrounds) kinds.push_back(to_string(k));
  nlohmann::json manifest = {
      {"format", "derender-corpus"},
      {"version", 1},
      {"config",
       {{"seed", config.seed},
        {"count", config.count},
        {"canvas_width", {config.canvas_min_width, config.canvas_max_width}},
        {"canvas_height", {config.canvas_min_height, config.canvas_max_height}},
        {"words", config.words},
        {"font_indices", config.font_indices},
        {"words_per_sample", config.words_per_sample},
        {"font_size", {config.min_font_size, config.max_font_size}},
        {"border_probability", config.border_probability},
        {"shadow_probability", config.shadow_probability},
        {"blur", {config.min_blur, config.max_blur}},
        {"max_offset", config.max_offset},
        {"min_contrast", config.min_contrast},
        {"backgrounds", kinds},
        {"user_background_dir", config.user_background_dir.string()}}},
      {"fonts", atlas.font_names()},
      {"samples", samples}};
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw Error("datagen", fmt::format("cannot write '{}'", (dir / "manifest.json").string()));
}

}  // namespace derender
