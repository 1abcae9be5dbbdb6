// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "derender/datagen.hpp"
#include "derender/decompose.hpp"
#include "derender/document.hpp"
#include "derender/export.hpp"
#include "derender/initialize.hpp"
#include "derender/png_io.hpp"
#include "derender/recovery_suite.hpp"
#include "derender/service.hpp"
#include "test_support.hpp"

using namespace derender;
namespace dt = derender::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;
std::vector<std::string> selected;  // name substrings from argv; empty runs everything

bool wanted(const std::string& name) {
  if (selected.empty()) return true;
  for (const auto& s : selected) {
    if (name.find(s) != std::string::npos) return true;
  }
  return false;
}

void report(const std::string& name, const Outcome& o) {
  if (!wanted(name)) return;
  if (!o.pass) ++failures;
  fmt::print("{} {}: {}\n", o.pass ? "PASS" : "FAIL", name, o.detail);
  std::fflush(stdout);
}

template <typename Fn>
void criterion(const std::string& name, Fn&& fn) {
  if (!wanted(name)) return;
  try {
    report(name, fn());
  } catch (const std::exception& e) {
    report(name, {false, fmt::format("threw: {}", e.what())});
  }
}

template <typename Scalar>
bool bit_equal(const Plane<Scalar>& a, const Plane<Scalar>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(Scalar) * static_cast<std::size_t>(a.size())) == 0;
}

template <typename Scalar>
bool bit_equal(const RasterImageT<Scalar>& a, const RasterImageT<Scalar>& b) {
  for (int c = 0; c < 3; ++c) {
    if (!bit_equal(a.channel(c), b.channel(c))) return false;
  }
  return true;
}

Color random_color(std::mt19937_64& rng) {
  return {dt::uniform(rng, 0, 1), dt::uniform(rng, 0, 1), dt::uniform(rng, 0, 1)};
}

// alpha == 0 must return the canvas untouched and alpha == 1 the layer color,
// bit for bit, in both precisions and under stacking.
template <typename Scalar>
bool identities_hold(std::mt19937_64& rng) {
  const Index w = 37, h = 23;
  RasterImageT<Scalar> bg = dt::random_image(rng, w, h).cast<Scalar>();
  const auto zero = AlphaMapT<Scalar>::constant(w, h, Scalar(0));
  const auto one = AlphaMapT<Scalar>::constant(w, h, Scalar(1));
  const Color y1 = random_color(rng), y2 = random_color(rng);

  const std::vector<LayerT<Scalar>> transparent = {{&zero, y1}, {&zero, y2}};
  if (!bit_equal(composite<Scalar>(bg, transparent), bg)) return false;

  const std::vector<LayerT<Scalar>> opaque_last = {{&zero, y1}, {&one, y2}};
  const auto expect = RasterImageT<Scalar>::filled(w, h, y2);
  if (!bit_equal(composite<Scalar>(bg, opaque_last), expect)) return false;

  const std::vector<LayerT<Scalar>> opaque_then_clear = {{&one, y1}, {&zero, y2}};
  return bit_equal(composite<Scalar>(bg, opaque_then_clear), RasterImageT<Scalar>::filled(w, h, y1));
}

Outcome compositing_identities() {
  std::mt19937_64 rng(101);
  int ok = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) ok += identities_hold<float>(rng) && identities_hold<double>(rng);

  // Same identities through the effect compositor with empty layers.
  const RasterImage bg = dt::random_image(rng, 64, 48);
  EffectAlphas none{AlphaMap(64, 48), AlphaMap(64, 48), AlphaMap(64, 48)};
  EffectSet fx;
  fx.fill.color = random_color(rng);
  fx.border = {true, 2, random_color(rng)};
  fx.shadow = {true, 1, 0, 0, random_color(rng)};
  const bool element_ok = bit_equal(composite_element(bg, none, fx), bg);
  return {ok == trials && element_ok, fmt::format("{}/{} random stacks bit-exact, empty element layers {}", ok,
                                                  trials, element_ok ? "bit-exact" : "differ")};
}

Outcome decompose_round_trip() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  double worst_single = 0;
  for (int t = 0; t < 100; ++t) {
    const Index w = 24 + static_cast<Index>(rng() % 24), h = 16 + static_cast<Index>(rng() % 24);
    const RasterImageT<double> bg = dt::random_image(rng, w, h).cast<double>();
    AlphaMapT<double> alpha(w, h);
    for (Index i = 0; i < alpha.plane().size(); ++i) {
      // Mix of empty, partial and opaque coverage, support strictly above 0.05.
      const double u = dt::uniform(rng, 0, 1);
      alpha.plane().data()[i] = u < 0.3 ? 0.0 : u < 0.4 ? 1.0 : dt::uniform(rng, 0.0501, 1.0);
    }
    const Color y = random_color(rng);
    const std::vector<LayerT<double>> layers = {{&alpha, y}};
    const auto c = composite<double>(bg, layers);
    for (const auto& s : invert_layer(c, bg, alpha, {0, 0, w, h})) {
      worst_single = std::max(worst_single, (s.value - y).abs().maxCoeff());
    }
  }

  double worst_full = 0;
  std::string worst_what = "none";
  int decomposed = 0;
  const int full_trials = 40;
  for (int t = 0; t < full_trials; ++t) {
    const Index w = 200, h = 110;
    const TextElement e = dt::random_element(rng, w, h);
    const RasterImage bg = dt::random_image(rng, w, h);
    const EffectAlphas alphas = render_effect_alphas(e, dt::atlas(), w, h);
    const RasterImage img = composite_element(bg, alphas, e.effects);
    const DecomposedColors d = decompose_colors(img, bg, alphas, {true, true}, {0, 0, w, h});
    if (!d.fill || !d.border || !d.shadow) continue;
    ++decomposed;
    const std::pair<const char*, double> errs[] = {{"fill", (*d.fill - e.effects.fill.color).abs().maxCoeff()},
                                                   {"border", (*d.border - e.effects.border.color).abs().maxCoeff()},
                                                   {"shadow", (*d.shadow - e.effects.shadow.color).abs().maxCoeff()}};
    for (const auto& [name, err] : errs) {
      if (err > worst_full) {
        worst_full = err;
        worst_what = fmt::format("{} of word {}", name, t);
      }
    }
  }
  const double elapsed = seconds_since(t0);
  const bool pass = worst_single <= 1e-6 && decomposed == full_trials && worst_full <= 1.0 / 32 + 1e-6 &&
                    elapsed < 10.0;
  return {pass, fmt::format("invert_layer max err {:.3g} (100 composites), decompose_colors max err {:.4f} ({}) on "
                            "{}/{} three-effect words, {:.2f} s",
                            worst_single, worst_full, worst_what, decomposed, full_trials, elapsed)};
}

// Soft parameters around a random element so that every group carries
// gradient. Shadow offsets stay off integers (bilinear translate has kinks
// there) and blur stays away from kernel-radius breakpoints.
RefinableParams random_soft_params(std::mt19937_64& rng, const TextElement& e, Index w, Index h) {
  RefinableParams p = params_from_element(e, dt::atlas(), w, h, DiffConfig{});
  std::normal_distribution<double> n(0, 1);
  for (Index i = 0; i < p.font_logits.size(); ++i) p.font_logits[i] = n(rng);
  for (int i = 0; i < 6; ++i) p.word_affine[i] = 0.5 * n(rng);
  for (auto& a : p.char_affines) {
    for (int i = 0; i < 6; ++i) a[i] = 0.3 * n(rng);
  }
  for (int i = 0; i < 3; ++i) {
    p.fill_color_logits[i] = n(rng);
    p.border_color_logits[i] = n(rng);
    p.shadow_color_logits[i] = n(rng);
  }
  for (int i = 0; i < kBorderBins; ++i) p.border_bin_logits[i] = n(rng);
  p.border_visibility_logit = dt::uniform(rng, -0.05, 0.05);
  p.shadow_visibility_logit = dt::uniform(rng, -0.05, 0.05);
  auto off_grid = [&] { return std::floor(dt::uniform(rng, -3, 3)) + dt::uniform(rng, 0.2, 0.8); };
  p.shadow_offset = {off_grid(), off_grid()};
  for (;;) {
    const double blur = dt::uniform(rng, 0.6, 2.4);
    const double r = 3 * blur;
    if (r - std::floor(r) > 0.1 && std::ceil(r) - r > 0.1) {
      p.shadow_blur_raw = inverse_softplus(blur);
      break;
    }
  }
  return p;
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(303);
  const DiffConfig dc;
  const double h = 1e-3;
  int checked = 0, bad = 0;
  double worst = 0;
  std::string worst_name;
  for (int config = 0; config < 10; ++config) {
    const Index w = 160, hgt = 96;
    const TextElement e = dt::random_element(rng, w, hgt);
    const RefinableParams p = random_soft_params(rng, e, w, hgt);
    const RasterImage bg = dt::random_image(rng, w, hgt).crop(p.crop);
    // Binary noise target: every channel is 0 or 1 while renders stay strictly
    // inside (0, 1), so no residual changes sign and the L1 kink never enters
    // the finite-difference stencil.
    RasterImage target(p.crop.width, p.crop.height);
    for (Index y = 0; y < target.height(); ++y) {
      for (Index x = 0; x < target.width(); ++x) {
        target.set_pixel(x, y, Color(rng() % 2, rng() % 2, rng() % 2).cast<float>());
      }
    }
    const LossAndGradients lg = loss_and_gradients(p, dt::atlas(), bg, target, dc);
    const Eigen::VectorXd theta = pack(p);
    for (Index i = 0; i < theta.size(); ++i) {
      const double g = lg.grads.values[i];
      if (std::abs(g) <= 1e-6) continue;
      RefinableParams a = p, b = p;
      Eigen::VectorXd ta = theta, tb = theta;
      ta[i] += h;
      tb[i] -= h;
      unpack(ta, a);
      unpack(tb, b);
      const double fd =
          (evaluate_loss(a, dt::atlas(), bg, target, dc) - evaluate_loss(b, dt::atlas(), bg, target, dc)) / (2 * h);
      const double rel = std::abs(g - fd) / std::max(std::abs(g), std::abs(fd));
      ++checked;
      if (rel >= 1e-3) ++bad;
      if (rel > worst) {
        worst = rel;
        for (const auto& s : lg.grads.index_map) {
          if (i >= s.offset && i < s.offset + s.size) worst_name = fmt::format("{}[{}]", s.name, i - s.offset);
        }
      }
    }
  }
  const double elapsed = seconds_since(t0);
  return {bad == 0 && checked > 0 && elapsed < 120,
          fmt::format("{} partials checked, {} over 1e-3, worst rel err {:.2e} ({}), {:.1f} s", checked, bad, worst,
                      worst_name, elapsed)};
}

Outcome one_hot_consistency() {
  std::mt19937_64 rng(404);
  const DiffConfig dc;
  double worst = 0;
  int ok = 0;
  for (int t = 0; t < 20; ++t) {
    const Index w = 200, h = 110;
    TextElement e = dt::random_element(rng, w, h);
    if (rng() % 2) e.effects.border.visible = false;
    if (rng() % 2) e.effects.shadow.visible = false;
    Document doc;
    doc.canvas_width = w;
    doc.canvas_height = h;
    doc.background = dt::random_image(rng, w, h);
    doc.elements = {e};
    const RasterImage crisp = render_document(doc, dt::atlas());
    const RefinableParams p = params_from_element(e, dt::atlas(), w, h, dc);
    const auto soft = reconstruct(p, dt::atlas(), doc.background.crop(p.crop), dc);
    const double l1 = l1_error(soft, crisp.crop(p.crop).cast<double>());
    worst = std::max(worst, l1);
    ok += l1 < 0.02;
  }
  return {ok == 20, fmt::format("{}/20 elements under 0.02, worst L1 {:.5f}", ok, worst)};
}

std::vector<Sample> suite_samples() {
  GenConfig gc;
  gc.seed = kSuiteSeed;
  gc.count = kSuiteSize;
  return generate(gc, dt::atlas());
}

Outcome refinement_recovery(const SuiteReport& r, double elapsed) {
  const bool pass = r.improved_fraction == 1.0 && r.font_fraction >= 0.8 && r.fill_fraction >= 0.9 &&
                    r.max_wall_time <= 10.0;
  return {pass, fmt::format("{} cases: PSNR improved {:.0f}%, font recovered {:.0f}%, fill within {} {:.0f}%, "
                            "mean PSNR {:.2f} -> {:.2f} dB, max {:.2f} s/word ({:.0f} s total)",
                            r.cases.size(), 100 * r.improved_fraction, 100 * r.font_fraction, kFillTolerance,
                            100 * r.fill_fraction, r.mean_initial_psnr, r.mean_final_psnr, r.max_wall_time,
                            elapsed)};
}

Outcome ablation_ordering(const std::vector<SuiteCase>& cases, double full_psnr) {
  const auto w_o_color = run_suite(cases, dt::atlas(), {}, {}, {ParamGroup::color});
  const auto w_o_border = run_suite(cases, dt::atlas(), {}, {}, {ParamGroup::border});
  return {w_o_color.mean_final_psnr < w_o_border.mean_final_psnr,
          fmt::format("mean PSNR full {:.2f}, w/o color {:.2f}, w/o border {:.2f} dB", full_psnr,
                      w_o_color.mean_final_psnr, w_o_border.mean_final_psnr)};
}

Outcome export_fidelity(const std::vector<Sample>& samples) {
  const DiffConfig dc;
  double worst_l1 = 0;
  double worst_size = 0, worst_fit_size = 0;
  int ok = 0, elements = 0;
  for (const auto& s : samples) {
    Document out;
    out.canvas_width = s.truth.canvas_width;
    out.canvas_height = s.truth.canvas_height;
    out.background = s.truth.background;
    for (std::size_t k = 0; k < s.truth.elements.size(); ++k) {
      const TextElement& t = s.truth.elements[k];
      const RefinableParams p = params_from_element(t, dt::atlas(), out.canvas_width, out.canvas_height, dc);
      const PixelRect& b = s.word_boxes[k];
      const Box word{double(b.x0), double(b.y0), double(b.x1()), double(b.y1())};
      out.elements.push_back(export_element(p, dt::atlas(), word, dc));
      worst_size = std::max(worst_size, std::abs(out.elements.back().font_size - t.font_size));
      const auto fit = fit_geometry(char_boxes(p, t.font_index, dt::atlas()), word, t.font_index, t.text, dt::atlas());
      worst_fit_size = std::max(worst_fit_size, std::abs(fit.font_size - t.font_size));
      ++elements;
    }
    const double l1 = l1_error(render_document(out, dt::atlas()), s.image);
    worst_l1 = std::max(worst_l1, l1);
    ok += l1 < 0.01;
  }
  const bool pass = ok == static_cast<int>(samples.size()) && worst_size <= 1 && worst_fit_size <= 1;
  return {pass, fmt::format("{}/{} samples with L1 < 0.01 (worst {:.5f}); size error max {} px over {} elements "
                            "(fit_geometry {} px)",
                            ok, samples.size(), worst_l1, worst_size, elements, worst_fit_size)};
}

bool same_file(const std::filesystem::path& a, const std::filesystem::path& b) {
  return read_file_bytes(a) == read_file_bytes(b);
}

Outcome datagen_consistency(const std::vector<Sample>& samples) {
  int render_ok = 0;
  for (const auto& s : samples) render_ok += bit_equal(render_document(s.truth, dt::atlas()), s.image);

  const auto again = suite_samples();
  int regen_ok = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    regen_ok += bit_equal(again[i].image, samples[i].image) &&
                serialize_document(again[i].truth) == serialize_document(samples[i].truth) &&
                again[i].word_boxes == samples[i].word_boxes;
  }

  // On disk: two corpora from the same seed, and each truth file re-rendered
  // to PNG must reproduce the corpus PNG byte for byte.
  GenConfig gc;
  gc.seed = kSuiteSeed;
  gc.count = kSuiteSize;
  const auto dir_a = dt::scratch_dir() / "corpus_a", dir_b = dt::scratch_dir() / "corpus_b";
  write_corpus(gc, dt::atlas(), dir_a);
  write_corpus(gc, dt::atlas(), dir_b);
  int files_ok = 0, png_ok = 0, files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir_a)) {
    ++files;
    files_ok += same_file(entry.path(), dir_b / entry.path().filename());
    if (entry.path().extension() == ".json" && entry.path().filename() != "manifest.json") {
      const Document doc = load_document(entry.path());
      auto png = entry.path();
      png.replace_extension(".png");
      png_ok += render_png(doc, dt::atlas()) == read_file_bytes(png);
    }
  }
  const int n = static_cast<int>(samples.size());
  const bool pass = render_ok == n && regen_ok == n && files_ok == files && png_ok == n;
  return {pass, fmt::format("truth renders bit-identical {}/{}, regeneration identical {}/{}, corpus files "
                            "identical {}/{}, PNG re-render identical {}/{}",
                            render_ok, n, regen_ok, n, files_ok, files, png_ok, n)};
}

// Hole = every pixel the word touches; fill error measured over the hole.
struct HoleStats {
  double max_error = 0;
  double mean_error = 0;
};

HoleStats inpaint_trial(std::mt19937_64& rng, const RasterImage& bg) {
  const Index w = bg.width(), h = bg.height();
  const TextElement e = dt::random_element(rng, w, h);
  const EffectAlphas alphas = render_effect_alphas(e, dt::atlas(), w, h);
  const RasterImage img = composite_element(bg, alphas, e.effects);
  AlphaMap mask(w, h);
  mask.plane() = alphas.fill.plane().max(alphas.border.plane()).max(alphas.shadow.plane());
  const RasterImage filled = inpaint(img, mask);
  const Plane<bool> hole = inpaint_hole(mask);
  HoleStats s;
  double sum = 0;
  Index count = 0;
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      if (!hole(y, x)) continue;
      const double err = (filled.pixel(x, y) - bg.pixel(x, y)).abs().maxCoeff();
      s.max_error = std::max(s.max_error, err);
      sum += (filled.pixel(x, y) - bg.pixel(x, y)).abs().cast<double>().mean();
      ++count;
    }
  }
  s.mean_error = count ? sum / count : 0;
  return s;
}

Outcome inpainting() {
  std::mt19937_64 rng(505);
  const Index w = 200, h = 110;
  double flat_worst = 0, grad_worst = 0;
  for (int t = 0; t < 10; ++t) {
    flat_worst = std::max(flat_worst, inpaint_trial(rng, RasterImage::filled(w, h, random_color(rng))).max_error);

    const Color a = random_color(rng), b = random_color(rng);
    const double angle = dt::uniform(rng, 0, 2 * M_PI);
    const Eigen::Vector2d dir(std::cos(angle), std::sin(angle));
    RasterImage ramp(w, h);
    const double span = std::abs(dir.x()) * (w - 1) + std::abs(dir.y()) * (h - 1);
    const double lo = std::min(0.0, dir.x() * (w - 1)) + std::min(0.0, dir.y() * (h - 1));
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        const double u = (dir.x() * x + dir.y() * y - lo) / span;
        ramp.set_pixel(x, y, ((1 - u) * a + u * b).cast<float>());
      }
    }
    grad_worst = std::max(grad_worst, inpaint_trial(rng, ramp).mean_error);
  }
  return {flat_worst <= 0.02 && grad_worst < 0.05,
          fmt::format("flat hole max error {:.2e} (10 words), linear-gradient hole mean error max {:.4f} (10 words)",
                      flat_worst, grad_worst)};
}

std::string effect_text(const nlohmann::json& doc, const char* effect) {
  return doc["elements"][0]["effects"][effect].dump();
}

Outcome edit_scenario(const std::vector<Sample>& samples) {
  const auto words = GenConfig::default_word_list();
  const auto dir = dt::scratch_dir() / "edit";
  std::filesystem::create_directories(dir);
  int edited = 0, fill_ok = 0, bytes_ok = 0;
  double worst = 0;
  std::string failure;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const std::string before_path = (dir / fmt::format("{:04}.json", i)).string();
    const std::string after_path = (dir / fmt::format("{:04}.edited.json", i)).string();
    save_document(s.truth, before_path);

    // Replacement of the same length keeps the word on the canvas.
    const std::string& old_text = s.truth.elements[0].text;
    std::string new_text;
    for (std::size_t k = 0; k < words.size() && new_text.empty(); ++k) {
      const auto& cand = words[(i + k) % words.size()];
      if (cand != old_text && cand.size() == old_text.size()) new_text = cand;
    }
    if (new_text.empty()) new_text = std::string(old_text.rbegin(), old_text.rend());

    const auto run = dt::run_cli(fmt::format("edit --atlas '{}' --doc '{}' --set 'elements[0].text=\"{}\"' --out '{}'",
                                             DERENDER_TEST_ATLAS, before_path, new_text, after_path));
    if (run.exit_code != 0) {
      failure = run.output;
      continue;
    }
    ++edited;
    const nlohmann::json before = nlohmann::json::parse(std::ifstream(before_path));
    const nlohmann::json after = nlohmann::json::parse(std::ifstream(after_path));
    bytes_ok += effect_text(before, "border") == effect_text(after, "border") &&
                effect_text(before, "shadow") == effect_text(after, "shadow") &&
                after["elements"][0]["text"] == new_text;

    const Document doc = load_document(after_path);
    const TextElement& e = doc.elements[0];
    const RasterImage img = render_document(doc, dt::atlas());
    const EffectAlphas alphas = render_effect_alphas(e, dt::atlas(), doc.canvas_width, doc.canvas_height);
    const PixelRect region = word_crop(layout(e, dt::atlas()).word_box, doc.canvas_width, doc.canvas_height, {});
    const DecomposedColors d = decompose_colors(img, doc.background, alphas,
                                                {e.effects.border.visible, e.effects.shadow.visible}, region);
    if (!d.fill) continue;
    const double err = (*d.fill - s.truth.elements[0].effects.fill.color).abs().maxCoeff();
    worst = std::max(worst, err);
    fill_ok += err <= 1.0 / 32;
  }
  const int n = static_cast<int>(samples.size());
  std::string detail = fmt::format("{}/{} edits applied, fill within 1/32 {}/{} (worst {:.4f}), border/shadow "
                                   "JSON byte-identical {}/{}",
                                   edited, n, fill_ok, n, worst, bytes_ok, n);
  if (!failure.empty()) detail += "; last CLI error: " + failure;
  return {edited == n && fill_ok == n && bytes_ok == n, detail};
}

}  // namespace

int main(int argc, char** argv) {
  selected.assign(argv + 1, argv + argc);
  const auto t0 = Clock::now();
  fmt::print("atlas: {} fonts, {} glyphs, {} px cells\n", dt::atlas().font_count(), dt::atlas().glyph_count(),
             dt::atlas().cell_resolution());

  criterion("compositing identities", compositing_identities);
  criterion("decompose round trip", decompose_round_trip);
  criterion("gradient correctness", gradient_correctness);
  criterion("one-hot consistency", one_hot_consistency);

  std::vector<Sample> samples;
  std::vector<SuiteCase> cases;
  SuiteReport suite;
  bool suite_ok = false;
  const bool need_samples = wanted("refinement recovery") || wanted("ablation ordering") ||
                            wanted("export fidelity") || wanted("datagen self-consistency") ||
                            wanted("edit scenario");
  if (need_samples) {
    try {
      samples = suite_samples();
      cases = build_suite(samples, dt::atlas(), kPerturbSeed);
      const auto ts = Clock::now();
      suite = run_suite(cases, dt::atlas());
      report("refinement recovery", refinement_recovery(suite, seconds_since(ts)));
      suite_ok = true;
    } catch (const std::exception& e) {
      report("refinement recovery", {false, fmt::format("threw: {}", e.what())});
    }
  }
  if (suite_ok) {
    criterion("ablation ordering", [&] { return ablation_ordering(cases, suite.mean_final_psnr); });
  } else {
    report("ablation ordering", {false, "suite unavailable"});
  }
  auto on_samples = [&](Outcome (*fn)(const std::vector<Sample>&)) {
    return [&samples, fn] { return samples.empty() ? Outcome{false, "no samples generated"} : fn(samples); };
  };
  criterion("export fidelity", on_samples(export_fidelity));
  criterion("datagen self-consistency", on_samples(datagen_consistency));
  criterion("inpainting", inpainting);
  criterion("edit scenario", on_samples(edit_scenario));

  fmt::print("{} criteria failed, {:.0f} s total\n", failures, seconds_since(t0));
  std::filesystem::remove_all(dt::scratch_dir());
  return failures == 0 ? 0 : 1;
}
