#include "derender/recovery_suite.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "derender/document.hpp"
#include "derender/png_io.hpp"

namespace derender {

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

RefinableParams perturb(const RefinableParams& truth, int true_font, std::uint64_t seed, const Perturbation& pt) {
  std::mt19937_64 rng(seed);
  auto sign = [&] { return (rng() & 1) ? 1.0 : -1.0; };
  RefinableParams p = truth;
  Color fill = decode_color(truth.fill_color_logits);
  for (int c = 0; c < 3; ++c) fill[c] = std::clamp(fill[c] + sign() * pt.fill_delta, 0.0, 1.0);
  p.fill_color_logits = encode_color(fill);
  p.shadow_offset.x() += sign() * pt.offset_delta;
  p.shadow_offset.y() += sign() * pt.offset_delta;
  const int n = static_cast<int>(p.font_logits.size());
  p.font_logits.setZero();
  if (n > 1) {
    int wrong = static_cast<int>(rng() % static_cast<std::uint64_t>(n - 1));
    if (wrong >= true_font) ++wrong;
    p.font_logits[wrong] = pt.wrong_font_logit;
  }
  return p;
}

std::vector<SuiteCase> build_suite(const std::vector<Sample>& samples, const GlyphAtlas& atlas,
                                   std::uint64_t perturb_seed, const DiffConfig& config, const Perturbation& pt) {
  std::vector<SuiteCase> out;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const Document& doc = samples[s].truth;
    for (std::size_t k = 0; k < doc.elements.size(); ++k) {
      SuiteCase c;
      c.sample = static_cast<int>(s);
      c.element = static_cast<int>(k);
      c.truth_element = doc.elements[k];
      c.truth = params_from_element(c.truth_element, atlas, doc.canvas_width, doc.canvas_height, config);
      c.initial = perturb(c.truth, c.truth_element.font_index,
                          perturb_seed * 1000003ull + static_cast<std::uint64_t>(s) * 1009ull + k, pt);
      c.background_crop = doc.background.crop(c.truth.crop);
      c.target = samples[s].image.crop(c.truth.crop);
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::vector<Sample> load_corpus(const std::filesystem::path& dir, const GlyphAtlas& atlas) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error("datagen", fmt::format("no manifest.json in '{}'", dir.string()));
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("datagen", fmt::format("manifest.json: {}", e.what()));
  }
  std::vector<Sample> out;
  for (const auto& entry : manifest.at("samples")) {
    Sample s;
    s.truth = load_document(dir / entry.at("truth").get<std::string>());
    validate_document(s.truth, atlas);
    s.image = read_png(dir / entry.at("image").get<std::string>());
    for (const auto& b : entry.at("word_boxes")) {
      s.word_boxes.push_back({b.at(0).get<Index>(), b.at(1).get<Index>(), b.at(2).get<Index>(), b.at(3).get<Index>()});
    }
    out.push_back(std::move(s));
  }
  return out;
}

SuiteReport run_suite(const std::vector<SuiteCase>& cases, const GlyphAtlas& atlas, const RefineConfig& rc,
                      const DiffConfig& dc, const FrozenGroups& frozen, int threads) {
  SuiteReport report;
  report.cases.resize(cases.size());
  parallel_for(static_cast<int>(cases.size()), threads, [&](int i) {
    const SuiteCase& c = cases[i];
    const RefineResult r = refine(c.initial, atlas, c.background_crop, c.target, rc, dc, frozen);
    CaseResult& out = report.cases[i];
    out.sample = c.sample;
    out.element = c.element;
    out.text = c.truth.text;
    out.initial_l1 = r.report.initial_l1;
    out.final_l1 = r.report.final_l1;
    out.initial_psnr = r.report.initial_psnr;
    out.final_psnr = r.report.final_psnr;
    out.true_font = c.truth_element.font_index;
    out.recovered_font = static_cast<int>(
        std::max_element(r.params.font_logits.data(), r.params.font_logits.data() + r.params.font_logits.size()) -
        r.params.font_logits.data());
    out.fill_error = (decode_color(r.params.fill_color_logits) - c.truth_element.effects.fill.color).abs().maxCoeff();
    out.wall_time = r.report.wall_time;
    out.failed = r.report.failed;
  });
  // Counts first so that "all cases" is exactly 1.0.
  int improved = 0, font = 0, fill = 0;
  for (const auto& c : report.cases) {
    improved += c.final_psnr > c.initial_psnr;
    font += c.recovered_font == c.true_font;
    fill += c.fill_error <= kFillTolerance;
    report.mean_initial_psnr += c.initial_psnr;
    report.mean_final_psnr += c.final_psnr;
    report.max_wall_time = std::max(report.max_wall_time, c.wall_time);
  }
  const double n = std::max<double>(1.0, static_cast<double>(cases.size()));
  report.improved_fraction = improved / n;
  report.font_fraction = font / n;
  report.fill_fraction = fill / n;
  report.mean_initial_psnr /= n;
  report.mean_final_psnr /= n;
  return report;
}

std::map<std::string, double> run_ablation(const std::vector<SuiteCase>& cases, const GlyphAtlas& atlas,
                                           const RefineConfig& rc, const DiffConfig& dc, int threads) {
  std::map<std::string, double> out;
  out["full"] = run_suite(cases, atlas, rc, dc, {}, threads).mean_final_psnr;
  for (auto g : {ParamGroup::font, ParamGroup::placement, ParamGroup::color, ParamGroup::border, ParamGroup::shadow}) {
    out[fmt::format("w/o {}", group_name(g))] = run_suite(cases, atlas, rc, dc, {g}, threads).mean_final_psnr;
  }
  return out;
}

}  // namespace derender
