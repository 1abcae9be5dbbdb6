// derender: command-line front end.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include <fmt/format.h>

#include "derender/atlas.hpp"
#include "derender/datagen.hpp"
#include "derender/document.hpp"
#include "derender/export.hpp"
#include "derender/pipeline.hpp"
#include "derender/png_io.hpp"
#include "derender/recovery_suite.hpp"
#include "derender/service.hpp"

namespace fs = std::filesystem;
using namespace derender;

namespace {

PixelRect parse_box(const std::string& s) {
  std::vector<Index> v;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stoll(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--box", fmt::format("'{}' is not x,y,w,h", s));
    }
  }
  if (v.size() != 4) throw CLI::ValidationError("--box", fmt::format("'{}' is not x,y,w,h", s));
  return {v[0], v[1], v[2], v[3]};
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cli", fmt::format("cannot read '{}'", path.string()));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    out.push_back(line.substr(b, line.find_last_not_of(" \t\r") - b + 1));
  }
  return out;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw Error("cli", fmt::format("cannot write '{}'", path.string()));
}

void print_word_table(const std::vector<WordReport>& words) {
  fmt::print("{:<4} {:<16} {:>9} {:>9} {:>10} {:>10} {:>8}  {}\n", "word", "text", "L1 init", "L1 final",
             "PSNR init", "PSNR final", "time s", "font");
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i];
    fmt::print("{:<4} {:<16} {:>9.5f} {:>9.5f} {:>10.2f} {:>10.2f} {:>8.2f}  {}{}\n", i, w.text, w.l1_before,
               w.l1_after, w.psnr_before, w.psnr_after, w.wall_time, w.font, w.failed ? "  FAILED: " + w.error : "");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text de-rendering: recover editable text rendering parameters from raster images."};
  app.require_subcommand(1);

  // build-atlas
  auto* atlas_cmd = app.add_subcommand("build-atlas", "Pre-render glyph cells for a font list");
  fs::path fonts_dir, font_list, glyph_file, atlas_out;
  int resolution = kDefaultCellResolution;
  bool sharded = false;
  atlas_cmd->add_option("--fonts-dir", fonts_dir, "Directory of .ttf files")->required();
  atlas_cmd->add_option("--font-list", font_list, "File naming fonts in --fonts-dir, one per line (default: all)");
  atlas_cmd->add_option("--glyphs", glyph_file, "Glyph-set file (default: printable ASCII)");
  atlas_cmd->add_option("--resolution", resolution, "Cell side in pixels")->check(CLI::Range(16, 512));
  atlas_cmd->add_option("--out", atlas_out, "Atlas file, or directory with --sharded")->required();
  atlas_cmd->add_flag("--sharded", sharded, "Write a manifest plus one shard per font");

  // gen
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic ground-truth corpus");
  fs::path atlas_path, gen_out, words_file, user_bg;
  GenConfig gc;
  std::vector<std::string> bg_kinds;
  gen_cmd->add_option("--atlas", atlas_path, "Atlas file or directory")->required();
  gen_cmd->add_option("--out", gen_out, "Output directory")->required();
  gen_cmd->add_option("--count", gc.count, "Number of samples")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--seed", gc.seed, "Corpus seed");
  gen_cmd->add_option("--words", words_file, "Word list file, one word per line");
  gen_cmd->add_option("--words-per-sample", gc.words_per_sample)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--backgrounds", bg_kinds, "flat, linear-gradient, noise-texture, user-image")->delimiter(',');
  gen_cmd->add_option("--user-backgrounds", user_bg, "Directory of .png backgrounds for user-image");

  // render
  auto* render_cmd = app.add_subcommand("render", "Render a document to PNG");
  fs::path doc_path, png_out;
  double scale = 1.0;
  render_cmd->add_option("--atlas", atlas_path)->required();
  render_cmd->add_option("--doc", doc_path)->required();
  render_cmd->add_option("--out", png_out)->required();
  render_cmd->add_option("--scale", scale)->check(CLI::PositiveNumber);

  // edit
  auto* edit_cmd = app.add_subcommand("edit", "Patch fields of a document");
  std::vector<std::string> sets;
  fs::path doc_out;
  edit_cmd->add_option("--atlas", atlas_path)->required();
  edit_cmd->add_option("--doc", doc_path)->required();
  edit_cmd->add_option("--set", sets, "path=value, e.g. elements[0].text=\"NEW\"")->required();
  edit_cmd->add_option("--out", doc_out)->required();

  // derender
  auto* der_cmd = app.add_subcommand("derender", "Recover a document from an image and word boxes");
  fs::path image_path, report_path, truth_path;
  std::vector<std::string> box_args, texts;
  int iters = 200, threads = 0;
  std::uint64_t seed = 0;
  bool do_perturb = false;
  der_cmd->add_option("--atlas", atlas_path)->required();
  der_cmd->add_option("--image", image_path)->required();
  der_cmd->add_option("--box", box_args, "x,y,w,h (repeatable)");
  der_cmd->add_option("--text", texts, "Characters of each box (repeatable, same order)");
  der_cmd->add_option("--iters", iters, "Refinement iterations")->check(CLI::Range(1, 100000));
  der_cmd->add_option("--seed", seed, "Seed for --perturb");
  der_cmd->add_option("--threads", threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  der_cmd->add_option("--out", doc_out)->required();
  der_cmd->add_option("--report", report_path, "Per-word report JSON (default: <out>.report.json)");
  der_cmd->add_option("--truth", truth_path, "Ground-truth document (boxes and texts default to its words)");
  der_cmd->add_flag("--perturb", do_perturb, "Start from the perturbed ground truth instead of the heuristic guess")
      ->needs(der_cmd->get_option("--truth"));

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Compare predicted and ground-truth documents");
  fs::path pred_path, corpus_dir;
  bool ablation = false;
  eval_cmd->add_option("--atlas", atlas_path)->required();
  eval_cmd->add_option("--pred", pred_path, "Predicted document");
  eval_cmd->add_option("--truth", truth_path, "Ground-truth document");
  eval_cmd->add_flag("--ablation", ablation, "Run the component ablation on a corpus");
  eval_cmd->add_option("--corpus", corpus_dir, "Corpus directory written by `gen` (for --ablation)");
  eval_cmd->add_option("--iters", iters)->check(CLI::Range(1, 100000));
  eval_cmd->add_option("--threads", threads)->check(CLI::NonNegativeNumber);

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "HTTP service for render/derender/edit");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve_cmd->add_option("--atlas", atlas_path)->required();
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port)->check(CLI::Range(1, 65535));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*atlas_cmd) {
      std::vector<fs::path> files;
      if (font_list.empty()) {
        files = list_font_files(fonts_dir);
      } else {
        for (const auto& name : read_lines(font_list)) files.push_back(fonts_dir / name);
      }
      const std::string glyphs = glyph_file.empty() ? default_glyph_set() : read_glyph_set(glyph_file);
      const GlyphAtlas atlas = build_atlas(files, glyphs, resolution);
      if (sharded) {
        save_atlas_sharded(atlas, atlas_out);
      } else {
        save_atlas(atlas, atlas_out);
      }
      fmt::print("atlas: {} fonts x {} glyphs at {} px -> {}\n", atlas.font_count(), atlas.glyph_count(),
                 resolution, atlas_out.string());
      return 0;
    }

    const GlyphAtlas atlas = load_atlas(atlas_path);

    if (*gen_cmd) {
      if (!words_file.empty()) gc.words = read_lines(words_file);
      if (!bg_kinds.empty()) {
        gc.backgrounds.clear();
        for (const auto& k : bg_kinds) gc.backgrounds.push_back(background_kind_from_string(k));
      }
      gc.user_background_dir = user_bg;
      write_corpus(gc, atlas, gen_out);
      fmt::print("wrote {} samples to {}\n", gc.count, gen_out.string());
    } else if (*render_cmd) {
      const Document doc = load_document(doc_path);
      validate_document(doc, atlas);
      const auto png = render_png(doc, atlas, scale);
      write_file_bytes(png_out, png);
    } else if (*edit_cmd) {
      const Document doc = edit_document(document_to_json(load_document(doc_path)),
                                         sets, atlas);
      save_document(doc, doc_out);
    } else if (*der_cmd) {
      const RasterImage image = read_png(image_path);
      std::vector<PixelRect> boxes;
      for (const auto& b : box_args) boxes.push_back(parse_box(b));
      std::optional<Document> truth;
      if (!truth_path.empty()) {
        truth = load_document(truth_path);
        validate_document(*truth, atlas);
        if (truth->canvas_width != image.width() || truth->canvas_height != image.height()) {
          throw Error("cli", "--truth canvas does not match --image");
        }
        if (boxes.empty() && texts.empty()) {
          for (const auto& e : truth->elements) {
            boxes.push_back(word_pixel_box(e, atlas, image.width(), image.height()));
            texts.push_back(e.text);
          }
        }
      }
      if (boxes.size() != texts.size()) {
        std::cerr << fmt::format("error: {} --box but {} --text; give one --text per --box\n", boxes.size(),
                                 texts.size());
        return 2;
      }
      validate_words(image, boxes, texts);

      DerenderOptions opts;
      opts.refine.iterations = iters;
      opts.refine.seed = seed;
      opts.threads = threads;
      DerenderResult result;
      if (do_perturb) {
        if (!truth) throw CLI::ValidationError("--perturb", "requires --truth");
        if (truth->elements.size() != boxes.size()) throw Error("cli", "--perturb needs one box per truth element");
        std::vector<RefinableParams> initial;
        for (std::size_t k = 0; k < truth->elements.size(); ++k) {
          const auto& e = truth->elements[k];
          initial.push_back(perturb(params_from_element(e, atlas, image.width(), image.height(), opts.diff),
                                    e.font_index, seed * 1000003ull + k));
        }
        result = refine_words(image, truth->background, boxes, std::move(initial), atlas, opts);
      } else {
        result = derender_image(image, boxes, texts, atlas, opts);
      }
      save_document(result.document, doc_out);
      if (report_path.empty()) report_path = doc_out.string() + ".report.json";
      write_json(report_path, {{"words", report_to_json(result.words)}});
      print_word_table(result.words);
    } else if (*eval_cmd) {
      if (ablation) {
        if (corpus_dir.empty()) throw CLI::ValidationError("--corpus", "required with --ablation");
        RefineConfig rc;
        rc.iterations = iters;
        const auto cases = build_suite(load_corpus(corpus_dir, atlas), atlas);
        const auto table = run_ablation(cases, atlas, rc, {}, threads);
        for (const auto& [name, value] : table) {
          std::cout << nlohmann::json({{"config", name}, {"mean_psnr", value}}).dump() << "\n";
        }
        const bool ok = table.at("w/o color") < table.at("w/o border");
        std::cout << nlohmann::json({{"check", "w/o color < w/o border"}, {"pass", ok}}).dump() << "\n";
      } else {
        if (pred_path.empty() || truth_path.empty()) {
          throw CLI::ValidationError("eval", "--pred and --truth are required (or --ablation --corpus)");
        }
        const auto rows = evaluate_documents(load_document(pred_path), load_document(truth_path), atlas);
        for (const auto& r : rows) std::cout << eval_to_json(r).dump() << "\n";
      }
    } else if (*serve_cmd) {
      fmt::print("serving on http://{}:{} ({} fonts)\n", host, port, atlas.font_count());
      std::fflush(stdout);
      serve(atlas, host, port);
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
