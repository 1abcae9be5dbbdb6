#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "derender/datagen.hpp"
#include "derender/refine.hpp"

namespace derender {

/// Perturbation applied to ground-truth parameters before refinement:
/// every fill channel moves by +-0.2 (random sign, clamped to [0, 1]), each
/// shadow offset axis by +-2 px, and the font logits become 0 except for one
/// uniformly drawn wrong font at +2, so the truth stays in the top-20
/// support but loses the argmax.
struct Perturbation {
  double fill_delta = 0.2;
  double offset_delta = 2.0;
  double wrong_font_logit = 2.0;
};

/// Applies `perturbation` with signs and the wrong font drawn from `seed`.
RefinableParams perturb(const RefinableParams& truth, int true_font, std::uint64_t seed,
                        const Perturbation& perturbation = {});

struct SuiteCase {
  int sample = 0;  // index into the corpus
  int element = 0;
  TextElement truth_element;
  RefinableParams truth;
  RefinableParams initial;
  RasterImage background_crop;  // ground-truth background under the crop
  RasterImage target;
};

inline constexpr std::uint64_t kSuiteSeed = 42;
inline constexpr std::uint64_t kCalibrationSeed = 7;
inline constexpr std::uint64_t kPerturbSeed = 1234;
inline constexpr int kSuiteSize = 50;

/// One case per element of every sample.
std::vector<SuiteCase> build_suite(const std::vector<Sample>& samples, const GlyphAtlas& atlas,
                                   std::uint64_t perturb_seed = kPerturbSeed, const DiffConfig& config = {},
                                   const Perturbation& perturbation = {});

/// Reads a corpus written by write_corpus(): images come from the PNGs.
std::vector<Sample> load_corpus(const std::filesystem::path& dir, const GlyphAtlas& atlas);

struct CaseResult {
  int sample = 0;
  int element = 0;
  std::string text;
  double initial_l1 = 0, final_l1 = 0;
  double initial_psnr = 0, final_psnr = 0;
  int true_font = 0;
  int recovered_font = 0;
  double fill_error = 0;  // max channel error of the refined fill colour
  double wall_time = 0;
  bool failed = false;
};

inline constexpr double kFillTolerance = 0.05;

struct SuiteReport {
  std::vector<CaseResult> cases;
  double improved_fraction = 0;  // final PSNR > initial PSNR
  double font_fraction = 0;
  double fill_fraction = 0;  // fill error within kFillTolerance
  double mean_initial_psnr = 0;
  double mean_final_psnr = 0;
  double max_wall_time = 0;
};

/// Refines every case (in parallel over `threads`, 0 = hardware) and scores it.
SuiteReport run_suite(const std::vector<SuiteCase>& cases, const GlyphAtlas& atlas, const RefineConfig& rc = {},
                      const DiffConfig& dc = {}, const FrozenGroups& frozen = {}, int threads = 0);

/// Mean final PSNR per ablation: "full" plus one entry per frozen group
/// ("w/o font", "w/o placement", "w/o color", "w/o border", "w/o shadow").
std::map<std::string, double> run_ablation(const std::vector<SuiteCase>& cases, const GlyphAtlas& atlas,
                                           const RefineConfig& rc = {}, const DiffConfig& dc = {},
                                           int threads = 0);

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers (0 = hardware).
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace derender
