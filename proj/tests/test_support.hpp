#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "derender/atlas.hpp"
#include "derender/compositor.hpp"
#include "derender/imaging.hpp"

namespace derender::testing {

/// The shared 20-font atlas built by the build_test_atlas fixture.
const GlyphAtlas& atlas();

/// Path of a scratch directory unique to this process, created on demand.
std::filesystem::path scratch_dir();

struct CommandResult {
  int exit_code = 0;
  std::string output;  // stdout and stderr interleaved
};

/// Runs the derender CLI with `args` (already shell-quoted).
CommandResult run_cli(const std::string& args);

TextElement make_element(const std::string& text, int font, double size, double x, double y);

/// Random element with all three effects drawn from `rng`, placed fully inside
/// a canvas of the given size.
TextElement random_element(std::mt19937_64& rng, Index canvas_width, Index canvas_height);

RasterImage random_image(std::mt19937_64& rng, Index width, Index height);
AlphaMap random_alpha(std::mt19937_64& rng, Index width, Index height);

double uniform(std::mt19937_64& rng, double lo, double hi);

}  // namespace derender::testing
