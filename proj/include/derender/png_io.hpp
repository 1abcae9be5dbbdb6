#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "derender/imaging.hpp"

namespace derender {

// 8-bit PNG interchange. RGBA input is accepted and its alpha channel is
// ignored (never premultiplied); output is always 8-bit RGB or gray.

RasterImage decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const RasterImage& image);
std::vector<std::uint8_t> encode_png(const AlphaMap& alpha);

RasterImage read_png(const std::filesystem::path& path);
AlphaMap read_alpha_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RasterImage& image);
void write_png(const std::filesystem::path& path, const AlphaMap& alpha);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace derender
