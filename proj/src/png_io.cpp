#include "derender/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstring>
#include <fstream>
#include <string>

#include <fmt/format.h>

namespace derender {
namespace {

struct ReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void read_callback(png_structp png, png_bytep out, png_size_t count) {
  auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cursor->offset + count > cursor->bytes.size()) {
    png_error(png, "truncated PNG data");
  }
  std::memcpy(out, cursor->bytes.data() + cursor->offset, count);
  cursor->offset += count;
}

void write_callback(png_structp png, png_bytep data, png_size_t count) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + count);
}

void flush_callback(png_structp) {}

// libpng reports errors by longjmp; the message is parked here and rethrown
// as an Error once control is back in C++ frames.
struct ErrorSlot {
  std::string message;
};

[[noreturn]] void error_callback(png_structp png, png_const_charp message) {
  auto* slot = static_cast<ErrorSlot*>(png_get_error_ptr(png));
  slot->message = message ? message : "unknown libpng error";
  std::longjmp(png_jmpbuf(png), 1);
}

void warning_callback(png_structp, png_const_charp) {}

struct DecodedPng {
  Index width = 0;
  Index height = 0;
  int channels = 0;  // 1 (gray) or 3 (rgb) after normalization
  std::vector<std::uint8_t> pixels;
};

void decode_into(png_structp png, png_infop info, ReadCursor* cursor, bool want_gray,
                 DecodedPng* result, std::vector<png_bytep>* rows) {
  png_set_read_fn(png, cursor, read_callback);
  png_read_info(png, info);
  const auto bit_depth = png_get_bit_depth(png, info);
  const auto color_type = png_get_color_type(png, info);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  const bool source_gray =
      !(color_type & PNG_COLOR_MASK_COLOR) && color_type != PNG_COLOR_TYPE_PALETTE;
  if (want_gray && !source_gray) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  } else if (!want_gray && source_gray) {
    png_set_gray_to_rgb(png);
  }
  png_read_update_info(png, info);
  result->width = png_get_image_width(png, info);
  result->height = png_get_image_height(png, info);
  result->channels = png_get_channels(png, info);
  const auto rowbytes = png_get_rowbytes(png, info);
  result->pixels.resize(rowbytes * result->height);
  rows->resize(result->height);
  for (Index y = 0; y < result->height; ++y) (*rows)[y] = result->pixels.data() + y * rowbytes;
  png_read_image(png, rows->data());
  png_read_end(png, nullptr);
}

DecodedPng decode(std::span<const std::uint8_t> bytes, bool want_gray) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw Error("imaging", "not a PNG file");
  }
  ErrorSlot slot;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &slot, error_callback, warning_callback);
  if (!png) throw Error("imaging", "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  ReadCursor cursor{bytes, 0};
  DecodedPng result;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("imaging", fmt::format("png: {}", slot.message));
  }
  decode_into(png, info, &cursor, want_gray, &result, &rows);
  png_destroy_read_struct(&png, &info, nullptr);
  return result;
}

void encode_into(png_structp png, png_infop info, Index width, Index height, int channels,
                 const std::vector<std::uint8_t>* pixels, std::vector<std::uint8_t>* out) {
  png_set_write_fn(png, out, write_callback, flush_callback);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (Index y = 0; y < height; ++y) {
    png_write_row(png, pixels->data() + y * width * channels);
  }
  png_write_end(png, nullptr);
}

std::vector<std::uint8_t> encode(Index width, Index height, int channels,
                                 const std::vector<std::uint8_t>& pixels) {
  std::vector<std::uint8_t> out;
  ErrorSlot slot;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &slot, error_callback, warning_callback);
  if (!png) throw Error("imaging", "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("imaging", fmt::format("png: {}", slot.message));
  }
  encode_into(png, info, width, height, channels, &pixels, &out);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace

RasterImage decode_png(std::span<const std::uint8_t> bytes) {
  const auto d = decode(bytes, false);
  if (d.channels != 3) throw Error("imaging", "unexpected PNG channel layout");
  RasterImage img(d.width, d.height);
  for (Index y = 0; y < d.height; ++y) {
    for (Index x = 0; x < d.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        img(x, y, c) = d.pixels[(y * d.width + x) * 3 + c] / 255.0f;
      }
    }
  }
  return img;
}

std::vector<std::uint8_t> encode_png(const RasterImage& image) {
  if (image.empty()) throw Error("imaging", "cannot encode an empty image");
  std::vector<std::uint8_t> pixels(image.width() * image.height() * 3);
  for (Index y = 0; y < image.height(); ++y) {
    for (Index x = 0; x < image.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        pixels[(y * image.width() + x) * 3 + c] = to_8bit(image(x, y, c));
      }
    }
  }
  return encode(image.width(), image.height(), 3, pixels);
}

std::vector<std::uint8_t> encode_png(const AlphaMap& alpha) {
  if (alpha.empty()) throw Error("imaging", "cannot encode an empty alpha map");
  std::vector<std::uint8_t> pixels(alpha.width() * alpha.height());
  for (Index y = 0; y < alpha.height(); ++y) {
    for (Index x = 0; x < alpha.width(); ++x) {
      pixels[y * alpha.width() + x] = to_8bit(alpha(x, y));
    }
  }
  return encode(alpha.width(), alpha.height(), 1, pixels);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", fmt::format("cannot open '{}'", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", fmt::format("cannot write '{}'", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("io", fmt::format("short write to '{}'", path.string()));
}

RasterImage read_png(const std::filesystem::path& path) { return decode_png(read_file_bytes(path)); }

AlphaMap read_alpha_png(const std::filesystem::path& path) {
  const auto d = decode(read_file_bytes(path), true);
  if (d.channels != 1) throw Error("imaging", "unexpected PNG channel layout");
  AlphaMap a(d.width, d.height);
  for (Index y = 0; y < d.height; ++y) {
    for (Index x = 0; x < d.width; ++x) a(x, y) = d.pixels[y * d.width + x] / 255.0f;
  }
  return a;
}

void write_png(const std::filesystem::path& path, const RasterImage& image) {
  write_file_bytes(path, encode_png(image));
}

void write_png(const std::filesystem::path& path, const AlphaMap& alpha) {
  write_file_bytes(path, encode_png(alpha));
}

}  // namespace derender
