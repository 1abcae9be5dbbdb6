#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "derender/compositor.hpp"

namespace derender {

inline constexpr int kDocumentVersion = 1;

enum class BackgroundEncoding {
  automatic,  // "color" for uniform backgrounds, otherwise inline PNG
  inline_png,
};

/// Document file schema (version 1):
///
///   {
///     "format": "derender-document", "version": 1,
///     "canvas": {"width": int, "height": int},
///     "background": {"color": [r,g,b]} | {"png_base64": str} | {"png": relative path},
///     "elements": [{
///       "text": str, "font_index": int, "font_size": num, "origin": [x, y],
///       "char_offsets": [[dx, dy], ...]            (optional),
///       "effects": {
///         "fill":   {"color": [r,g,b]},
///         "border": {"visible": bool, "width_bin": 1..5, "color": [r,g,b]},
///         "shadow": {"visible": bool, "blur": num, "offset": [dx, dy], "color": [r,g,b]}
///       }
///     }]
///   }
///
/// Colors are integers 0..255 (round half up on save). Unknown keys are errors.
nlohmann::json document_to_json(const Document& doc,
                                BackgroundEncoding encoding = BackgroundEncoding::automatic);
nlohmann::json element_to_json(const TextElement& element);

/// `base_dir` resolves {"png": path} backgrounds.
Document document_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
TextElement element_from_json(const nlohmann::json& j, const std::string& path = "element");

std::string serialize_document(const Document& doc);
Document parse_document(std::string_view text, const std::filesystem::path& base_dir = {});

void save_document(const Document& doc, const std::filesystem::path& path);
Document load_document(const std::filesystem::path& path);

/// Applies `path=value` patches to a document's JSON form. Paths address
/// existing fields with dots and [i] indices, e.g. elements[0].effects.border.color.
/// The new value must have the same JSON type (and array length) as the old one.
nlohmann::json apply_patch(const nlohmann::json& doc, std::string_view path, std::string_view value);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace derender
