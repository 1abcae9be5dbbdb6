#include "derender/document.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "derender/png_io.hpp"

namespace derender {

using nlohmann::json;

namespace {

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
  throw Error("export", fmt::format("{}: {}", path, what));
}

void expect_keys(const json& j, const std::string& path, std::initializer_list<const char*> required,
                 std::initializer_list<const char*> optional = {}) {
  if (!j.is_object()) schema_error(path, "expected an object");
  std::set<std::string> allowed;
  for (const char* k : required) {
    allowed.insert(k);
    if (!j.contains(k)) schema_error(path + "." + k, "missing field");
  }
  for (const char* k : optional) allowed.insert(k);
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) schema_error(path + "." + key, "unknown field");
  }
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) schema_error(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) schema_error(path, "must be finite");
  return v;
}

std::int64_t get_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) schema_error(path, "expected an integer");
  return j.get<std::int64_t>();
}

bool get_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) schema_error(path, "expected true or false");
  return j.get<bool>();
}

Eigen::Vector2d get_vec2(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) schema_error(path, "expected [x, y]");
  return {get_number(j[0], path + "[0]"), get_number(j[1], path + "[1]")};
}

Color get_color(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) schema_error(path, "expected [r, g, b]");
  Color c;
  for (int i = 0; i < 3; ++i) {
    const auto v = get_int(j[i], fmt::format("{}[{}]", path, i));
    if (v < 0 || v > 255) schema_error(path, "components must be in 0..255");
    c[i] = static_cast<double>(v) / 255.0;
  }
  return c;
}

json color_json(const Color& c) { return json::array({to_8bit(c[0]), to_8bit(c[1]), to_8bit(c[2])}); }

json vec2_json(const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); }

// Uniform background on the 8-bit grid, if it is one.
std::optional<std::array<int, 3>> uniform_8bit(const RasterImage& img) {
  std::array<int, 3> out{};
  for (int c = 0; c < 3; ++c) {
    const auto& ch = img.channel(c);
    const float v = ch(0, 0);
    if (!(ch == v).all()) return std::nullopt;
    out[c] = to_8bit(v);
    if (static_cast<float>(out[c]) / 255.0f != v) return std::nullopt;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<std::uint8_t> out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    if (c == '\n' || c == '\r' || c == ' ') continue;
    const int v = value(c);
    if (v < 0) throw Error("export", "invalid base64 data");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

json element_to_json(const TextElement& e) {
  json j;
  j["text"] = e.text;
  j["font_index"] = e.font_index;
  j["font_size"] = e.font_size;
  j["origin"] = vec2_json(e.origin);
  if (!e.char_offsets.empty()) {
    json offsets = json::array();
    for (const auto& o : e.char_offsets) offsets.push_back(vec2_json(o));
    j["char_offsets"] = offsets;
  }
  const auto& fx = e.effects;
  j["effects"] = {
      {"fill", {{"color", color_json(fx.fill.color)}}},
      {"border",
       {{"visible", fx.border.visible}, {"width_bin", fx.border.width_bin}, {"color", color_json(fx.border.color)}}},
      {"shadow",
       {{"visible", fx.shadow.visible},
        {"blur", fx.shadow.blur},
        {"offset", json::array({fx.shadow.offset_x, fx.shadow.offset_y})},
        {"color", color_json(fx.shadow.color)}}},
  };
  return j;
}

json document_to_json(const Document& doc, BackgroundEncoding encoding) {
  json j;
  j["format"] = "derender-document";
  j["version"] = kDocumentVersion;
  j["canvas"] = {{"width", doc.canvas_width}, {"height", doc.canvas_height}};
  const auto uniform = encoding == BackgroundEncoding::automatic && !doc.background.empty()
                           ? uniform_8bit(doc.background)
                           : std::nullopt;
  if (uniform) {
    j["background"] = {{"color", json::array({(*uniform)[0], (*uniform)[1], (*uniform)[2]})}};
  } else {
    j["background"] = {{"png_base64", base64_encode(encode_png(doc.background))}};
  }
  j["elements"] = json::array();
  for (const auto& e : doc.elements) j["elements"].push_back(element_to_json(e));
  return j;
}

TextElement element_from_json(const json& j, const std::string& path) {
  expect_keys(j, path, {"text", "font_index", "font_size", "origin", "effects"}, {"char_offsets"});
  TextElement e;
  if (!j["text"].is_string()) schema_error(path + ".text", "expected a string");
  e.text = j["text"].get<std::string>();
  if (e.text.empty()) schema_error(path + ".text", "must not be empty");
  const auto font = get_int(j["font_index"], path + ".font_index");
  if (font < 0) schema_error(path + ".font_index", "must be >= 0");
  e.font_index = static_cast<int>(font);
  e.font_size = get_number(j["font_size"], path + ".font_size");
  if (e.font_size <= 0) schema_error(path + ".font_size", "must be > 0");
  e.origin = get_vec2(j["origin"], path + ".origin");
  if (j.contains("char_offsets")) {
    const auto& offs = j["char_offsets"];
    if (!offs.is_array() || offs.size() != e.text.size()) {
      schema_error(path + ".char_offsets", "expected one [dx, dy] per character");
    }
    for (std::size_t i = 0; i < offs.size(); ++i) {
      e.char_offsets.push_back(get_vec2(offs[i], fmt::format("{}.char_offsets[{}]", path, i)));
    }
  }
  const std::string fp = path + ".effects";
  const auto& fx = j["effects"];
  expect_keys(fx, fp, {"fill", "border", "shadow"});
  expect_keys(fx["fill"], fp + ".fill", {"color"});
  e.effects.fill.color = get_color(fx["fill"]["color"], fp + ".fill.color");

  const auto& b = fx["border"];
  expect_keys(b, fp + ".border", {"visible", "width_bin", "color"});
  e.effects.border.visible = get_bool(b["visible"], fp + ".border.visible");
  const auto bin = get_int(b["width_bin"], fp + ".border.width_bin");
  if (bin < 1 || bin > kBorderBins) schema_error(fp + ".border.width_bin", "must be in 1..5");
  e.effects.border.width_bin = static_cast<int>(bin);
  e.effects.border.color = get_color(b["color"], fp + ".border.color");

  const auto& s = fx["shadow"];
  expect_keys(s, fp + ".shadow", {"visible", "blur", "offset", "color"});
  e.effects.shadow.visible = get_bool(s["visible"], fp + ".shadow.visible");
  e.effects.shadow.blur = get_number(s["blur"], fp + ".shadow.blur");
  if (e.effects.shadow.blur < 0) schema_error(fp + ".shadow.blur", "must be >= 0");
  const auto off = get_vec2(s["offset"], fp + ".shadow.offset");
  e.effects.shadow.offset_x = off.x();
  e.effects.shadow.offset_y = off.y();
  e.effects.shadow.color = get_color(s["color"], fp + ".shadow.color");
  return e;
}

Document document_from_json(const json& j, const std::filesystem::path& base_dir) {
  expect_keys(j, "document", {"format", "version", "canvas", "background", "elements"});
  if (j["format"] != "derender-document") schema_error("format", "expected \"derender-document\"");
  const auto version = get_int(j["version"], "version");
  if (version != kDocumentVersion) {
    schema_error("version", fmt::format("unsupported version {} (expected {})", version, kDocumentVersion));
  }
  Document doc;
  expect_keys(j["canvas"], "canvas", {"width", "height"});
  doc.canvas_width = get_int(j["canvas"]["width"], "canvas.width");
  doc.canvas_height = get_int(j["canvas"]["height"], "canvas.height");
  if (doc.canvas_width <= 0 || doc.canvas_height <= 0 || doc.canvas_width > kMaxCanvasSide ||
      doc.canvas_height > kMaxCanvasSide) {
    schema_error("canvas", fmt::format("dimensions must be in 1..{}", kMaxCanvasSide));
  }

  const auto& bg = j["background"];
  if (!bg.is_object() || bg.size() != 1) {
    schema_error("background", "expected exactly one of color, png_base64, png");
  }
  if (bg.contains("color")) {
    const Color c = get_color(bg["color"], "background.color");
    doc.background = RasterImage(doc.canvas_width, doc.canvas_height);
    for (int ch = 0; ch < 3; ++ch) {
      doc.background.channel(ch).setConstant(static_cast<float>(to_8bit(c[ch])) / 255.0f);
    }
  } else if (bg.contains("png_base64")) {
    if (!bg["png_base64"].is_string()) schema_error("background.png_base64", "expected a string");
    try {
      doc.background = decode_png(base64_decode(bg["png_base64"].get<std::string>()));
    } catch (const Error& err) {
      schema_error("background.png_base64", err.what());
    }
  } else if (bg.contains("png")) {
    if (!bg["png"].is_string()) schema_error("background.png", "expected a string");
    doc.background = read_png(base_dir / bg["png"].get<std::string>());
  } else {
    schema_error("background." + bg.begin().key(), "unknown field");
  }
  if (doc.background.width() != doc.canvas_width || doc.background.height() != doc.canvas_height) {
    schema_error("background", "dimensions differ from canvas");
  }

  if (!j["elements"].is_array()) schema_error("elements", "expected an array");
  for (std::size_t i = 0; i < j["elements"].size(); ++i) {
    doc.elements.push_back(element_from_json(j["elements"][i], fmt::format("elements[{}]", i)));
  }
  return doc;
}

std::string serialize_document(const Document& doc) { return document_to_json(doc).dump(2) + "\n"; }

Document parse_document(std::string_view text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& err) {
    throw Error("export", fmt::format("document: malformed JSON ({})", err.what()));
  }
  return document_from_json(j, base_dir);
}

void save_document(const Document& doc, const std::filesystem::path& path) {
  const std::string text = serialize_document(doc);
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Document load_document(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_document(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                        path.parent_path());
}

// ---------------------------------------------------------------------------

json apply_patch(const json& doc, std::string_view path, std::string_view value) {
  json out = doc;
  json* node = &out;
  const std::string full(path);
  std::size_t i = 0;
  while (i < path.size()) {
    if (path[i] == '.') {
      ++i;
      continue;
    }
    if (path[i] == '[') {
      const auto close = path.find(']', i);
      if (close == std::string_view::npos) throw Error("export", fmt::format("{}: unbalanced '['", full));
      std::size_t idx = 0;
      const std::string digits(path.substr(i + 1, close - i - 1));
      try {
        std::size_t used = 0;
        idx = std::stoul(digits, &used);
        if (used != digits.size()) throw std::invalid_argument(digits);
      } catch (const std::exception&) {
        throw Error("export", fmt::format("{}: bad index '{}'", full, digits));
      }
      if (!node->is_array() || idx >= node->size()) {
        throw Error("export", fmt::format("{}: index {} does not exist", full, idx));
      }
      node = &(*node)[idx];
      i = close + 1;
      continue;
    }
    const auto end = path.find_first_of(".[", i);
    const std::string key(path.substr(i, end == std::string_view::npos ? path.size() - i : end - i));
    if (!node->is_object() || !node->contains(key)) {
      throw Error("export", fmt::format("{}: unknown path", full));
    }
    node = &(*node)[key];
    i = end == std::string_view::npos ? path.size() : end;
  }
  if (node == &out) throw Error("export", "empty patch path");

  json parsed;
  bool is_json = true;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    is_json = false;
  }
  if (node->is_string()) {
    *node = is_json && parsed.is_string() ? parsed : json(std::string(value));
    return out;
  }
  if (!is_json) throw Error("export", fmt::format("{}: '{}' is not a valid value", full, value));
  auto compatible = [](const json& a, const json& b) {
    if (a.is_number_integer()) return b.is_number_integer();
    if (a.is_number()) return b.is_number();
    return a.type() == b.type();
  };
  if (!compatible(*node, parsed)) {
    throw Error("export", fmt::format("{}: type mismatch (expected {})", full, node->type_name()));
  }
  if (node->is_array()) {
    if (node->size() != parsed.size()) {
      throw Error("export", fmt::format("{}: expected {} entries", full, node->size()));
    }
    for (std::size_t k = 0; k < node->size(); ++k) {
      if (!compatible((*node)[k], parsed[k])) {
        throw Error("export", fmt::format("{}[{}]: type mismatch", full, k));
      }
    }
  }
  *node = parsed;
  return out;
}

}  // namespace derender
