#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "derender/atlas.hpp"
#include "derender/compositor.hpp"
#include "derender/pipeline.hpp"

namespace httplib {
class Server;
}

namespace derender {

/// A request field that failed validation. The service answers 400 with
/// {"error", "field"}.
class RequestError : public Error {
 public:
  RequestError(std::string field, const std::string& message)
      : Error("service", field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Field path named by an error message of the form "module: path: what",
/// or "" when there is none.
std::string error_field(const Error& error);

/// Shared by `derender render` and POST /api/render, so both emit the same bytes.
std::vector<std::uint8_t> render_png(const Document& doc, const GlyphAtlas& atlas, double scale = 1.0);

/// Applies "path=value" assignments to a document's JSON form, re-parses and
/// re-validates it. Shared by `derender edit` and POST /api/edit.
Document edit_document(const nlohmann::json& doc, const std::vector<std::string>& assignments,
                       const GlyphAtlas& atlas);

struct DerenderRequest {
  RasterImage image;
  std::vector<PixelRect> boxes;
  std::vector<std::string> texts;
  int iterations = 200;
  std::uint64_t seed = 0;
};

/// Parses {"image_png_base64", "boxes": [[x, y, w, h]...], "texts": [...],
/// "iterations"?, "seed"?}. Throws RequestError naming the offending field.
DerenderRequest parse_derender_request(const nlohmann::json& body);

struct ServiceOptions {
  int progress_every = 10;  // emit a progress line every n iterations per word
  int threads = 0;
};

/// HTTP front end. Routes:
///   GET  /api/health    -> {"status": "ok", "fonts": n}
///   GET  /api/fonts     -> {"fonts": [names in atlas order]}
///   POST /api/render    -> image/png of the document in the body (?scale=s)
///   POST /api/edit      -> {"document", "set": ["path=value", ...]} -> document
///   POST /api/derender  -> application/x-ndjson stream of
///                          {"event": "progress", "word", "iteration", "loss"} lines
///                          and a final {"event": "result", "document", "report"}
/// Malformed requests get 400 {"error", "field"}; failures inside the engine
/// get 500 {"error", "module"}. Every request is independent; the atlas is
/// shared read-only.
class Service {
 public:
  explicit Service(const GlyphAtlas& atlas, ServiceOptions options = {});

  void register_routes(httplib::Server& server) const;

 private:
  const GlyphAtlas& atlas_;
  ServiceOptions options_;
};

/// Blocks serving on host:port until the server is stopped.
void serve(const GlyphAtlas& atlas, const std::string& host, int port, ServiceOptions options = {});

}  // namespace derender
