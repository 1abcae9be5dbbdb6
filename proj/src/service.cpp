#include "derender/service.hpp"

#include <httplib.h>

#include <mutex>
#include <set>

#include <fmt/format.h>

#include "derender/document.hpp"
#include "derender/png_io.hpp"

namespace derender {

std::string error_field(const Error& error) {
  if (const auto* r = dynamic_cast<const RequestError*>(&error)) return r->field();
  std::string_view msg = error.what();
  const std::string prefix = error.module() + ": ";
  if (msg.substr(0, prefix.size()) == prefix) msg.remove_prefix(prefix.size());
  const auto colon = msg.find(": ");
  if (colon == std::string_view::npos) return "";
  const std::string_view field = msg.substr(0, colon);
  if (field.find(' ') != std::string_view::npos) return "";
  return std::string(field);
}

std::vector<std::uint8_t> render_png(const Document& doc, const GlyphAtlas& atlas, double scale) {
  return encode_png(render_document(doc, atlas, scale));
}

Document edit_document(const nlohmann::json& doc, const std::vector<std::string>& assignments,
                       const GlyphAtlas& atlas) {
  nlohmann::json j = doc;
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error("export", fmt::format("{}: expected path=value", a));
    }
    j = apply_patch(j, std::string_view(a).substr(0, eq), std::string_view(a).substr(eq + 1));
  }
  Document out = document_from_json(j);
  validate_document(out, atlas);
  return out;
}

DerenderRequest parse_derender_request(const nlohmann::json& body) {
  if (!body.is_object()) throw RequestError("body", "expected a JSON object");
  static const std::set<std::string> known = {"image_png_base64", "boxes", "texts", "iterations", "seed"};
  for (const auto& [key, _] : body.items()) {
    if (!known.count(key)) throw RequestError(key, "unknown field");
  }
  DerenderRequest r;
  if (!body.contains("image_png_base64") || !body["image_png_base64"].is_string()) {
    throw RequestError("image_png_base64", "required base64 PNG string");
  }
  try {
    r.image = decode_png(base64_decode(body["image_png_base64"].get<std::string>()));
  } catch (const Error& e) {
    throw RequestError("image_png_base64", e.what());
  }
  if (!body.contains("boxes") || !body["boxes"].is_array()) throw RequestError("boxes", "required array");
  if (!body.contains("texts") || !body["texts"].is_array()) throw RequestError("texts", "required array");
  const auto& boxes = body["boxes"];
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    const std::string field = fmt::format("boxes[{}]", i);
    if (!b.is_array() || b.size() != 4) throw RequestError(field, "expected [x, y, w, h]");
    for (const auto& v : b) {
      if (!v.is_number_integer()) throw RequestError(field, "coordinates must be integers");
    }
    r.boxes.push_back({b[0].get<Index>(), b[1].get<Index>(), b[2].get<Index>(), b[3].get<Index>()});
  }
  const auto& texts = body["texts"];
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (!texts[i].is_string()) throw RequestError(fmt::format("texts[{}]", i), "expected a string");
    r.texts.push_back(texts[i].get<std::string>());
  }
  if (r.boxes.empty()) throw RequestError("boxes", "at least one box is required");
  if (r.boxes.size() != r.texts.size()) {
    throw RequestError("texts", fmt::format("{} texts for {} boxes", r.texts.size(), r.boxes.size()));
  }
  if (body.contains("iterations")) {
    if (!body["iterations"].is_number_integer() || body["iterations"].get<long long>() < 1) {
      throw RequestError("iterations", "must be an integer >= 1");
    }
    r.iterations = body["iterations"].get<int>();
  }
  if (body.contains("seed")) {
    if (!body["seed"].is_number_unsigned()) throw RequestError("seed", "must be a non-negative integer");
    r.seed = body["seed"].get<std::uint64_t>();
  }
  try {
    validate_words(r.image, r.boxes, r.texts);
  } catch (const Error& e) {
    throw RequestError("boxes", e.what());
  }
  return r;
}

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& j) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

// Request-shape problems (schema, validation) are the client's; anything else
// is reported as an engine failure with its module.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const RequestError& e) {
    send_json(res, 400, {{"error", e.what()}, {"field", e.field()}});
  } catch (const Error& e) {
    if (e.module() == "export" || e.module() == "compositor" || e.module() == "service") {
      send_json(res, 400, {{"error", e.what()}, {"field", error_field(e)}});
    } else {
      send_json(res, 500, {{"error", e.what()}, {"module", e.module()}});
    }
  } catch (const std::exception& e) {
    send_json(res, 500, {{"error", e.what()}, {"module", "service"}});
  }
}

nlohmann::json parse_body(const httplib::Request& req) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    throw RequestError("body", fmt::format("malformed JSON ({})", e.what()));
  }
}

}  // namespace

Service::Service(const GlyphAtlas& atlas, ServiceOptions options) : atlas_(atlas), options_(options) {}

void Service::register_routes(httplib::Server& server) const {
  server.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}, {"fonts", atlas_.font_count()}});
  });

  server.Get("/api/fonts", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"fonts", atlas_.font_names()}});
  });

  server.Post("/api/render", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      double scale = 1.0;
      if (req.has_param("scale")) {
        try {
          scale = std::stod(req.get_param_value("scale"));
        } catch (const std::exception&) {
          throw RequestError("scale", "not a number");
        }
        if (!(scale > 0)) throw RequestError("scale", "must be > 0");
      }
      Document doc = document_from_json(parse_body(req));
      validate_document(doc, atlas_);
      const auto png = render_png(doc, atlas_, scale);
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    });
  });

  server.Post("/api/edit", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const nlohmann::json body = parse_body(req);
      if (!body.is_object() || !body.contains("document")) throw RequestError("document", "required");
      std::vector<std::string> sets;
      if (body.contains("set")) {
        if (!body["set"].is_array()) throw RequestError("set", "expected an array of \"path=value\" strings");
        for (std::size_t i = 0; i < body["set"].size(); ++i) {
          if (!body["set"][i].is_string()) throw RequestError(fmt::format("set[{}]", i), "expected a string");
          sets.push_back(body["set"][i].get<std::string>());
        }
      }
      send_json(res, 200, document_to_json(edit_document(body["document"], sets, atlas_)));
    });
  });

  server.Post("/api/derender", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto request = std::make_shared<DerenderRequest>(parse_derender_request(parse_body(req)));
      DerenderOptions opts;
      opts.refine.iterations = request->iterations;
      opts.refine.seed = request->seed;
      opts.threads = options_.threads;
      // Inpainting and initialization run before the stream opens so their
      // failures still map to an HTTP status.
      auto background = std::make_shared<RasterImage>(inpaint_words(request->image, request->boxes));
      auto initial = std::make_shared<std::vector<RefinableParams>>(
          initialize_words(request->image, *background, request->boxes, request->texts, atlas_, opts.diff));
      const int every = std::max(1, options_.progress_every);
      res.set_chunked_content_provider(
          "application/x-ndjson", [this, request, background, initial, opts, every](size_t, httplib::DataSink& sink) {
            std::mutex write_mutex;
            auto emit = [&](const nlohmann::json& j) {
              std::lock_guard lock(write_mutex);
              const std::string line = j.dump() + "\n";
              return sink.is_writable() && sink.write(line.data(), line.size());
            };
            const int iterations = opts.refine.iterations;
            try {
              auto result = refine_words(request->image, *background, request->boxes, *initial, atlas_, opts,
                                         [&](int word, int it, double loss) {
                                           if (it % every != 0 && it != iterations - 1) return true;
                                           return emit({{"event", "progress"},
                                                        {"word", word},
                                                        {"iteration", it},
                                                        {"loss", loss}});
                                         });
              emit({{"event", "result"},
                    {"document", document_to_json(result.document)},
                    {"report", report_to_json(result.words)}});
            } catch (const Error& e) {
              emit({{"event", "error"}, {"error", e.what()}, {"module", e.module()}});
            } catch (const std::exception& e) {
              emit({{"event", "error"}, {"error", e.what()}, {"module", "service"}});
            }
            sink.done();
            return true;
          });
    });
  });
}

void serve(const GlyphAtlas& atlas, const std::string& host, int port, ServiceOptions options) {
  httplib::Server server;
  Service service(atlas, options);
  service.register_routes(server);
  if (!server.listen(host, port)) throw Error("service", fmt::format("cannot listen on {}:{}", host, port));
}

}  // namespace derender
