#include "weakseg/http_api.hpp"

#include <httplib.h>

#include <cstring>

namespace weakseg {

using nlohmann::json;

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::NotLeasedToYou: return 403;
    case ErrorCode::AlreadySubmitted: return 409;
    case ErrorCode::ValidationFailed: return 422;
    case ErrorCode::MalformedVolume:
    case ErrorCode::MalformedHeader:
    case ErrorCode::SizeMismatch:
    case ErrorCode::NonFiniteVoxel:
    case ErrorCode::InvalidArgument: return 400;
    default: return 500;
  }
}

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, {{"error", std::string(to_string(code))}, {"message", message}}, http_status(code));
}

// Runs a handler, mapping library errors to their HTTP status.
template <class F>
auto guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const json::exception& e) {
      send_error(res, ErrorCode::ValidationFailed, e.what());
    } catch (const CrashInjected& e) {
      res.status = 503;
      res.set_content(R"({"error":"Unavailable","message":"service halted"})", "application/json");
    }
  };
}

int parse_int(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad ") + what + ": " + s);
  }
}

}  // namespace

void install_routes(httplib::Server& server, TaskService& service) {
  server.Post("/volumes", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data() || !req.has_file("header") || !req.has_file("raw")) {
      throw Error(ErrorCode::MalformedVolume, "expected multipart fields 'header' and 'raw'");
    }
    Volume volume;
    std::optional<LabelVolume> labels;
    try {
      volume = decode_volume(req.get_file_value("header").content, req.get_file_value("raw").content);
      if (req.has_file("labels_raw")) labels = decode_labels(volume.dims(), req.get_file_value("labels_raw").content);
    } catch (const Error& e) {
      throw Error(ErrorCode::MalformedVolume, e.what());
    }
    const std::string id = service.register_volume(volume, labels ? &*labels : nullptr);
    send_json(res, {{"volume_id", id}, {"n_tasks", service.tasks(id).size()}}, 201);
  }));

  server.Get("/tasks/next", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    const std::string rater = req.get_param_value("rater_id");
    if (rater.empty()) throw Error(ErrorCode::InvalidArgument, "rater_id query parameter required");
    const auto task = service.next_task(rater);
    if (!task) {
      res.status = 204;
      return;
    }
    send_json(res, to_json(*task));
  }));

  server.Get("/tasks", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    json out = json::array();
    for (const auto& t : service.tasks(req.get_param_value("volume_id"))) out.push_back(to_json(t));
    send_json(res, out);
  }));

  server.Get(R"(/volumes/([^/]+)/slices/(-?\d+))",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               const int k = parse_int(req.matches[2], "slice index");
               const std::string fmt = req.has_param("fmt") ? req.get_param_value("fmt") : "png8";
               if (fmt == "png8") {
                 const auto png = service.slice_png(id, k);
                 res.set_content(reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
               } else if (fmt == "f32") {
                 const auto plane = service.slice(id, k);
                 std::string body(plane.data.size() * 4, '\0');
                 std::memcpy(body.data(), plane.data.data(), body.size());
                 res.set_header("X-Width", std::to_string(plane.width));
                 res.set_header("X-Height", std::to_string(plane.height));
                 res.set_content(std::move(body), "application/octet-stream");
               } else {
                 throw Error(ErrorCode::InvalidArgument, "fmt must be png8 or f32");
               }
             }));

  server.Post(R"(/tasks/(\d+)/annotation)", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    const auto task_id = static_cast<std::int64_t>(std::stoll(req.matches[1]));
    Annotation annotation;
    try {
      annotation = annotation_from_json(json::parse(req.body));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ValidationFailed, e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::ValidationFailed, e.what());
    }
    const auto status = service.submit_annotation(task_id, annotation);
    send_json(res, {{"status", status == SubmitStatus::submitted ? "submitted" : "duplicate"}, {"task_id", task_id}});
  }));

  server.Get(R"(/volumes/([^/]+)/annotations)", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    send_json(res, service.export_annotations(req.matches[1]));
  }));

  server.Get("/raters", guarded([&service](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& r : service.raters()) out.push_back(to_json(r));
    send_json(res, out);
  }));
}

void run_http_server(TaskService& service, const std::string& host, int port) {
  httplib::Server server;
  install_routes(server, service);
  if (!server.listen(host, port)) {
    throw Error(ErrorCode::IoFailure, "cannot listen on " + host + ":" + std::to_string(port));
  }
}

}  // namespace weakseg
