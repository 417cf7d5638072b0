#pragma once
// HTTP/JSON front end of the task service.
//   POST /volumes                         multipart: header (json), raw, [labels_raw]
//   GET  /tasks/next?rater_id=ID          Task json, or 204 when the queue is empty
//   GET  /tasks[?volume_id=ID]            Task list
//   GET  /volumes/{id}/slices/{k}?fmt=png8|f32
//   POST /tasks/{task_id}/annotation      Annotation json
//   GET  /volumes/{id}/annotations        export bundle
//   GET  /raters                          [RaterRecord]
// Errors answer {"error": <code name>, "message": ...}.

#include <string>

#include "weakseg/error.hpp"
#include "weakseg/task_service.hpp"

namespace httplib {
class Server;
}

namespace weakseg {

int http_status(ErrorCode code) noexcept;

void install_routes(httplib::Server& server, TaskService& service);

// Blocks serving on host:port until the server is stopped.
void run_http_server(TaskService& service, const std::string& host, int port);

}  // namespace weakseg
