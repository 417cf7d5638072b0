#include "weakseg/task_service.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <tuple>

#include "weakseg/error.hpp"
#include "weakseg/metrics.hpp"
#include "weakseg/png_encode.hpp"

namespace weakseg {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(TaskState s) noexcept {
  switch (s) {
    case TaskState::open: return "open";
    case TaskState::assigned: return "assigned";
    case TaskState::submitted: return "submitted";
  }
  return "unknown";
}

json to_json(const Task& t) {
  json j = {{"task_id", t.task_id},
            {"volume_id", t.volume_id},
            {"slice_index", t.slice_index},
            {"replica", t.replica},
            {"state", to_string(t.state)},
            {"assigned_to", nullptr},
            {"lease_seconds", t.lease_seconds}};
  if (t.assigned_to) {
    j["assigned_to"] = *t.assigned_to;
    j["assigned_at"] = t.assigned_at;
  }
  if (t.submitted_by) j["submitted_by"] = *t.submitted_by;
  return j;
}

json to_json(const RaterRecord& r) {
  return {{"rater_id", r.rater_id},
          {"n_submitted", r.n_submitted},
          {"total_elapsed_ms", r.total_elapsed_ms},
          {"mean_elapsed_ms", r.n_submitted > 0 ? r.total_elapsed_ms / r.n_submitted : 0.0}};
}

namespace {

double wall_seconds() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

fs::path volume_stem(const fs::path& data_dir, const std::string& id) { return data_dir / "volumes" / id; }

fs::path labels_stem(const fs::path& data_dir, const std::string& id) {
  return data_dir / "volumes" / (id + "_labels");
}

}  // namespace

TaskService::TaskService(TaskServiceConfig cfg, Clock clock) : cfg_(std::move(cfg)), clock_(std::move(clock)) {
  if (!clock_) clock_ = wall_seconds;
  if (cfg_.data_dir.empty()) throw Error(ErrorCode::InvalidConfig, "data directory required");
  if (!(cfg_.lease_seconds > 0)) throw Error(ErrorCode::InvalidConfig, "lease_seconds must be > 0");
  if (cfg_.redundancy < 1) throw Error(ErrorCode::InvalidConfig, "redundancy must be >= 1");
  std::error_code ec;
  fs::create_directories(cfg_.data_dir / "volumes", ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + cfg_.data_dir.string());
  std::vector<json> events;
  log_ = std::make_unique<EventLog>(event_log_path(), events);
  for (const auto& e : events) apply(e);
}

void TaskService::check_alive() const {
  if (crashed_) throw CrashInjected();
}

void TaskService::crash_after_bytes(std::uint64_t bytes) {
  std::lock_guard lock(mu_);
  log_->crash_after_bytes(bytes);
}

void TaskService::append(json event) {
  event["seq"] = next_seq_;
  try {
    log_->append(event);
  } catch (const CrashInjected&) {
    crashed_ = true;
    throw;
  }
  apply(event);
}

Task& TaskService::task_ref(std::int64_t task_id) {
  const auto it = tasks_.find(task_id);
  if (it == tasks_.end()) throw Error(ErrorCode::NotFound, "no task " + std::to_string(task_id));
  return it->second;
}

void TaskService::apply(const json& e) {
  next_seq_ = std::max(next_seq_, e.at("seq").get<std::int64_t>() + 1);
  const std::string type = e.at("type").get<std::string>();
  if (type == "volume") {
    const std::string id = e.at("volume_id").get<std::string>();
    if (!volumes_.count(id)) volumes_[id] = std::make_shared<const Volume>(load_volume(volume_stem(cfg_.data_dir, id)));
    volume_order_.push_back(id);
    next_volume_ = std::max(next_volume_, e.at("volume_number").get<int>() + 1);
    const int depth = e.at("depth").get<int>();
    const int redundancy = e.at("redundancy").get<int>();
    std::int64_t tid = e.at("first_task").get<std::int64_t>();
    for (int k = 0; k < depth; ++k) {
      for (int r = 0; r < redundancy; ++r, ++tid) {
        Task t;
        t.task_id = tid;
        t.volume_id = id;
        t.slice_index = k;
        t.replica = r;
        t.lease_seconds = e.at("lease_seconds").get<double>();
        tasks_[tid] = t;
      }
    }
    next_task_ = std::max(next_task_, tid);
  } else if (type == "lease") {
    Task& t = task_ref(e.at("task_id").get<std::int64_t>());
    t.state = TaskState::assigned;
    t.assigned_to = e.at("rater_id").get<std::string>();
    t.assigned_at = e.at("at").get<double>();
  } else if (type == "expire") {
    Task& t = task_ref(e.at("task_id").get<std::int64_t>());
    t.state = TaskState::open;
    t.assigned_to.reset();
  } else if (type == "submit") {
    Task& t = task_ref(e.at("task_id").get<std::int64_t>());
    Annotation a = annotation_from_json(e.at("annotation"));
    t.state = TaskState::submitted;
    t.submitted_by = a.rater_id;
    auto& rec = raters_[a.rater_id];
    rec.rater_id = a.rater_id;
    rec.n_submitted += 1;
    rec.total_elapsed_ms += a.elapsed_ms;
    submissions_[t.task_id] = std::move(a);
  } else {
    throw Error(ErrorCode::MalformedHeader, "unknown event type " + type);
  }
}

std::string TaskService::register_volume(const Volume& volume, const LabelVolume* reference) {
  if (reference && !(reference->dims() == volume.dims())) {
    throw Error(ErrorCode::MalformedVolume, "reference labels do not match volume dims");
  }
  std::lock_guard lock(mu_);
  check_alive();
  const int number = next_volume_;
  char buf[32];
  std::snprintf(buf, sizeof buf, "vol%04d", number);
  const std::string id = buf;
  // Payload first: a crash before the event leaves only unreferenced files.
  save_volume(volume, volume_stem(cfg_.data_dir, id));
  if (reference) save_labels(*reference, labels_stem(cfg_.data_dir, id));
  volumes_[id] = std::make_shared<const Volume>(volume);
  try {
    append({{"type", "volume"},
            {"volume_id", id},
            {"volume_number", number},
            {"depth", volume.dims().depth},
            {"redundancy", cfg_.redundancy},
            {"lease_seconds", cfg_.lease_seconds},
            {"first_task", next_task_},
            {"has_reference", reference != nullptr}});
  } catch (...) {
    volumes_.erase(id);
    throw;
  }
  return id;
}

void TaskService::expire_leases(double now) {
  std::vector<std::int64_t> stale;
  for (const auto& [id, t] : tasks_) {
    if (t.state == TaskState::assigned && now - t.assigned_at >= t.lease_seconds) stale.push_back(id);
  }
  for (auto id : stale) append({{"type", "expire"}, {"task_id", id}, {"at", now}});
}

std::optional<Task> TaskService::next_task(const std::string& rater_id) {
  if (rater_id.empty()) throw Error(ErrorCode::InvalidArgument, "rater_id required");
  std::lock_guard lock(mu_);
  check_alive();
  const double now = clock_();
  expire_leases(now);
  for (auto& [id, t] : tasks_) {
    if (t.state != TaskState::open) continue;
    // Replicas of one slice are consecutive ids; a rater takes at most one.
    bool mine = false;
    for (std::int64_t s = id - t.replica; ; ++s) {
      const auto it = tasks_.find(s);
      if (it == tasks_.end() || it->second.volume_id != t.volume_id || it->second.slice_index != t.slice_index) break;
      if (it->second.assigned_to == rater_id || it->second.submitted_by == rater_id) mine = true;
    }
    if (mine) continue;
    append({{"type", "lease"}, {"task_id", id}, {"rater_id", rater_id}, {"at", now}});
    return t;
  }
  return std::nullopt;
}

SubmitStatus TaskService::submit_annotation(std::int64_t task_id, const Annotation& annotation) {
  std::lock_guard lock(mu_);
  check_alive();
  expire_leases(clock_());
  const Task& t = task_ref(task_id);
  if (t.state == TaskState::submitted) {
    if (t.submitted_by == annotation.rater_id) return SubmitStatus::duplicate;
    throw Error(ErrorCode::AlreadySubmitted, "task " + std::to_string(task_id) + " was already submitted");
  }
  if (t.state != TaskState::assigned || t.assigned_to != annotation.rater_id) {
    throw Error(ErrorCode::NotLeasedToYou, "task " + std::to_string(task_id) + " is not leased to " + annotation.rater_id);
  }
  if (annotation.volume_id != t.volume_id || annotation.slice_index != t.slice_index) {
    throw Error(ErrorCode::ValidationFailed, "annotation does not refer to the task's slice");
  }
  const Dims3& d = volumes_.at(t.volume_id)->dims();
  if (annotation.superpixel_map.width != d.width || annotation.superpixel_map.height != d.height) {
    throw Error(ErrorCode::ValidationFailed, "superpixel map dims differ from the slice");
  }
  try {
    annotation.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ValidationFailed, e.what());
  }
  append({{"type", "submit"}, {"task_id", task_id}, {"rater_id", annotation.rater_id}, {"at", clock_()},
          {"annotation", to_json(annotation)}});
  return SubmitStatus::submitted;
}

std::shared_ptr<const Volume> TaskService::volume(const std::string& volume_id) const {
  std::lock_guard lock(mu_);
  const auto it = volumes_.find(volume_id);
  if (it == volumes_.end() || std::find(volume_order_.begin(), volume_order_.end(), volume_id) == volume_order_.end()) {
    throw Error(ErrorCode::NotFound, "no volume " + volume_id);
  }
  return it->second;
}

FloatPlane TaskService::slice(const std::string& volume_id, int k) const {
  const auto v = volume(volume_id);
  if (k < 0 || k >= v->dims().depth) {
    throw Error(ErrorCode::NotFound, "volume " + volume_id + " has no slice " + std::to_string(k));
  }
  return extract_slice(*v, k);
}

std::vector<std::uint8_t> TaskService::slice_png(const std::string& volume_id, int k) const {
  return encode_png_gray8(window_to_u8(slice(volume_id, k)));
}

std::vector<Annotation> TaskService::annotations(const std::string& volume_id) const {
  volume(volume_id);
  std::lock_guard lock(mu_);
  std::vector<Annotation> out;
  for (const auto& [id, a] : submissions_) {
    if (a.volume_id == volume_id) out.push_back(a);
  }
  std::sort(out.begin(), out.end(), [](const Annotation& a, const Annotation& b) {
    return std::tie(a.slice_index, a.rater_id) < std::tie(b.slice_index, b.rater_id);
  });
  return out;
}

json TaskService::export_annotations(const std::string& volume_id) const {
  const auto list = annotations(volume_id);
  json bundle = {{"volume_id", volume_id}, {"annotations", json::array()}};
  std::map<std::string, std::vector<double>> per_rater;
  std::vector<double> all;
  for (const auto& a : list) {
    bundle["annotations"].push_back(to_json(a));
    per_rater[a.rater_id].push_back(a.elapsed_ms);
    all.push_back(a.elapsed_ms);
  }
  if (!all.empty()) {
    auto stats = [](const std::vector<double>& v) {
      const auto ms = mean_std(v);
      return json{{"n", v.size()}, {"mean_ms", ms.mean}, {"std_ms", ms.stddev}};
    };
    json raters = json::object();
    for (const auto& [id, v] : per_rater) raters[id] = stats(v);
    bundle["timing"] = {{"global", stats(all)}, {"per_rater", raters}};
  }
  return bundle;
}

std::vector<RaterRecord> TaskService::raters() const {
  std::lock_guard lock(mu_);
  std::vector<RaterRecord> out;
  for (const auto& [id, r] : raters_) out.push_back(r);
  return out;
}

std::vector<Task> TaskService::tasks(const std::string& volume_id) const {
  std::lock_guard lock(mu_);
  std::vector<Task> out;
  for (const auto& [id, t] : tasks_) {
    if (volume_id.empty() || t.volume_id == volume_id) out.push_back(t);
  }
  return out;
}

std::optional<Task> TaskService::task(std::int64_t task_id) const {
  std::lock_guard lock(mu_);
  const auto it = tasks_.find(task_id);
  if (it == tasks_.end()) return std::nullopt;
  return it->second;
}

TaskCounts TaskService::counts(const std::string& volume_id) const {
  std::lock_guard lock(mu_);
  TaskCounts c;
  for (const auto& [id, t] : tasks_) {
    if (t.volume_id != volume_id) continue;
    if (t.state == TaskState::open) ++c.open;
    else if (t.state == TaskState::assigned) ++c.assigned;
    else ++c.submitted;
  }
  return c;
}

std::vector<std::string> TaskService::volume_ids() const {
  std::lock_guard lock(mu_);
  return volume_order_;
}

// ---------------------------------------------------------------- audit

LogAudit audit_event_log(const std::vector<json>& events) {
  LogAudit audit;
  struct AuditTask {
    std::string volume;
    TaskState state = TaskState::open;
    std::string holder;
  };
  struct Totals {
    int expected = 0;
    int open = 0;
    int assigned = 0;
    int submitted = 0;
  };
  std::map<std::int64_t, AuditTask> tasks;
  std::map<std::string, Totals> totals;
  std::int64_t last_seq = -1;
  auto violation = [&](std::string msg) {
    audit.ok = false;
    audit.violations.push_back(std::move(msg));
  };
  auto move = [&](AuditTask& t, TaskState to) {
    auto& tot = totals[t.volume];
    auto bucket = [&](TaskState s) -> int& {
      return s == TaskState::open ? tot.open : s == TaskState::assigned ? tot.assigned : tot.submitted;
    };
    --bucket(t.state);
    ++bucket(to);
    t.state = to;
  };
  for (const auto& e : events) {
    ++audit.events;
    const auto seq = e.value("seq", std::int64_t{-1});
    // Gaps mean a record went missing; the service numbers events densely.
    if (seq != last_seq + 1) violation("sequence number " + std::to_string(seq) + " follows " + std::to_string(last_seq));
    last_seq = seq;
    const std::string type = e.value("type", "");
    std::string volume;
    if (type == "volume") {
      volume = e.at("volume_id").get<std::string>();
      const int n = e.at("depth").get<int>() * e.at("redundancy").get<int>();
      auto& tot = totals[volume];
      tot.expected += n;
      tot.open += n;
      auto tid = e.at("first_task").get<std::int64_t>();
      for (int i = 0; i < n; ++i, ++tid) {
        if (tasks.count(tid)) violation("task " + std::to_string(tid) + " created twice");
        tasks[tid] = {volume, TaskState::open, {}};
      }
    } else {
      const auto tid = e.at("task_id").get<std::int64_t>();
      const auto it = tasks.find(tid);
      if (it == tasks.end()) {
        violation("event for unknown task " + std::to_string(tid));
        continue;
      }
      AuditTask& t = it->second;
      volume = t.volume;
      const std::string who = e.value("rater_id", "");
      if (type == "lease") {
        if (t.state == TaskState::assigned) violation("task " + std::to_string(tid) + " leased while held by " + t.holder);
        if (t.state == TaskState::submitted) violation("submitted task " + std::to_string(tid) + " reassigned");
        if (t.state == TaskState::open) {
          move(t, TaskState::assigned);
          t.holder = who;
        }
      } else if (type == "expire") {
        if (t.state != TaskState::assigned) violation("expiry of unleased task " + std::to_string(tid));
        else move(t, TaskState::open);
      } else if (type == "submit") {
        ++audit.submissions;
        if (t.state != TaskState::assigned || t.holder != who) {
          violation("task " + std::to_string(tid) + " submitted by " + who + " without holding the lease");
        } else {
          move(t, TaskState::submitted);
        }
      } else {
        violation("unknown event type '" + type + "'");
      }
    }
    const auto& tot = totals[volume];
    if (tot.open < 0 || tot.assigned < 0 || tot.submitted < 0 || tot.open + tot.assigned + tot.submitted != tot.expected) {
      violation("conservation broken for " + volume + " at seq " + std::to_string(seq));
    }
  }
  return audit;
}

}  // namespace weakseg
