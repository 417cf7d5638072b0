#pragma once
// Slice-annotation task queue. All state changes go through one mutex and are
// written to the event log before they become visible, so the in-memory index
// can always be rebuilt by replaying the log.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "weakseg/event_log.hpp"
#include "weakseg/volume.hpp"
#include "weakseg/weak_labels.hpp"

namespace weakseg {

enum class TaskState { open, assigned, submitted };

std::string_view to_string(TaskState s) noexcept;

struct Task {
  std::int64_t task_id = 0;
  std::string volume_id;
  int slice_index = 0;
  int replica = 0;
  TaskState state = TaskState::open;
  std::optional<std::string> assigned_to;
  double assigned_at = 0.0;  // service clock, seconds
  double lease_seconds = 300.0;
  std::optional<std::string> submitted_by;
};

nlohmann::json to_json(const Task& task);

struct RaterRecord {
  std::string rater_id;
  int n_submitted = 0;
  double total_elapsed_ms = 0.0;
};

nlohmann::json to_json(const RaterRecord& r);

struct TaskCounts {
  int open = 0;
  int assigned = 0;
  int submitted = 0;
};

struct TaskServiceConfig {
  std::filesystem::path data_dir;
  double lease_seconds = 300.0;
  int redundancy = 1;  // tasks per slice; one rater never holds two replicas of a slice
};

enum class SubmitStatus { submitted, duplicate };

class TaskService {
 public:
  using Clock = std::function<double()>;  // monotonic seconds

  explicit TaskService(TaskServiceConfig cfg, Clock clock = {});

  // Persists the volume and opens depth x redundancy tasks. Returns the new id.
  std::string register_volume(const Volume& volume, const LabelVolume* reference = nullptr);

  // Leases the lowest (volume, slice, replica) open task, expiring stale leases first.
  std::optional<Task> next_task(const std::string& rater_id);

  // Throws NotFound, NotLeasedToYou, AlreadySubmitted, ValidationFailed.
  SubmitStatus submit_annotation(std::int64_t task_id, const Annotation& annotation);

  std::shared_ptr<const Volume> volume(const std::string& volume_id) const;  // throws NotFound
  FloatPlane slice(const std::string& volume_id, int k) const;               // throws NotFound
  std::vector<std::uint8_t> slice_png(const std::string& volume_id, int k) const;

  // {volume_id, annotations:[...], timing:{global, per_rater}}; timing is
  // omitted when nothing was submitted. Throws NotFound.
  nlohmann::json export_annotations(const std::string& volume_id) const;
  std::vector<Annotation> annotations(const std::string& volume_id) const;

  std::vector<RaterRecord> raters() const;
  std::vector<Task> tasks(const std::string& volume_id = {}) const;
  std::optional<Task> task(std::int64_t task_id) const;
  TaskCounts counts(const std::string& volume_id) const;
  std::vector<std::string> volume_ids() const;

  const TaskServiceConfig& config() const noexcept { return cfg_; }
  std::filesystem::path event_log_path() const { return cfg_.data_dir / "events.jsonl"; }

  // Fault injection: the event log accepts `bytes` more bytes, then the
  // service throws CrashInjected and refuses further writes.
  void crash_after_bytes(std::uint64_t bytes);

 private:
  void apply(const nlohmann::json& event);
  void append(nlohmann::json event);
  void expire_leases(double now);
  void check_alive() const;
  Task& task_ref(std::int64_t task_id);

  TaskServiceConfig cfg_;
  Clock clock_;
  mutable std::mutex mu_;
  std::unique_ptr<EventLog> log_;
  bool crashed_ = false;
  std::int64_t next_seq_ = 0;
  int next_volume_ = 1;
  std::int64_t next_task_ = 1;

  std::vector<std::string> volume_order_;
  std::map<std::string, std::shared_ptr<const Volume>> volumes_;
  std::map<std::int64_t, Task> tasks_;  // ordered by id == dispatch order
  std::map<std::int64_t, Annotation> submissions_;
  std::map<std::string, RaterRecord> raters_;
};

// Checks a task-service event log: no task leased to two raters at once, no
// submitted task reassigned, submissions only from the lease holder, and the
// per-volume conservation of open/assigned/submitted counts after every event.
struct LogAudit {
  bool ok = true;
  std::vector<std::string> violations;
  std::size_t events = 0;
  std::size_t submissions = 0;
};

LogAudit audit_event_log(const std::vector<nlohmann::json>& events);

}  // namespace weakseg
