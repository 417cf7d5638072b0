#pragma once
// Append-only JSON-lines log. Every append is flushed and fsynced before it
// returns. On open, complete lines are replayed and a torn final line (from a
// crash mid-write) is truncated away.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

namespace weakseg {

// Thrown by the fault-injection hook once the byte budget is spent.
struct CrashInjected : std::runtime_error {
  CrashInjected() : std::runtime_error("injected crash") {}
};

class EventLog {
 public:
  // Opens (creating if needed) and returns the recovered records via `replayed`.
  EventLog(const std::filesystem::path& path, std::vector<nlohmann::json>& replayed);
  ~EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  void append(const nlohmann::json& record);

  // Lets at most `bytes` more bytes reach the file, then throws CrashInjected
  // from append (the line in flight is left torn).
  void crash_after_bytes(std::optional<std::uint64_t> bytes) { crash_budget_ = bytes; }

  std::uint64_t bytes_written() const noexcept { return size_; }
  std::size_t truncated_bytes() const noexcept { return truncated_; }
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  void write_all(const char* data, std::size_t n);

  std::filesystem::path path_;
  int fd_ = -1;
  std::uint64_t size_ = 0;
  std::size_t truncated_ = 0;
  std::optional<std::uint64_t> crash_budget_;
};

// Reads every complete record of a log file without modifying it.
std::vector<nlohmann::json> read_event_log(const std::filesystem::path& path);

}  // namespace weakseg
