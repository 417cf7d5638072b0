#include "weakseg/event_log.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "weakseg/error.hpp"

namespace weakseg {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Parses complete lines; returns the byte length of the valid prefix.
std::size_t parse_lines(const std::string& text, std::vector<nlohmann::json>& out) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) break;
    try {
      out.push_back(nlohmann::json::parse(text.begin() + static_cast<std::ptrdiff_t>(pos),
                                          text.begin() + static_cast<std::ptrdiff_t>(nl)));
    } catch (const nlohmann::json::exception&) {
      break;
    }
    pos = nl + 1;
  }
  return pos;
}

}  // namespace

EventLog::EventLog(const fs::path& path, std::vector<nlohmann::json>& replayed) : path_(path) {
  const std::string text = read_file(path);
  replayed.clear();
  const std::size_t valid = parse_lines(text, replayed);
  truncated_ = text.size() - valid;
  fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT, 0644);
  if (fd_ < 0) throw Error(ErrorCode::IoFailure, "cannot open event log " + path.string() + ": " + std::strerror(errno));
  if (truncated_ > 0 && ::ftruncate(fd_, static_cast<off_t>(valid)) != 0) {
    throw Error(ErrorCode::IoFailure, "cannot truncate torn event log tail");
  }
  if (::lseek(fd_, static_cast<off_t>(valid), SEEK_SET) < 0) throw Error(ErrorCode::IoFailure, "seek failed");
  size_ = valid;
}

EventLog::~EventLog() {
  if (fd_ >= 0) ::close(fd_);
}

void EventLog::write_all(const char* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::write(fd_, data, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::IoFailure, std::string("event log write failed: ") + std::strerror(errno));
    }
    data += w;
    n -= static_cast<std::size_t>(w);
    size_ += static_cast<std::uint64_t>(w);
  }
}

void EventLog::append(const nlohmann::json& record) {
  const std::string line = record.dump() + '\n';
  if (crash_budget_ && *crash_budget_ < line.size()) {
    write_all(line.data(), static_cast<std::size_t>(*crash_budget_));
    crash_budget_ = 0;
    throw CrashInjected();
  }
  write_all(line.data(), line.size());
  if (crash_budget_) *crash_budget_ -= line.size();
  if (::fsync(fd_) != 0) throw Error(ErrorCode::IoFailure, "event log fsync failed");
}

std::vector<nlohmann::json> read_event_log(const fs::path& path) {
  std::vector<nlohmann::json> out;
  parse_lines(read_file(path), out);
  return out;
}

}  // namespace weakseg
