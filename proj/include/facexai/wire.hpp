#pragma once

// Line-delimited JSON protocol to an external model process.
//
//   backend -> host  {"type":"hello","classes":[...],"input_size":[w,h]}
//   host -> backend  {"type":"predict","id":N,"images":[{"w":..,"h":..,"c":..,"pix":"<base64>"}]}
//   backend -> host  {"type":"probs","id":N,"probs":[[...],...]}
//                    {"type":"error","id":N,"msg":"..."}
//
// One object per line, UTF-8, unknown fields ignored.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "facexai/classifier.hpp"
#include "facexai/error.hpp"
#include "facexai/image.hpp"

extern char** environ;

namespace fxai {

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
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
  if (i + 1 == bytes.size()) {
    const std::uint32_t v = bytes[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw ParseError("base64: length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
      } else {
        if (pad > 0) throw ParseError("base64: data after padding");
        v[k] = value(c);
        if (v[k] < 0) throw ParseError("base64: invalid character");
      }
    }
    const std::uint32_t triple = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<std::uint8_t>(triple >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((triple >> 8) & 0xFF));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(triple & 0xFF));
  }
  return out;
}

namespace wire {

using Json = nlohmann::ordered_json;

struct Hello {
  ClassList classes;
  InputSize input_size;
};

inline Json image_json(const Image& img) {
  std::vector<std::uint8_t> bytes(img.data().size());
  std::ranges::transform(img.data(), bytes.begin(), to_u8);
  Json j;
  j["w"] = img.width();
  j["h"] = img.height();
  j["c"] = img.channels();
  j["pix"] = base64_encode(bytes);
  return j;
}

inline Image image_from_json(const Json& j) {
  const int w = j.at("w").get<int>();
  const int h = j.at("h").get<int>();
  const int c = j.at("c").get<int>();
  const auto bytes = base64_decode(j.at("pix").get<std::string>());
  if (bytes.size() != static_cast<std::size_t>(w) * h * c) throw ParseError("image payload size mismatch");
  std::vector<float> data(bytes.size());
  std::ranges::transform(bytes, data.begin(), from_u8);
  return Image::from_data(w, h, c, std::move(data));
}

inline std::string encode_hello(const ClassList& classes, InputSize size) {
  Json j;
  j["type"] = "hello";
  j["classes"] = classes.names();
  j["input_size"] = {size.width, size.height};
  return j.dump();
}

inline std::string encode_predict(std::uint64_t id, std::span<const Image> images) {
  Json j;
  j["type"] = "predict";
  j["id"] = id;
  j["images"] = Json::array();
  for (const auto& img : images) j["images"].push_back(image_json(img));
  return j.dump();
}

inline std::string encode_probs(std::uint64_t id, const std::vector<PredictionVector>& rows) {
  Json j;
  j["type"] = "probs";
  j["id"] = id;
  j["probs"] = Json::array();
  for (const auto& r : rows) j["probs"].push_back(r.probs);
  return j.dump();
}

inline std::string encode_error(std::uint64_t id, std::string_view msg) {
  Json j;
  j["type"] = "error";
  j["id"] = id;
  j["msg"] = msg;
  return j.dump();
}

inline Json parse_line(std::string_view line) {
  Json j = Json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ProtocolError("backend sent a line that is not a JSON object");
  if (!j.contains("type") || !j["type"].is_string()) throw ProtocolError("backend message has no type");
  return j;
}

inline Hello parse_hello(std::string_view line) {
  const Json j = parse_line(line);
  if (j["type"] != "hello") throw ProtocolError("expected hello handshake, got type " + j["type"].dump());
  try {
    auto names = j.at("classes").get<std::vector<std::string>>();
    const auto size = j.at("input_size").get<std::vector<int>>();
    if (size.size() != 2 || size[0] < 1 || size[1] < 1) throw ProtocolError("handshake input_size must be [w,h]");
    return {ClassList(std::move(names)), InputSize{size[0], size[1]}};
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed handshake: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ProtocolError(std::string("malformed handshake: ") + e.what());
  }
}

// Decodes a probs/error reply for request `id` carrying `n_images` images.
inline std::vector<PredictionVector> parse_reply(std::string_view line, std::uint64_t id, std::size_t n_images) {
  const Json j = parse_line(line);
  if (!j.contains("id") || !j["id"].is_number_unsigned()) throw ProtocolError("reply without numeric id");
  const auto reply_id = j["id"].get<std::uint64_t>();
  if (reply_id != id) {
    throw ProtocolError("reply id " + std::to_string(reply_id) + " does not match request id " + std::to_string(id));
  }
  if (j["type"] == "error") {
    throw BackendReportedError("backend error for request " + std::to_string(id) + ": " +
                               j.value("msg", std::string("(no message)")));
  }
  if (j["type"] != "probs") throw ProtocolError("unexpected reply type " + j["type"].dump());
  try {
    const auto rows = j.at("probs").get<std::vector<std::vector<double>>>();
    if (rows.size() != n_images) {
      throw ProtocolError("reply has " + std::to_string(rows.size()) + " rows for " + std::to_string(n_images) +
                          " images");
    }
    std::vector<PredictionVector> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back({r});
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed probs reply: ") + e.what());
  }
}

}  // namespace wire

// Classifier backed by a child process speaking the wire protocol on its
// standard streams. Requests are serialized internally.
class SubprocessClassifier final : public Classifier {
 public:
  explicit SubprocessClassifier(const std::string& command_line) {
    static const bool sigpipe_ignored = [] {
      ::signal(SIGPIPE, SIG_IGN);
      return true;
    }();
    (void)sigpipe_ignored;

    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0) throw BackendDied("pipe failed: " + std::string(std::strerror(errno)));
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw BackendDied("pipe failed: " + std::string(std::strerror(errno)));
    }
    ::fcntl(to_child[1], F_SETFD, FD_CLOEXEC);
    ::fcntl(from_child[0], F_SETFD, FD_CLOEXEC);

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&actions, to_child[0]);
    posix_spawn_file_actions_addclose(&actions, from_child[1]);
    std::string shell = "/bin/sh";
    std::string flag = "-c";
    std::string cmd = command_line;
    char* argv[] = {shell.data(), flag.data(), cmd.data(), nullptr};
    const int rc = ::posix_spawn(&pid_, "/bin/sh", &actions, nullptr, argv, environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(to_child[0]);
    ::close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    if (rc != 0) {
      pid_ = -1;
      close_fds();
      throw BackendDied("cannot spawn backend '" + command_line + "': " + std::strerror(rc));
    }
    try {
      hello_ = wire::parse_hello(read_line());
    } catch (...) {
      shutdown();
      throw;
    }
  }

  SubprocessClassifier(const SubprocessClassifier&) = delete;
  SubprocessClassifier& operator=(const SubprocessClassifier&) = delete;

  ~SubprocessClassifier() override { shutdown(); }

  const ClassList& classes() const override { return hello_.classes; }
  InputSize input_size() const override { return hello_.input_size; }

  std::vector<PredictionVector> predict(std::span<const Image> images) override {
    std::lock_guard lock(mutex_);
    for (const auto& img : images) {
      if (img.width() != hello_.input_size.width || img.height() != hello_.input_size.height) {
        throw SizeMismatch("backend expects " + std::to_string(hello_.input_size.width) + "x" +
                           std::to_string(hello_.input_size.height) + " images");
      }
    }
    const std::uint64_t id = next_id_++;
    write_line(wire::encode_predict(id, images));
    return wire::parse_reply(read_line(), id, images.size());
  }

 private:
  void write_line(const std::string& line) {
    if (write_fd_ < 0) throw BackendDied("backend is not running");
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::write(write_fd_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw BackendDied("backend closed its input: " + describe_exit());
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line() {
    while (true) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        return line;
      }
      char chunk[65536];
      const ssize_t n = read_fd_ >= 0 ? ::read(read_fd_, chunk, sizeof(chunk)) : 0;
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw BackendDied("backend exited before replying: " + describe_exit());
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  std::string describe_exit() {
    if (pid_ <= 0) return "not running";
    int status = 0;
    for (int i = 0; i < 50; ++i) {
      const pid_t r = ::waitpid(pid_, &status, WNOHANG);
      if (r == pid_) {
        pid_ = -1;
        if (WIFEXITED(status)) return "exit status " + std::to_string(WEXITSTATUS(status));
        if (WIFSIGNALED(status)) return "killed by signal " + std::to_string(WTERMSIG(status));
        return "terminated";
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    return "stream closed";
  }

  void close_fds() {
    if (write_fd_ >= 0) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    write_fd_ = read_fd_ = -1;
  }

  void shutdown() {
    close_fds();
    if (pid_ <= 0) return;
    int status = 0;
    for (int i = 0; i < 200; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
  }

  pid_t pid_ = -1;
  int write_fd_ = -1;
  int read_fd_ = -1;
  std::string buffer_;
  std::mutex mutex_;
  std::uint64_t next_id_ = 1;
  wire::Hello hello_;
};

}  // namespace fxai
