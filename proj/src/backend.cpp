#include "hipsgen/backend.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

namespace hipsgen {

SubprocessBackend::SubprocessBackend(std::vector<std::string> command, std::size_t max_retries)
    : command_(std::move(command)), max_retries_(max_retries) {
  if (command_.empty()) throw BackendError("external backend needs a command");
}

SubprocessBackend::~SubprocessBackend() { stop(); }

void SubprocessBackend::start() {
  std::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0) throw BackendError(std::string("pipe failed: ") + std::strerror(errno));
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw BackendError(std::string("pipe failed: ") + std::strerror(errno));
  }
  const pid_t pid = fork();
  if (pid < 0) throw BackendError(std::string("fork failed: ") + std::strerror(errno));
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    std::vector<char*> argv;
    for (auto& a : command_) argv.push_back(a.data());
    argv.push_back(nullptr);
    execvp(argv[0], argv.data());
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  buffer_.clear();
}

void SubprocessBackend::stop() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    if (waitpid(pid_, &status, WNOHANG) == 0) {
      kill(pid_, SIGTERM);
      waitpid(pid_, &status, 0);
    }
  }
  pid_ = -1;
  buffer_.clear();
}

std::string SubprocessBackend::round_trip(const std::string& line) {
  if (pid_ <= 0) start();
  const std::string msg = line + "\n";
  std::size_t written = 0;
  while (written < msg.size()) {
    const auto n = write(to_child_, msg.data() + written, msg.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw BackendError(std::string("write to backend failed: ") + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
  while (true) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string out = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return out;
    }
    char chunk[4096];
    const auto n = read(from_child_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw BackendError("backend closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

GenerationResult SubprocessBackend::generate(const std::string& prompt, const DecodeConfig& config,
                                             const BadTokenList*) {
  config.validate();
  const nlohmann::json req = {{"prompt", prompt},
                              {"max_new_tokens", config.max_new_tokens},
                              {"temperature", config.temperature},
                              {"top_p", config.top_p},
                              {"seed", config.seed}};
  std::string last_error;
  for (std::size_t attempt = 0; attempt <= max_retries_; ++attempt) {
    ++requests_;
    try {
      const auto line = round_trip(req.dump());
      const auto resp = nlohmann::json::parse(line);
      if (resp.contains("text") && resp["text"].is_string()) {
        GenerationResult r;
        r.text = resp["text"].get<std::string>();
        return r;
      }
      last_error = resp.contains("error") ? "backend error: " + resp["error"].dump() : "response without text";
    } catch (const BackendError& e) {
      last_error = e.what();
      stop();
    } catch (const nlohmann::json::exception& e) {
      last_error = std::string("malformed response: ") + e.what();
      stop();
    }
  }
  throw BackendError(last_error + " (after " + std::to_string(max_retries_) + " retries)");
}

}  // namespace hipsgen
