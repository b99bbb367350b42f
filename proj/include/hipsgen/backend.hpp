#pragma once

#include <cstddef>
#include <string>
#include <sys/types.h>
#include <vector>

#include "hipsgen/decoding.hpp"

namespace hipsgen {

struct BackendError : DecodingError {
  using DecodingError::DecodingError;
};

// Completion-only service reached over a child process's stdin/stdout with
// one JSON object per line:
//   request  {"prompt": str, "max_new_tokens": int, "temperature": float, "top_p": float, "seed": int}
//   response {"text": str} or {"error": str}
// Transport failures restart the child and retry; bad-token lists cannot be
// applied on this path.
class SubprocessBackend final : public GenerationBackend {
 public:
  explicit SubprocessBackend(std::vector<std::string> command, std::size_t max_retries = 2);
  ~SubprocessBackend() override;
  SubprocessBackend(const SubprocessBackend&) = delete;
  SubprocessBackend& operator=(const SubprocessBackend&) = delete;

  bool supports_logit_filtering() const override { return false; }
  GenerationResult generate(const std::string& prompt, const DecodeConfig& config, const BadTokenList* bad) override;

  std::size_t requests() const { return requests_; }

 private:
  void start();
  void stop();
  std::string round_trip(const std::string& line);

  std::vector<std::string> command_;
  std::size_t max_retries_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::size_t requests_ = 0;
};

}  // namespace hipsgen
