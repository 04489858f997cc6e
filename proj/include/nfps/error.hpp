#pragma once

#include <stdexcept>
#include <string>

namespace nfps {

enum class ErrorKind {
  invalid_depth,
  degenerate_point,
  degenerate_light,
  invalid_config,
  dimension,
  io,
  parse,
  numerical,
  insufficient_data,
  degenerate_lighting,
  empty_mask,
};

const char* to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries a kind so the CLI can map it
/// onto an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace nfps
