#pragma once

#include <filesystem>
#include <string>

#include <doctest.h>

#include "nfps/error.hpp"

namespace nfps::test {

#define CHECK_THROWS_KIND(expr, expected_kind)                          \
  do {                                                                  \
    bool thrown_ = false;                                               \
    try {                                                               \
      (void)(expr);                                                     \
    } catch (const ::nfps::Error& e_) {                                 \
      thrown_ = true;                                                   \
      CHECK_MESSAGE(e_.kind() == (expected_kind), e_.what());           \
    }                                                                   \
    CHECK_MESSAGE(thrown_, "expected an nfps::Error from " #expr);      \
  } while (0)

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("nfps_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace nfps::test
