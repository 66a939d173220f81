#ifndef DEEPCOUGH_TESTS_SUPPORT_HPP
#define DEEPCOUGH_TESTS_SUPPORT_HPP

#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "deepcough/common.hpp"

namespace test_support {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("deepcough_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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

template <typename F>
deepcough::ErrorCode error_code_of(F&& f) {
  try {
    f();
  } catch (const deepcough::Error& e) {
    return e.code();
  }
  FAIL("expected a deepcough::Error");
  return deepcough::ErrorCode::InvalidArgument;
}

}  // namespace test_support

#endif  // DEEPCOUGH_TESTS_SUPPORT_HPP
