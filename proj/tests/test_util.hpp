#ifndef AUTOCL_TESTS_TEST_UTIL_HPP
#define AUTOCL_TESTS_TEST_UTIL_HPP

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "autocl/models.hpp"
#include "autocl/random.hpp"
#include "autocl/tensor.hpp"

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("autocl_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << text;
}

template <typename Scalar = double>
autocl::Mat<Scalar> random_mat(autocl::Index r, autocl::Index c, autocl::Rng& rng, double sd = 1.0) {
  autocl::Mat<Scalar> m(r, c);
  for (autocl::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(rng.normal(0.0, sd));
  return m;
}

template <typename Scalar = double>
autocl::Sequences<Scalar> random_seq(autocl::Index n, autocl::Index w, autocl::Index c, autocl::Rng& rng) {
  return {n, w, random_mat<Scalar>(n * w, c, rng)};
}

inline autocl::ModelSpec tiny_spec() {
  autocl::ModelSpec s;
  s.window = 16;
  s.channels = 2;
  s.conv_channels = {4, 4, 4};
  s.proj_hidden = 16;
  s.proj_out = 8;
  s.head_hidden = 8;
  return s;
}

}  // namespace testutil

#endif  // AUTOCL_TESTS_TEST_UTIL_HPP
