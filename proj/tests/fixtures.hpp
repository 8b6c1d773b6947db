#ifndef LABGRADE_TESTS_FIXTURES_HPP_
#define LABGRADE_TESTS_FIXTURES_HPP_

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "labgrade/corpus.hpp"

namespace testing_support {

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("labgrade-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
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

inline labgrade::Corpus desk_corpus(int n_reports = 250, std::uint64_t seed = 7) {
  labgrade::SyntheticOptions o;
  o.seed = seed;
  o.n_reports = n_reports;
  o.n_dims = 7;
  return labgrade::generate_synthetic_corpus(o);
}

}  // namespace testing_support

#endif  // LABGRADE_TESTS_FIXTURES_HPP_
