#pragma once

#include "handfit/hand_model.hpp"
#include "handfit/random.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

namespace handfit::fixture {

inline HandParams random_params(Rng& rng, double angle_sigma = 0.5, double root_depth = 0.6) {
  HandParams p;
  for (int k = 0; k < kNumJoints; ++k) {
    p.theta[k] = Eigen::Quaterniond(Eigen::AngleAxisd(angle_sigma * rng.normal(), rng.unit_vector()));
  }
  for (int b = 0; b < kNumShape; ++b) {
    p.beta(b) = rng.normal();
  }
  p.root = Eigen::Vector3d(0.05 * rng.normal(), 0.05 * rng.normal(), root_depth);
  return p;
}

inline double max_abs(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  return m.cwiseAbs().maxCoeff();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("handfit_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

} // namespace handfit::fixture
