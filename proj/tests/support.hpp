#pragma once

#include "shica/rng.hpp"
#include "shica/types.hpp"

#include <unistd.h>

#include <Eigen/SVD>
#include <filesystem>
#include <string>
#include <vector>

namespace shica::test {

inline Matrix gaussian_matrix(CounterRng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix out(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) out(r, c) = rng.normal();
  return out;
}

// Invertible with a bounded condition number so oracles stay well-posed.
inline Matrix invertible_matrix(CounterRng& rng, Eigen::Index p, double max_cond = 1e3) {
  for (;;) {
    Matrix a = gaussian_matrix(rng, p, p);
    Eigen::JacobiSVD<Matrix> svd(a);
    const Vector s = svd.singularValues();
    if (s(p - 1) > 0.0 && s(0) / s(p - 1) < max_cond) return a;
  }
}

inline Matrix spd_matrix(CounterRng& rng, Eigen::Index p, double ridge = 0.1) {
  const Matrix a = gaussian_matrix(rng, p, p);
  return a * a.transpose() / static_cast<double>(p) + ridge * Matrix::Identity(p, p);
}

inline Vector uniform_vector(CounterRng& rng, Eigen::Index n, double lo, double hi) {
  Vector v(n);
  for (Eigen::Index k = 0; k < n; ++k) v(k) = rng.uniform(lo, hi);
  return v;
}

inline Matrix scaled_permutation(CounterRng& rng, Eigen::Index p) {
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(p));
  for (Eigen::Index k = 0; k < p; ++k) perm[static_cast<std::size_t>(k)] = k;
  for (Eigen::Index k = p - 1; k > 0; --k)
    std::swap(perm[static_cast<std::size_t>(k)], perm[static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(k + 1))]);
  Matrix out = Matrix::Zero(p, p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double scale = rng.uniform(0.2, 5.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    out(k, perm[static_cast<std::size_t>(k)]) = scale;
  }
  return out;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("shica_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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

}  // namespace shica::test
