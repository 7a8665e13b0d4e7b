#pragma once

#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <unistd.h>

#include "vcaug/corpus/toy_corpus.hpp"
#include "vcaug/nn/layers.hpp"

namespace vcaug::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("vcaug_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::string str() const { return path_.string(); }
  std::string operator/(const std::string& rel) const { return (path_ / rel).string(); }

 private:
  std::filesystem::path path_;
};

inline std::vector<corpus::DatasetManifest> SmallCorpus(int per_pair = 6, uint64_t seed = 3,
                                                        int bands = 80) {
  corpus::ToyCorpusOptions o;
  o.utterances_per_pair = per_pair;
  o.seed = seed;
  o.features.mel_bands = bands;
  return corpus::GenerateToyCorpus(o);
}

// Largest relative error between the tape gradient of every parameter entry
// and a central finite difference of `loss`. Relative error uses
// max(|a|, |b|, floor) in the denominator.
inline double MaxGradientError(nn::ParameterStore& store, const std::function<double()>& loss,
                               const std::function<void()>& backward, double eps = 1e-5,
                               double floor = 1e-3, int stride = 1) {
  store.ZeroGrad();
  backward();
  double worst = 0.0;
  for (nn::Parameter* p : store.All()) {
    const nn::Matrix analytic = p->grad;
    for (Eigen::Index i = 0; i < p->value.size(); i += stride) {
      double& x = p->value.data()[i];
      const double keep = x;
      x = keep + eps;
      const double up = loss();
      x = keep - eps;
      const double down = loss();
      x = keep;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic.data()[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace vcaug::testing
