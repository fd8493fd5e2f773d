#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asc/common.hpp"

namespace asc::gmm {

struct GaussianMixture {
  int64_t dim = 0;
  std::vector<double> weights;  // K, non-negative, sums to 1
  Mat means;                    // K x dim
  Mat variances;                // K x dim, diagonal covariances, >= floor
  int64_t components() const { return static_cast<int64_t>(weights.size()); }
};

struct GmmBank {
  std::vector<GaussianMixture> mixtures;  // one per class, class order
  std::vector<std::string> class_labels;
  std::string feature_kind = "mfcc60";
};

struct EmOptions {
  int64_t max_iters = 50;
  double tol = 1e-6;            // stop when avg log-lik gain falls below
  double var_floor_rel = 1e-3;  // x per-dimension global variance
  uint64_t seed = 42;
};

struct EmResult {
  GaussianMixture gmm;
  std::vector<double> avg_loglik;  // per EM iteration
};

// frames: [T x dim]. Init is 10 rounds of seeded k-means.
EmResult em_fit(const Mat& frames, int64_t k, const EmOptions& opts);

double segment_log_likelihood(const GaussianMixture& gmm, const Mat& frames);

struct Classification {
  int64_t class_index = -1;
  std::vector<double> loglik;  // per class
  bool tie = false;
};

Classification classify_segment(const GmmBank& bank, const Mat& frames);

void save_bank(const std::filesystem::path& path, const GmmBank& bank);
GmmBank load_bank(const std::filesystem::path& path);

}  // namespace asc::gmm
