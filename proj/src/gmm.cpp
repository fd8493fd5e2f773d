#include "asc/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace asc::gmm {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // ln(2*pi)
constexpr double kMinWeight = 1e-8;
constexpr double kAbsFloor = 1e-10;

// log N(x; mu, diag var) for one frame.
double log_gauss(const double* x, const double* mu, const double* var, int64_t dim) {
  double acc = 0.0;
  for (int64_t d = 0; d < dim; ++d) {
    const double diff = x[d] - mu[d];
    acc += std::log(var[d]) + diff * diff / var[d];
  }
  return -0.5 * (static_cast<double>(dim) * kLog2Pi + acc);
}

// Per-frame log-likelihoods under the mixture; also fills (optionally) the
// responsibility matrix in log domain turned linear.
double frame_loglik(const GaussianMixture& g, const double* x, std::vector<double>* scratch,
                    double* resp_row) {
  const int64_t k = g.components();
  auto& lp = *scratch;
  double mx = -std::numeric_limits<double>::infinity();
  for (int64_t j = 0; j < k; ++j) {
    lp[static_cast<size_t>(j)] =
        std::log(g.weights[static_cast<size_t>(j)]) +
        log_gauss(x, g.means.row(j), g.variances.row(j), g.dim);
    mx = std::max(mx, lp[static_cast<size_t>(j)]);
  }
  double denom = 0.0;
  for (int64_t j = 0; j < k; ++j) denom += std::exp(lp[static_cast<size_t>(j)] - mx);
  const double ll = mx + std::log(denom);
  if (resp_row)
    for (int64_t j = 0; j < k; ++j)
      resp_row[j] = std::exp(lp[static_cast<size_t>(j)] - ll);
  return ll;
}

std::vector<double> global_stats(const Mat& frames, std::vector<double>* mean_out) {
  const int64_t t = frames.rows, dim = frames.cols;
  std::vector<double> mean(static_cast<size_t>(dim), 0.0);
  for (int64_t i = 0; i < t; ++i)
    for (int64_t d = 0; d < dim; ++d) mean[static_cast<size_t>(d)] += frames.at(i, d);
  for (auto& v : mean) v /= static_cast<double>(t);
  std::vector<double> var(static_cast<size_t>(dim), 0.0);
  for (int64_t i = 0; i < t; ++i)
    for (int64_t d = 0; d < dim; ++d) {
      const double diff = frames.at(i, d) - mean[static_cast<size_t>(d)];
      var[static_cast<size_t>(d)] += diff * diff;
    }
  for (auto& v : var) v /= static_cast<double>(t);
  if (mean_out) *mean_out = std::move(mean);
  return var;
}

// Index of the frame farthest from the global mean in floor-normalized units:
// the most outlying ("highest-variance") point, used to revive dead components.
int64_t most_outlying_frame(const Mat& frames, const std::vector<double>& gmean,
                            const std::vector<double>& gvar) {
  int64_t best = 0;
  double best_d = -1.0;
  for (int64_t i = 0; i < frames.rows; ++i) {
    double d2 = 0.0;
    for (int64_t d = 0; d < frames.cols; ++d) {
      const double diff = frames.at(i, d) - gmean[static_cast<size_t>(d)];
      d2 += diff * diff / std::max(gvar[static_cast<size_t>(d)], kAbsFloor);
    }
    if (d2 > best_d) {
      best_d = d2;
      best = i;
    }
  }
  return best;
}

}  // namespace

EmResult em_fit(const Mat& frames, int64_t k, const EmOptions& opts) {
  const int64_t t = frames.rows, dim = frames.cols;
  if (t < k)
    raise(ErrorKind::kTooFewFrames,
          strf("em_fit: %lld frames for %lld components", static_cast<long long>(t),
               static_cast<long long>(k)));
  if (k < 1) raise(ErrorKind::kInvalidArgument, "em_fit: k must be positive");

  std::vector<double> gmean;
  const std::vector<double> gvar = global_stats(frames, &gmean);
  std::vector<double> vfloor(static_cast<size_t>(dim));
  for (int64_t d = 0; d < dim; ++d)
    vfloor[static_cast<size_t>(d)] =
        std::max(opts.var_floor_rel * gvar[static_cast<size_t>(d)], kAbsFloor);

  // --- seeded k-means init (10 rounds) ---
  Rng rng(opts.seed);
  std::vector<int64_t> order(static_cast<size_t>(t));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  Mat centers(k, dim);
  for (int64_t j = 0; j < k; ++j)
    std::memcpy(centers.row(j), frames.row(order[static_cast<size_t>(j)]),
                static_cast<size_t>(dim) * sizeof(double));

  std::vector<int64_t> assign(static_cast<size_t>(t), 0);
  for (int round = 0; round < 10; ++round) {
    for (int64_t i = 0; i < t; ++i) {
      int64_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int64_t j = 0; j < k; ++j) {
        double d2 = 0.0;
        const double* c = centers.row(j);
        const double* x = frames.row(i);
        for (int64_t d = 0; d < dim; ++d) {
          const double diff = x[d] - c[d];
          d2 += diff * diff;
        }
        if (d2 < best_d) {
          best_d = d2;
          best = j;
        }
      }
      assign[static_cast<size_t>(i)] = best;
    }
    std::vector<int64_t> counts(static_cast<size_t>(k), 0);
    Mat sums(k, dim);
    for (int64_t i = 0; i < t; ++i) {
      const int64_t j = assign[static_cast<size_t>(i)];
      ++counts[static_cast<size_t>(j)];
      for (int64_t d = 0; d < dim; ++d) sums.at(j, d) += frames.at(i, d);
    }
    for (int64_t j = 0; j < k; ++j) {
      if (counts[static_cast<size_t>(j)] == 0) continue;  // keep the old center
      for (int64_t d = 0; d < dim; ++d)
        centers.at(j, d) = sums.at(j, d) / static_cast<double>(counts[static_cast<size_t>(j)]);
    }
  }

  GaussianMixture g;
  g.dim = dim;
  g.weights.assign(static_cast<size_t>(k), 0.0);
  g.means = centers;
  g.variances = Mat(k, dim);
  {
    std::vector<int64_t> counts(static_cast<size_t>(k), 0);
    for (int64_t i = 0; i < t; ++i) ++counts[static_cast<size_t>(assign[static_cast<size_t>(i)])];
    for (int64_t i = 0; i < t; ++i) {
      const int64_t j = assign[static_cast<size_t>(i)];
      for (int64_t d = 0; d < dim; ++d) {
        const double diff = frames.at(i, d) - g.means.at(j, d);
        g.variances.at(j, d) += diff * diff;
      }
    }
    for (int64_t j = 0; j < k; ++j) {
      const int64_t n = counts[static_cast<size_t>(j)];
      g.weights[static_cast<size_t>(j)] = std::max(
          static_cast<double>(n) / static_cast<double>(t), kMinWeight);
      for (int64_t d = 0; d < dim; ++d) {
        const double v = n > 0 ? g.variances.at(j, d) / static_cast<double>(n)
                               : gvar[static_cast<size_t>(d)];
        g.variances.at(j, d) = std::max(v, vfloor[static_cast<size_t>(d)]);
      }
    }
    double wsum = 0.0;
    for (double w : g.weights) wsum += w;
    for (auto& w : g.weights) w /= wsum;
  }

  // --- EM ---
  EmResult result;
  std::vector<double> resp(static_cast<size_t>(t * k));
  std::vector<double> scratch(static_cast<size_t>(k));
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int64_t iter = 0; iter < opts.max_iters; ++iter) {
    double total = 0.0;
    for (int64_t i = 0; i < t; ++i)
      total += frame_loglik(g, frames.row(i), &scratch, resp.data() + i * k);
    const double avg = total / static_cast<double>(t);
    result.avg_loglik.push_back(avg);

    // M-step
    for (int64_t j = 0; j < k; ++j) {
      double nj = 0.0;
      for (int64_t i = 0; i < t; ++i) nj += resp[static_cast<size_t>(i * k + j)];
      if (nj / static_cast<double>(t) < kMinWeight) {
        const int64_t pick = most_outlying_frame(frames, gmean, gvar);
        log_warn(strf("em_fit: component %lld degenerate, re-seeded from frame %lld",
                      static_cast<long long>(j), static_cast<long long>(pick)));
        std::memcpy(g.means.row(j), frames.row(pick),
                    static_cast<size_t>(dim) * sizeof(double));
        for (int64_t d = 0; d < dim; ++d)
          g.variances.at(j, d) =
              std::max(gvar[static_cast<size_t>(d)], vfloor[static_cast<size_t>(d)]);
        g.weights[static_cast<size_t>(j)] = 1.0 / static_cast<double>(t);
        continue;
      }
      g.weights[static_cast<size_t>(j)] = nj / static_cast<double>(t);
      for (int64_t d = 0; d < dim; ++d) {
        double m = 0.0;
        for (int64_t i = 0; i < t; ++i)
          m += resp[static_cast<size_t>(i * k + j)] * frames.at(i, d);
        m /= nj;
        double v = 0.0;
        for (int64_t i = 0; i < t; ++i) {
          const double diff = frames.at(i, d) - m;
          v += resp[static_cast<size_t>(i * k + j)] * diff * diff;
        }
        g.means.at(j, d) = m;
        g.variances.at(j, d) = std::max(v / nj, vfloor[static_cast<size_t>(d)]);
      }
    }
    double wsum = 0.0;
    for (double w : g.weights) wsum += w;
    for (auto& w : g.weights) w /= wsum;

    if (iter > 0 && avg - prev_ll < opts.tol) break;
    prev_ll = avg;
  }

  result.gmm = std::move(g);
  return result;
}

double segment_log_likelihood(const GaussianMixture& gmm, const Mat& frames) {
  if (frames.cols != gmm.dim)
    raise(ErrorKind::kDimensionMismatch,
          strf("segment has %lld dims, mixture expects %lld",
               static_cast<long long>(frames.cols), static_cast<long long>(gmm.dim)));
  std::vector<double> scratch(static_cast<size_t>(gmm.components()));
  std::vector<double> per_frame(static_cast<size_t>(frames.rows));
  for (int64_t i = 0; i < frames.rows; ++i)
    per_frame[static_cast<size_t>(i)] = frame_loglik(gmm, frames.row(i), &scratch, nullptr);
  // Summing in sorted order makes the total invariant to frame permutation.
  std::sort(per_frame.begin(), per_frame.end());
  double total = 0.0;
  for (double v : per_frame) total += v;
  return total;
}

Classification classify_segment(const GmmBank& bank, const Mat& frames) {
  if (bank.mixtures.empty()) raise(ErrorKind::kEmptyBank, "classify_segment: empty bank");
  Classification out;
  for (const auto& g : bank.mixtures)
    out.loglik.push_back(segment_log_likelihood(g, frames));
  out.class_index = 0;
  for (size_t c = 1; c < out.loglik.size(); ++c)
    if (out.loglik[c] > out.loglik[static_cast<size_t>(out.class_index)])
      out.class_index = static_cast<int64_t>(c);
  for (size_t c = 0; c < out.loglik.size(); ++c)
    if (static_cast<int64_t>(c) != out.class_index &&
        out.loglik[c] == out.loglik[static_cast<size_t>(out.class_index)]) {
      out.tie = true;
      log_warn("classify_segment: log-likelihood tie, keeping lowest class index");
      break;
    }
  return out;
}

namespace {
constexpr char kBankMagic[4] = {'A', 'S', 'C', 'G'};
constexpr uint32_t kBankVersion = 1;
}  // namespace

void save_bank(const std::filesystem::path& path, const GmmBank& bank) {
  if (bank.mixtures.empty()) raise(ErrorKind::kEmptyBank, "save_bank: empty bank");
  const int64_t dim = bank.mixtures[0].dim;
  const int64_t k = bank.mixtures[0].components();
  for (const auto& g : bank.mixtures)
    if (g.dim != dim || g.components() != k)
      raise(ErrorKind::kDimensionMismatch, "save_bank: mixtures differ in dim or K");

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) raise(ErrorKind::kIOFailure, "cannot open for write: " + path.string());
  os.write(kBankMagic, 4);
  bin::write_u32(os, kBankVersion);
  bin::write_u32(os, static_cast<uint32_t>(bank.mixtures.size()));
  bin::write_u32(os, static_cast<uint32_t>(dim));
  bin::write_u32(os, static_cast<uint32_t>(k));
  for (const auto& g : bank.mixtures) {
    bin::write_f64_array(os, g.weights.data(), g.weights.size());
    bin::write_f64_array(os, g.means.v.data(), g.means.v.size());
    bin::write_f64_array(os, g.variances.v.data(), g.variances.v.size());
  }
  if (!os) raise(ErrorKind::kIOFailure, "bank write failed: " + path.string());

  std::ofstream manifest(path.string() + ".manifest.txt", std::ios::trunc);
  if (!manifest) raise(ErrorKind::kIOFailure, "cannot write bank manifest");
  manifest << "feature_kind = " << bank.feature_kind << "\n";
  manifest << "classes = ";
  for (size_t i = 0; i < bank.class_labels.size(); ++i) {
    if (i) manifest << ',';
    manifest << bank.class_labels[i];
  }
  manifest << "\n";
}

GmmBank load_bank(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(ErrorKind::kMissingFile, "cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kBankMagic, 4) != 0)
    raise(ErrorKind::kMalformedHeader, "not an ASCG file: " + path.string());
  if (bin::read_u32(is) != kBankVersion)
    raise(ErrorKind::kMalformedHeader, "unsupported ASCG version");
  const uint32_t num_classes = bin::read_u32(is);
  const uint32_t dim = bin::read_u32(is);
  const uint32_t k = bin::read_u32(is);

  GmmBank bank;
  for (uint32_t c = 0; c < num_classes; ++c) {
    GaussianMixture g;
    g.dim = dim;
    g.weights.resize(k);
    bin::read_f64_array(is, g.weights.data(), g.weights.size());
    g.means = Mat(static_cast<int64_t>(k), static_cast<int64_t>(dim));
    bin::read_f64_array(is, g.means.v.data(), g.means.v.size());
    g.variances = Mat(static_cast<int64_t>(k), static_cast<int64_t>(dim));
    bin::read_f64_array(is, g.variances.v.data(), g.variances.v.size());
    bank.mixtures.push_back(std::move(g));
  }
  if (!is) raise(ErrorKind::kMalformedHeader, "truncated ASCG file: " + path.string());

  std::ifstream manifest(path.string() + ".manifest.txt");
  if (manifest) {
    std::string line;
    while (std::getline(manifest, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t");
        const auto b = s.find_last_not_of(" \t");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key == "feature_kind") {
        bank.feature_kind = value;
      } else if (key == "classes") {
        std::string item;
        std::istringstream ss(value);
        while (std::getline(ss, item, ',')) bank.class_labels.push_back(item);
      }
    }
  }
  return bank;
}

}  // namespace asc::gmm
