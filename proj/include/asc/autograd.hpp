#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "asc/common.hpp"

namespace asc::ag {

// Dense N-D array node. S is float for training, double for gradient checks.
template <typename S>
struct TensorImpl {
  std::vector<int64_t> shape;
  std::vector<S> data;
  std::vector<S> grad;  // empty until needed
  bool requires_grad = false;
  std::string op;  // empty for leaves
  std::vector<std::shared_ptr<TensorImpl<S>>> parents;
  std::function<void(TensorImpl<S>&)> backward_fn;

  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
  }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), S(0));
  }
};

template <typename S>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl<S>> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<int64_t> shape, S value, bool requires_grad = false);
  static Tensor from_data(std::vector<int64_t> shape, std::vector<S> data,
                          bool requires_grad = false);
  // Generic op node: forward value precomputed, backward closure scatters
  // this node's grad into its parents' grads.
  static Tensor make(std::string op, std::vector<int64_t> shape, std::vector<S> data,
                     std::vector<Tensor> parents,
                     std::function<void(TensorImpl<S>&)> backward_fn);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int64_t>& shape() const { return impl_->shape; }
  int64_t numel() const { return impl_->numel(); }
  std::vector<S>& data() { return impl_->data; }
  const std::vector<S>& data() const { return impl_->data; }
  std::vector<S>& grad() { return impl_->grad; }
  const std::vector<S>& grad() const { return impl_->grad; }
  bool requires_grad() const { return impl_->requires_grad; }
  const std::string& op() const { return impl_->op; }
  std::shared_ptr<TensorImpl<S>> impl() const { return impl_; }

  S scalar() const;
  void zero_grad() {
    if (impl_) impl_->grad.assign(impl_->data.size(), S(0));
  }

  // Reverse-mode accumulation from a scalar node. Grads accumulate across
  // calls; zero them between steps.
  void backward() const;

 private:
  std::shared_ptr<TensorImpl<S>> impl_;
};

// Per-channel running statistics owned by whoever owns the BN parameters.
template <typename S>
struct BnStats {
  std::vector<S> mean;  // init 0
  std::vector<S> var;   // init 1
  explicit BnStats(int64_t channels = 0)
      : mean(static_cast<size_t>(channels), S(0)), var(static_cast<size_t>(channels), S(1)) {}
};

// ---- operator set --------------------------------------------------------
// conv2d: stride 1, zero padding, correlation convention (no kernel flip).
template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& kernel, int64_t pad_h, int64_t pad_w);

template <typename S>
Tensor<S> batchnorm2d(const Tensor<S>& input, const Tensor<S>& gamma, const Tensor<S>& beta,
                      BnStats<S>& stats, bool training, double momentum = 0.1,
                      double eps = 1e-5);

template <typename S>
Tensor<S> relu(const Tensor<S>& input);

// Floor-divides odd spatial dims: the trailing row/col is dropped.
template <typename S>
Tensor<S> avg_pool_2x2(const Tensor<S>& input);

template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& input);  // [N,C,H,W] -> [N,C]

template <typename S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& inputs);

template <typename S>
Tensor<S> linear(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias);

// Mean per-batch loss; backward emits (softmax - onehot)/N.
template <typename S>
Tensor<S> softmax_cross_entropy(const Tensor<S>& logits, const std::vector<int64_t>& labels);

// Row-wise log-softmax, no autograd use in practice (prediction only).
template <typename S>
std::vector<S> log_softmax_rows(const Tensor<S>& logits);

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);

template <typename S>
Tensor<S> sum(const Tensor<S>& input);

// ---- verification --------------------------------------------------------
// Central differences against the analytic grad of f at `point` (64-bit use
// only; 32-bit floats drown the difference quotient in roundoff). Returns the
// max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|).
double gradient_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                      const Tensor<double>& point, double eps = 1e-5);

// Finite-difference sweep over every differentiable operator, each evaluated
// at `points` random points per input. Returns (check name, max rel error).
std::vector<std::pair<std::string, double>> op_gradient_suite(uint64_t seed, int points);

// ---- checkpoints ---------------------------------------------------------
struct NamedArray {
  std::string name;
  std::vector<int64_t> dims;
  std::vector<float> data;
};

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace asc::ag
