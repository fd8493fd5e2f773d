#pragma once

#include <string>
#include <vector>

#include "asc/autograd.hpp"

namespace asc::ag {

template <typename S>
struct Parameter {
  std::string name;
  Tensor<S> tensor;
  bool trainable = true;
  // Optimizer state, allocated on first use.
  std::vector<S> adam_m, adam_v;
  std::vector<S> sgd_momentum;
};

struct SgdOptions {
  double lr = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Both steppers consume populated grads and zero them afterwards.
template <typename S>
void sgd_step(const std::vector<Parameter<S>*>& params, const SgdOptions& opts);

template <typename S>
class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}
  void step(const std::vector<Parameter<S>*>& params);
  int64_t steps() const { return t_; }

 private:
  AdamOptions opts_;
  int64_t t_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace asc::ag
