#include "asc/optim.hpp"

#include <cmath>

namespace asc::ag {

namespace {

template <typename S>
std::vector<S>& require_grad_of(Parameter<S>& p) {
  if (p.tensor.grad().empty())
    raise(ErrorKind::kMissingGradient, "parameter '" + p.name + "' has no gradient");
  return p.tensor.grad();
}

}  // namespace

template <typename S>
void sgd_step(const std::vector<Parameter<S>*>& params, const SgdOptions& opts) {
  for (Parameter<S>* pp : params) {
    if (!pp->trainable) continue;
    auto& grad = require_grad_of(*pp);
    auto& data = pp->tensor.data();
    if (opts.momentum != 0.0 && pp->sgd_momentum.empty())
      pp->sgd_momentum.assign(data.size(), S(0));
    for (size_t i = 0; i < data.size(); ++i) {
      double g = static_cast<double>(grad[i]) + opts.weight_decay * data[i];
      if (opts.momentum != 0.0) {
        const double v = opts.momentum * pp->sgd_momentum[i] + g;
        pp->sgd_momentum[i] = static_cast<S>(v);
        g = v;
      }
      data[i] = static_cast<S>(data[i] - opts.lr * g);
    }
    pp->tensor.zero_grad();
  }
}

template <typename S>
void Adam<S>::step(const std::vector<Parameter<S>*>& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (Parameter<S>* pp : params) {
    if (!pp->trainable) continue;
    auto& grad = require_grad_of(*pp);
    auto& data = pp->tensor.data();
    if (pp->adam_m.empty()) {
      pp->adam_m.assign(data.size(), S(0));
      pp->adam_v.assign(data.size(), S(0));
    }
    for (size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i];
      const double m = opts_.beta1 * pp->adam_m[i] + (1.0 - opts_.beta1) * g;
      const double v = opts_.beta2 * pp->adam_v[i] + (1.0 - opts_.beta2) * g * g;
      pp->adam_m[i] = static_cast<S>(m);
      pp->adam_v[i] = static_cast<S>(v);
      data[i] = static_cast<S>(data[i] - opts_.lr * (m / bc1) / (std::sqrt(v / bc2) + opts_.eps));
    }
    pp->tensor.zero_grad();
  }
}

template void sgd_step<float>(const std::vector<Parameter<float>*>&, const SgdOptions&);
template void sgd_step<double>(const std::vector<Parameter<double>*>&, const SgdOptions&);
template class Adam<float>;
template class Adam<double>;

}  // namespace asc::ag
