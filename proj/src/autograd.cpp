#define EIGEN_DONT_PARALLELIZE
#include "asc/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

namespace asc::ag {

namespace {

template <typename S>
using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

template <typename S>
void require_rank(const Tensor<S>& t, size_t rank, const char* what) {
  if (t.shape().size() != rank)
    raise(ErrorKind::kShapeMismatch, strf("%s: expected rank %zu, got %zu", what, rank,
                                          t.shape().size()));
}

// col is [C*kh*kw, Ho*Wo] row-major; every cell written.
template <typename S>
void im2col(const S* x, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw, int64_t ph,
            int64_t pw, int64_t Ho, int64_t Wo, S* col) {
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < kh; ++i)
      for (int64_t j = 0; j < kw; ++j) {
        S* row = col + ((c * kh + i) * kw + j) * (Ho * Wo);
        for (int64_t oh = 0; oh < Ho; ++oh) {
          const int64_t ih = oh + i - ph;
          S* dst = row + oh * Wo;
          if (ih < 0 || ih >= H) {
            std::fill(dst, dst + Wo, S(0));
            continue;
          }
          const S* src = x + (c * H + ih) * W;
          for (int64_t ow = 0; ow < Wo; ++ow) {
            const int64_t iw = ow + j - pw;
            dst[ow] = (iw >= 0 && iw < W) ? src[iw] : S(0);
          }
        }
      }
}

// Transpose of im2col: scatter-adds col-layout gradients back onto the image.
template <typename S>
void col2im_add(const S* col, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw, int64_t ph,
                int64_t pw, int64_t Ho, int64_t Wo, S* x) {
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < kh; ++i)
      for (int64_t j = 0; j < kw; ++j) {
        const S* row = col + ((c * kh + i) * kw + j) * (Ho * Wo);
        for (int64_t oh = 0; oh < Ho; ++oh) {
          const int64_t ih = oh + i - ph;
          if (ih < 0 || ih >= H) continue;
          S* dst = x + (c * H + ih) * W;
          const S* src = row + oh * Wo;
          for (int64_t ow = 0; ow < Wo; ++ow) {
            const int64_t iw = ow + j - pw;
            if (iw >= 0 && iw < W) dst[iw] += src[ow];
          }
        }
      }
}

}  // namespace

// ---- Tensor --------------------------------------------------------------

template <typename S>
Tensor<S> Tensor<S>::zeros(std::vector<int64_t> shape, bool requires_grad) {
  const int64_t n = shape_numel<S>(shape);
  return from_data(std::move(shape), std::vector<S>(static_cast<size_t>(n), S(0)), requires_grad);
}

template <typename S>
Tensor<S> Tensor<S>::full(std::vector<int64_t> shape, S value, bool requires_grad) {
  const int64_t n = shape_numel<S>(shape);
  return from_data(std::move(shape), std::vector<S>(static_cast<size_t>(n), value),
                   requires_grad);
}

template <typename S>
Tensor<S> Tensor<S>::from_data(std::vector<int64_t> shape, std::vector<S> data,
                               bool requires_grad) {
  if (shape_numel<S>(shape) != static_cast<int64_t>(data.size()))
    raise(ErrorKind::kShapeMismatch, "tensor data length does not match shape");
  auto impl = std::make_shared<TensorImpl<S>>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

template <typename S>
Tensor<S> Tensor<S>::make(std::string op, std::vector<int64_t> shape, std::vector<S> data,
                          std::vector<Tensor> parents,
                          std::function<void(TensorImpl<S>&)> backward_fn) {
  Tensor out = from_data(std::move(shape), std::move(data));
  out.impl_->op = std::move(op);
  out.impl_->backward_fn = std::move(backward_fn);
  for (const auto& p : parents) {
    out.impl_->parents.push_back(p.impl());
    if (p.impl()->requires_grad) out.impl_->requires_grad = true;
  }
  return out;
}

template <typename S>
S Tensor<S>::scalar() const {
  if (numel() != 1) raise(ErrorKind::kNonScalarLoss, "scalar() on a non-scalar tensor");
  return impl_->data[0];
}

template <typename S>
void Tensor<S>::backward() const {
  if (!impl_ || impl_->numel() != 1)
    raise(ErrorKind::kNonScalarLoss, "backward() requires a scalar loss");

  // Post-order DFS; interior grads reset per call so only leaves accumulate
  // across repeated backward passes.
  std::vector<TensorImpl<S>*> topo;
  std::unordered_set<TensorImpl<S>*> visited;
  std::vector<std::pair<TensorImpl<S>*, size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorImpl<S>* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  for (TensorImpl<S>* node : topo)
    if (!node->parents.empty()) node->grad.assign(node->data.size(), S(0));
  impl_->ensure_grad();
  if (impl_->parents.empty())
    impl_->grad[0] += S(1);
  else
    impl_->grad[0] = S(1);

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    TensorImpl<S>* node = *it;
    if (node->backward_fn && node->requires_grad) node->backward_fn(*node);
  }
}

// ---- conv2d ---------------------------------------------------------------

template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& kernel, int64_t pad_h, int64_t pad_w) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  const int64_t N = input.shape()[0], C = input.shape()[1], H = input.shape()[2],
                W = input.shape()[3];
  const int64_t K = kernel.shape()[0], kh = kernel.shape()[2], kw = kernel.shape()[3];
  if (kernel.shape()[1] != C)
    raise(ErrorKind::kShapeMismatch,
          strf("conv2d: kernel expects %lld input channels, batch has %lld",
               static_cast<long long>(kernel.shape()[1]), static_cast<long long>(C)));
  if (kh > H + 2 * pad_h || kw > W + 2 * pad_w)
    raise(ErrorKind::kShapeMismatch, "conv2d: kernel larger than padded input");
  const int64_t Ho = H + 2 * pad_h - kh + 1;
  const int64_t Wo = W + 2 * pad_w - kw + 1;
  const int64_t ckk = C * kh * kw;
  const int64_t hw = Ho * Wo;

  std::vector<S> out(static_cast<size_t>(N * K * hw));
  const S* xp = input.data().data();
  const S* wp = kernel.data().data();
  parallel_for(N, [&](int64_t lo, int64_t hi) {
    std::vector<S> col(static_cast<size_t>(ckk * hw));
    Eigen::Map<const EMat<S>> wm(wp, K, ckk);
    for (int64_t n = lo; n < hi; ++n) {
      im2col(xp + n * C * H * W, C, H, W, kh, kw, pad_h, pad_w, Ho, Wo, col.data());
      Eigen::Map<const EMat<S>> cm(col.data(), ckk, hw);
      Eigen::Map<EMat<S>> om(out.data() + n * K * hw, K, hw);
      om.noalias() = wm * cm;
    }
  });

  auto backward = [N, C, H, W, K, kh, kw, pad_h, pad_w, Ho, Wo, ckk, hw](TensorImpl<S>& self) {
    auto& x = *self.parents[0];
    auto& w = *self.parents[1];
    const S* g = self.grad.data();
    std::vector<S> col(static_cast<size_t>(ckk * hw));
    Eigen::Map<EMat<S>> colm(col.data(), ckk, hw);
    if (w.requires_grad) {
      w.ensure_grad();
      Eigen::Map<EMat<S>> dwm(w.grad.data(), K, ckk);
      for (int64_t n = 0; n < N; ++n) {  // fixed order keeps the sum bit-stable
        im2col(x.data.data() + n * C * H * W, C, H, W, kh, kw, pad_h, pad_w, Ho, Wo, col.data());
        Eigen::Map<const EMat<S>> gm(g + n * K * hw, K, hw);
        dwm.noalias() += gm * colm.transpose();
      }
    }
    if (x.requires_grad) {
      x.ensure_grad();
      Eigen::Map<const EMat<S>> wm(w.data.data(), K, ckk);
      for (int64_t n = 0; n < N; ++n) {
        Eigen::Map<const EMat<S>> gm(g + n * K * hw, K, hw);
        colm.noalias() = wm.transpose() * gm;
        col2im_add(col.data(), C, H, W, kh, kw, pad_h, pad_w, Ho, Wo,
                   x.grad.data() + n * C * H * W);
      }
    }
  };
  return Tensor<S>::make("conv2d", {N, K, Ho, Wo}, std::move(out), {input, kernel},
                         std::move(backward));
}

// ---- batchnorm2d ----------------------------------------------------------

template <typename S>
Tensor<S> batchnorm2d(const Tensor<S>& input, const Tensor<S>& gamma, const Tensor<S>& beta,
                      BnStats<S>& stats, bool training, double momentum, double eps) {
  require_rank(input, 4, "batchnorm2d input");
  const int64_t N = input.shape()[0], C = input.shape()[1], H = input.shape()[2],
                W = input.shape()[3];
  if (gamma.numel() != C || beta.numel() != C ||
      static_cast<int64_t>(stats.mean.size()) != C ||
      static_cast<int64_t>(stats.var.size()) != C)
    raise(ErrorKind::kShapeMismatch, "batchnorm2d: gamma/beta/stats must have C entries");
  const int64_t m = N * H * W;
  if (training && m < 2)
    raise(ErrorKind::kDegenerateBatch, "batchnorm2d: train mode needs N*H*W >= 2");

  std::vector<S> mean(static_cast<size_t>(C)), invstd(static_cast<size_t>(C));
  const S* xp = input.data().data();
  const int64_t hw = H * W;
  if (training) {
    for (int64_t c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int64_t n = 0; n < N; ++n) {
        const S* p = xp + (n * C + c) * hw;
        for (int64_t i = 0; i < hw; ++i) acc += p[i];
      }
      const double mu = acc / static_cast<double>(m);
      double var = 0.0;
      for (int64_t n = 0; n < N; ++n) {
        const S* p = xp + (n * C + c) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          const double d = p[i] - mu;
          var += d * d;
        }
      }
      var /= static_cast<double>(m);  // biased, as used for normalization
      mean[static_cast<size_t>(c)] = static_cast<S>(mu);
      invstd[static_cast<size_t>(c)] = static_cast<S>(1.0 / std::sqrt(var + eps));
      stats.mean[static_cast<size_t>(c)] =
          static_cast<S>((1.0 - momentum) * stats.mean[static_cast<size_t>(c)] + momentum * mu);
      stats.var[static_cast<size_t>(c)] =
          static_cast<S>((1.0 - momentum) * stats.var[static_cast<size_t>(c)] + momentum * var);
    }
  } else {
    for (int64_t c = 0; c < C; ++c) {
      mean[static_cast<size_t>(c)] = stats.mean[static_cast<size_t>(c)];
      invstd[static_cast<size_t>(c)] = static_cast<S>(
          1.0 / std::sqrt(static_cast<double>(stats.var[static_cast<size_t>(c)]) + eps));
    }
  }

  std::vector<S> out(input.data().size());
  const S* gp = gamma.data().data();
  const S* bp = beta.data().data();
  parallel_for(N * C, [&](int64_t lo, int64_t hi) {
    for (int64_t nc = lo; nc < hi; ++nc) {
      const int64_t c = nc % C;
      const S* src = xp + nc * hw;
      S* dst = out.data() + nc * hw;
      const S mu = mean[static_cast<size_t>(c)], is = invstd[static_cast<size_t>(c)];
      const S gsc = gp[c], bsc = bp[c];
      for (int64_t i = 0; i < hw; ++i) dst[i] = gsc * ((src[i] - mu) * is) + bsc;
    }
  });

  auto backward = [N, C, hw, m, training, mean, invstd](TensorImpl<S>& self) {
    auto& x = *self.parents[0];
    auto& ga = *self.parents[1];
    auto& be = *self.parents[2];
    const S* g = self.grad.data();
    const S* xp2 = x.data.data();
    const bool need_x = x.requires_grad;
    if (need_x) x.ensure_grad();
    if (ga.requires_grad) ga.ensure_grad();
    if (be.requires_grad) be.ensure_grad();
    for (int64_t c = 0; c < C; ++c) {
      const S mu = mean[static_cast<size_t>(c)], is = invstd[static_cast<size_t>(c)];
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int64_t n = 0; n < N; ++n) {
        const S* gr = g + (n * C + c) * hw;
        const S* sr = xp2 + (n * C + c) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          sum_dy += gr[i];
          sum_dy_xhat += gr[i] * ((sr[i] - mu) * is);
        }
      }
      if (ga.requires_grad) ga.grad[static_cast<size_t>(c)] += static_cast<S>(sum_dy_xhat);
      if (be.requires_grad) be.grad[static_cast<size_t>(c)] += static_cast<S>(sum_dy);
      if (!need_x) continue;
      const S gsc = ga.data[static_cast<size_t>(c)];
      if (training) {
        const S mean_dy = static_cast<S>(sum_dy / static_cast<double>(m));
        const S mean_dy_xhat = static_cast<S>(sum_dy_xhat / static_cast<double>(m));
        for (int64_t n = 0; n < N; ++n) {
          const S* gr = g + (n * C + c) * hw;
          const S* sr = xp2 + (n * C + c) * hw;
          S* dx = x.grad.data() + (n * C + c) * hw;
          for (int64_t i = 0; i < hw; ++i) {
            const S xhat = (sr[i] - mu) * is;
            dx[i] += gsc * is * (gr[i] - mean_dy - xhat * mean_dy_xhat);
          }
        }
      } else {
        for (int64_t n = 0; n < N; ++n) {
          const S* gr = g + (n * C + c) * hw;
          S* dx = x.grad.data() + (n * C + c) * hw;
          for (int64_t i = 0; i < hw; ++i) dx[i] += gsc * is * gr[i];
        }
      }
    }
  };
  return Tensor<S>::make("batchnorm2d", input.shape(), std::move(out), {input, gamma, beta},
                         std::move(backward));
}

// ---- elementwise / pooling -------------------------------------------------

template <typename S>
Tensor<S> relu(const Tensor<S>& input) {
  std::vector<S> out(input.data().size());
  const S* xp = input.data().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = xp[i] > S(0) ? xp[i] : S(0);
  auto backward = [](TensorImpl<S>& self) {
    auto& x = *self.parents[0];
    if (!x.requires_grad) return;
    x.ensure_grad();
    for (size_t i = 0; i < x.data.size(); ++i)
      if (x.data[i] > S(0)) x.grad[i] += self.grad[i];
  };
  return Tensor<S>::make("relu", input.shape(), std::move(out), {input}, std::move(backward));
}

template <typename S>
Tensor<S> avg_pool_2x2(const Tensor<S>& input) {
  require_rank(input, 4, "avg_pool_2x2 input");
  const int64_t N = input.shape()[0], C = input.shape()[1], H = input.shape()[2],
                W = input.shape()[3];
  if (H < 2 || W < 2) raise(ErrorKind::kShapeMismatch, "avg_pool_2x2: spatial dims below 2");
  const int64_t Ho = H / 2, Wo = W / 2;
  std::vector<S> out(static_cast<size_t>(N * C * Ho * Wo));
  const S* xp = input.data().data();
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const S* src = xp + nc * H * W;
    S* dst = out.data() + nc * Ho * Wo;
    for (int64_t oh = 0; oh < Ho; ++oh)
      for (int64_t ow = 0; ow < Wo; ++ow) {
        const S* p = src + (2 * oh) * W + 2 * ow;
        dst[oh * Wo + ow] = (p[0] + p[1] + p[W] + p[W + 1]) * S(0.25);
      }
  }
  auto backward = [N, C, H, W, Ho, Wo](TensorImpl<S>& self) {
    auto& x = *self.parents[0];
    if (!x.requires_grad) return;
    x.ensure_grad();
    const S* g = self.grad.data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
      S* dx = x.grad.data() + nc * H * W;
      const S* gr = g + nc * Ho * Wo;
      for (int64_t oh = 0; oh < Ho; ++oh)
        for (int64_t ow = 0; ow < Wo; ++ow) {
          const S q = gr[oh * Wo + ow] * S(0.25);
          S* p = dx + (2 * oh) * W + 2 * ow;
          p[0] += q;
          p[1] += q;
          p[W] += q;
          p[W + 1] += q;
        }
    }
  };
  return Tensor<S>::make("avg_pool_2x2", {N, C, Ho, Wo}, std::move(out), {input},
                         std::move(backward));
}

template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& input) {
  require_rank(input, 4, "global_avg_pool input");
  const int64_t N = input.shape()[0], C = input.shape()[1], H = input.shape()[2],
                W = input.shape()[3];
  const int64_t hw = H * W;
  std::vector<S> out(static_cast<size_t>(N * C));
  const S* xp = input.data().data();
  for (int64_t nc = 0; nc < N * C; ++nc) {
    double acc = 0.0;
    const S* src = xp + nc * hw;
    for (int64_t i = 0; i < hw; ++i) acc += src[i];
    out[static_cast<size_t>(nc)] = static_cast<S>(acc / static_cast<double>(hw));
  }
  auto backward = [N, C, hw](TensorImpl<S>& self) {
    auto& x = *self.parents[0];
    if (!x.requires_grad) return;
    x.ensure_grad();
    for (int64_t nc = 0; nc < N * C; ++nc) {
      const S q = self.grad[static_cast<size_t>(nc)] / static_cast<S>(hw);
      S* dx = x.grad.data() + nc * hw;
      for (int64_t i = 0; i < hw; ++i) dx[i] += q;
    }
  };
  return Tensor<S>::make("global_avg_pool", {N, C}, std::move(out), {input}, std::move(backward));
}

template <typename S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& inputs) {
  if (inputs.empty()) raise(ErrorKind::kShapeMismatch, "concat_channels: no inputs");
  require_rank(inputs[0], 4, "concat_channels input");
  const int64_t N = inputs[0].shape()[0], H = inputs[0].shape()[2], W = inputs[0].shape()[3];
  int64_t Ctot = 0;
  std::vector<int64_t> channels;
  for (const auto& t : inputs) {
    require_rank(t, 4, "concat_channels input");
    if (t.shape()[0] != N || t.shape()[2] != H || t.shape()[3] != W)
      raise(ErrorKind::kShapeMismatch, "concat_channels: N/H/W differ between inputs");
    channels.push_back(t.shape()[1]);
    Ctot += t.shape()[1];
  }
  const int64_t hw = H * W;
  std::vector<S> out(static_cast<size_t>(N * Ctot * hw));
  for (int64_t n = 0; n < N; ++n) {
    S* dst = out.data() + n * Ctot * hw;
    for (size_t k = 0; k < inputs.size(); ++k) {
      const int64_t ck = channels[k];
      const S* src = inputs[k].data().data() + n * ck * hw;
      std::memcpy(dst, src, static_cast<size_t>(ck * hw) * sizeof(S));
      dst += ck * hw;
    }
  }
  auto backward = [N, Ctot, hw, channels](TensorImpl<S>& self) {
    const S* g = self.grad.data();
    for (int64_t n = 0; n < N; ++n) {
      const S* src = g + n * Ctot * hw;
      for (size_t k = 0; k < self.parents.size(); ++k) {
        const int64_t ck = channels[k];
        auto& p = *self.parents[k];
        if (p.requires_grad) {
          p.ensure_grad();
          S* dst = p.grad.data() + n * ck * hw;
          for (int64_t i = 0; i < ck * hw; ++i) dst[i] += src[i];
        }
        src += ck * hw;
      }
    }
  };
  std::vector<Tensor<S>> parents = inputs;
  return Tensor<S>::make("concat_channels", {N, Ctot, H, W}, std::move(out), std::move(parents),
                         std::move(backward));
}

// ---- linear / loss ---------------------------------------------------------

template <typename S>
Tensor<S> linear(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias) {
  require_rank(input, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const int64_t N = input.shape()[0], D = input.shape()[1], F = weight.shape()[0];
  if (weight.shape()[1] != D || bias.numel() != F)
    raise(ErrorKind::kShapeMismatch, "linear: weight/bias shapes inconsistent with input");
  std::vector<S> out(static_cast<size_t>(N * F));
  {
    Eigen::Map<const EMat<S>> xm(input.data().data(), N, D);
    Eigen::Map<const EMat<S>> wm(weight.data().data(), F, D);
    Eigen::Map<EMat<S>> om(out.data(), N, F);
    om.noalias() = xm * wm.transpose();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t f = 0; f < F; ++f) out[static_cast<size_t>(n * F + f)] += bias.data()[f];
  }
  auto backward = [N, D, F](TensorImpl<S>& self) {
    auto& x = *self.parents[0];
    auto& w = *self.parents[1];
    auto& b = *self.parents[2];
    Eigen::Map<const EMat<S>> gm(self.grad.data(), N, F);
    if (x.requires_grad) {
      x.ensure_grad();
      Eigen::Map<const EMat<S>> wm(w.data.data(), F, D);
      Eigen::Map<EMat<S>> dxm(x.grad.data(), N, D);
      dxm.noalias() += gm * wm;
    }
    if (w.requires_grad) {
      w.ensure_grad();
      Eigen::Map<const EMat<S>> xm(x.data.data(), N, D);
      Eigen::Map<EMat<S>> dwm(w.grad.data(), F, D);
      dwm.noalias() += gm.transpose() * xm;
    }
    if (b.requires_grad) {
      b.ensure_grad();
      for (int64_t n = 0; n < N; ++n)
        for (int64_t f = 0; f < F; ++f)
          b.grad[static_cast<size_t>(f)] += self.grad[static_cast<size_t>(n * F + f)];
    }
  };
  return Tensor<S>::make("linear", {N, F}, std::move(out), {input, weight, bias},
                         std::move(backward));
}

template <typename S>
Tensor<S> softmax_cross_entropy(const Tensor<S>& logits, const std::vector<int64_t>& labels) {
  require_rank(logits, 2, "softmax_cross_entropy logits");
  const int64_t N = logits.shape()[0], C = logits.shape()[1];
  if (static_cast<int64_t>(labels.size()) != N)
    raise(ErrorKind::kShapeMismatch, "softmax_cross_entropy: one label per row required");
  for (int64_t n = 0; n < N; ++n)
    if (labels[static_cast<size_t>(n)] < 0 || labels[static_cast<size_t>(n)] >= C)
      raise(ErrorKind::kLabelOutOfRange,
            strf("label %lld outside [0, %lld)",
                 static_cast<long long>(labels[static_cast<size_t>(n)]),
                 static_cast<long long>(C)));
  const S* lp = logits.data().data();
  double total = 0.0;
  for (int64_t n = 0; n < N; ++n) {
    const S* row = lp + n * C;
    double mx = row[0];
    for (int64_t c = 1; c < C; ++c) mx = std::max(mx, static_cast<double>(row[c]));
    double lse = 0.0;
    for (int64_t c = 0; c < C; ++c) lse += std::exp(row[c] - mx);
    lse = mx + std::log(lse);
    total += lse - row[labels[static_cast<size_t>(n)]];
  }
  std::vector<S> out{static_cast<S>(total / static_cast<double>(N))};
  auto backward = [N, C, labels](TensorImpl<S>& self) {
    auto& x = *self.parents[0];
    if (!x.requires_grad) return;
    x.ensure_grad();
    const S g0 = self.grad[0];
    const S* lp2 = x.data.data();
    for (int64_t n = 0; n < N; ++n) {
      const S* row = lp2 + n * C;
      double mx = row[0];
      for (int64_t c = 1; c < C; ++c) mx = std::max(mx, static_cast<double>(row[c]));
      double denom = 0.0;
      for (int64_t c = 0; c < C; ++c) denom += std::exp(row[c] - mx);
      S* dx = x.grad.data() + n * C;
      for (int64_t c = 0; c < C; ++c) {
        double p = std::exp(row[c] - mx) / denom;
        if (c == labels[static_cast<size_t>(n)]) p -= 1.0;
        dx[c] += static_cast<S>(static_cast<double>(g0) * p / static_cast<double>(N));
      }
    }
  };
  return Tensor<S>::make("softmax_cross_entropy", {1}, std::move(out), {logits},
                         std::move(backward));
}

template <typename S>
std::vector<S> log_softmax_rows(const Tensor<S>& logits) {
  require_rank(logits, 2, "log_softmax_rows logits");
  const int64_t N = logits.shape()[0], C = logits.shape()[1];
  std::vector<S> out(logits.data().size());
  const S* lp = logits.data().data();
  for (int64_t n = 0; n < N; ++n) {
    const S* row = lp + n * C;
    double mx = row[0];
    for (int64_t c = 1; c < C; ++c) mx = std::max(mx, static_cast<double>(row[c]));
    double lse = 0.0;
    for (int64_t c = 0; c < C; ++c) lse += std::exp(row[c] - mx);
    lse = mx + std::log(lse);
    for (int64_t c = 0; c < C; ++c)
      out[static_cast<size_t>(n * C + c)] = static_cast<S>(row[c] - lse);
  }
  return out;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) raise(ErrorKind::kShapeMismatch, "add: shapes differ");
  std::vector<S> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto backward = [](TensorImpl<S>& self) {
    for (auto& pp : self.parents) {
      if (!pp->requires_grad) continue;
      pp->ensure_grad();
      for (size_t i = 0; i < pp->grad.size(); ++i) pp->grad[i] += self.grad[i];
    }
  };
  return Tensor<S>::make("add", a.shape(), std::move(out), {a, b}, std::move(backward));
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) raise(ErrorKind::kShapeMismatch, "mul: shapes differ");
  std::vector<S> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto backward = [](TensorImpl<S>& self) {
    auto& a2 = *self.parents[0];
    auto& b2 = *self.parents[1];
    if (a2.requires_grad) {
      a2.ensure_grad();
      for (size_t i = 0; i < a2.grad.size(); ++i) a2.grad[i] += self.grad[i] * b2.data[i];
    }
    if (b2.requires_grad) {
      b2.ensure_grad();
      for (size_t i = 0; i < b2.grad.size(); ++i) b2.grad[i] += self.grad[i] * a2.data[i];
    }
  };
  return Tensor<S>::make("mul", a.shape(), std::move(out), {a, b}, std::move(backward));
}

template <typename S>
Tensor<S> sum(const Tensor<S>& input) {
  double acc = 0.0;
  for (S x : input.data()) acc += x;
  auto backward = [](TensorImpl<S>& self) {
    auto& x = *self.parents[0];
    if (!x.requires_grad) return;
    x.ensure_grad();
    for (size_t i = 0; i < x.grad.size(); ++i) x.grad[i] += self.grad[0];
  };
  return Tensor<S>::make("sum", {1}, {static_cast<S>(acc)}, {input}, std::move(backward));
}

// ---- gradient check --------------------------------------------------------

double gradient_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                      const Tensor<double>& point, double eps) {
  auto x = Tensor<double>::from_data(point.shape(), point.data(), true);
  auto y = f(x);
  if (y.numel() != 1) raise(ErrorKind::kNonScalarLoss, "gradient_check: f must be scalar-valued");
  y.backward();
  const std::vector<double> analytic =
      x.grad().empty() ? std::vector<double>(x.data().size(), 0.0) : x.grad();

  double max_err = 0.0;
  for (size_t i = 0; i < point.data().size(); ++i) {
    std::vector<double> bumped = point.data();
    bumped[i] += eps;
    const double fp = f(Tensor<double>::from_data(point.shape(), bumped)).scalar();
    bumped[i] = point.data()[i] - eps;
    const double fm = f(Tensor<double>::from_data(point.shape(), std::move(bumped))).scalar();
    const double numeric = (fp - fm) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) /
                       std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    max_err = std::max(max_err, err);
  }
  return max_err;
}

namespace {

Tensor<double> rand_point(Rng& rng, std::vector<int64_t> shape, bool avoid_kink = false) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) {
    x = rng.uniform(-1.0, 1.0);
    if (avoid_kink) x += x >= 0 ? 0.2 : -0.2;
  }
  return Tensor<double>::from_data(std::move(shape), std::move(v));
}

Tensor<double> ssq(const Tensor<double>& y) { return sum(mul(y, y)); }

}  // namespace

std::vector<std::pair<std::string, double>> op_gradient_suite(uint64_t seed, int points) {
  using T = Tensor<double>;
  std::vector<std::pair<std::string, double>> out;
  auto sweep = [&](const std::string& name, const std::function<double(Rng&)>& one) {
    double worst = 0.0;
    for (int p = 0; p < points; ++p) {
      Rng rng = Rng(seed).split(static_cast<uint64_t>(out.size()) * 131 +
                                static_cast<uint64_t>(p) + 1);
      worst = std::max(worst, one(rng));
    }
    out.emplace_back(name, worst);
  };

  sweep("conv2d/input", [](Rng& rng) {
    T k = rand_point(rng, {3, 2, 3, 3});
    T x = rand_point(rng, {2, 2, 5, 6});
    return gradient_check([&](const T& t) { return ssq(conv2d(t, k, 1, 1)); }, x);
  });
  sweep("conv2d/kernel", [](Rng& rng) {
    T x = rand_point(rng, {2, 2, 5, 6});
    T k = rand_point(rng, {3, 2, 3, 3});
    return gradient_check([&](const T& t) { return ssq(conv2d(x, t, 1, 1)); }, k);
  });
  sweep("batchnorm2d/input", [](Rng& rng) {
    T g = rand_point(rng, {3}, true);
    T b = rand_point(rng, {3});
    T x = rand_point(rng, {2, 3, 4, 4});
    return gradient_check(
        [&](const T& t) {
          BnStats<double> st(3);
          return ssq(batchnorm2d(t, g, b, st, true, 0.0));
        },
        x);
  });
  sweep("batchnorm2d/gamma", [](Rng& rng) {
    T g = rand_point(rng, {3}, true);
    T b = rand_point(rng, {3});
    T x = rand_point(rng, {2, 3, 4, 4});
    return gradient_check(
        [&](const T& t) {
          BnStats<double> st(3);
          return ssq(batchnorm2d(x, t, b, st, true, 0.0));
        },
        g);
  });
  sweep("batchnorm2d/beta", [](Rng& rng) {
    T g = rand_point(rng, {3}, true);
    T b = rand_point(rng, {3});
    T x = rand_point(rng, {2, 3, 4, 4});
    return gradient_check(
        [&](const T& t) {
          BnStats<double> st(3);
          return ssq(batchnorm2d(x, g, t, st, true, 0.0));
        },
        b);
  });
  sweep("batchnorm2d_eval/input", [](Rng& rng) {
    T g = rand_point(rng, {3}, true);
    T b = rand_point(rng, {3});
    T x = rand_point(rng, {2, 3, 4, 4});
    BnStats<double> st(3);
    for (double& m : st.mean) m = rng.uniform(-0.5, 0.5);
    for (double& v : st.var) v = rng.uniform(0.5, 1.5);
    return gradient_check(
        [&](const T& t) {
          BnStats<double> local = st;
          return ssq(batchnorm2d(t, g, b, local, false));
        },
        x);
  });
  sweep("relu", [](Rng& rng) {
    T x = rand_point(rng, {3, 4}, true);
    return gradient_check([&](const T& t) { return ssq(relu(t)); }, x);
  });
  sweep("avg_pool_2x2", [](Rng& rng) {
    T x = rand_point(rng, {2, 3, 6, 6});
    return gradient_check([&](const T& t) { return ssq(avg_pool_2x2(t)); }, x);
  });
  sweep("global_avg_pool", [](Rng& rng) {
    T x = rand_point(rng, {2, 3, 4, 5});
    return gradient_check([&](const T& t) { return ssq(global_avg_pool(t)); }, x);
  });
  sweep("concat_channels", [](Rng& rng) {
    T a = rand_point(rng, {2, 3, 3, 3});
    T b = rand_point(rng, {2, 5, 3, 3});
    double ea = gradient_check(
        [&](const T& t) { return ssq(concat_channels<double>({t, b})); }, a);
    double eb = gradient_check(
        [&](const T& t) { return ssq(concat_channels<double>({a, t})); }, b);
    return std::max(ea, eb);
  });
  sweep("linear/input", [](Rng& rng) {
    T w = rand_point(rng, {3, 6});
    T b = rand_point(rng, {3});
    T x = rand_point(rng, {4, 6});
    return gradient_check([&](const T& t) { return ssq(linear(t, w, b)); }, x);
  });
  sweep("linear/weight", [](Rng& rng) {
    T w = rand_point(rng, {3, 6});
    T b = rand_point(rng, {3});
    T x = rand_point(rng, {4, 6});
    return gradient_check([&](const T& t) { return ssq(linear(x, t, b)); }, w);
  });
  sweep("linear/bias", [](Rng& rng) {
    T w = rand_point(rng, {3, 6});
    T b = rand_point(rng, {3});
    T x = rand_point(rng, {4, 6});
    return gradient_check([&](const T& t) { return ssq(linear(x, w, t)); }, b);
  });
  sweep("softmax_cross_entropy", [](Rng& rng) {
    T x = rand_point(rng, {4, 5});
    std::vector<int64_t> labels(4);
    for (auto& l : labels) l = rng.uniform_int(5);
    return gradient_check([&](const T& t) { return softmax_cross_entropy(t, labels); }, x);
  });
  sweep("add", [](Rng& rng) {
    T a = rand_point(rng, {3, 4});
    T b = rand_point(rng, {3, 4});
    double ea = gradient_check([&](const T& t) { return ssq(add(t, b)); }, a);
    double eb = gradient_check([&](const T& t) { return ssq(add(a, t)); }, b);
    return std::max(ea, eb);
  });
  sweep("mul", [](Rng& rng) {
    T a = rand_point(rng, {3, 4});
    T b = rand_point(rng, {3, 4});
    double ea = gradient_check([&](const T& t) { return ssq(mul(t, b)); }, a);
    double eb = gradient_check([&](const T& t) { return ssq(mul(a, t)); }, b);
    return std::max(ea, eb);
  });
  sweep("sum", [](Rng& rng) {
    T x = rand_point(rng, {3, 4});
    return gradient_check([&](const T& t) { return sum(t); }, x);
  });
  return out;
}

// ---- checkpoints ------------------------------------------------------------

namespace {
constexpr char kCkptMagic[4] = {'A', 'S', 'C', 'P'};
constexpr uint32_t kCkptVersion = 1;
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& arrays) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) raise(ErrorKind::kIOFailure, "cannot open for write: " + path.string());
  os.write(kCkptMagic, 4);
  bin::write_u32(os, kCkptVersion);
  bin::write_u32(os, static_cast<uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    if (a.name.size() > 0xffff) raise(ErrorKind::kInvalidArgument, "parameter name too long");
    bin::write_u16(os, static_cast<uint16_t>(a.name.size()));
    os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    bin::write_u8(os, static_cast<uint8_t>(a.dims.size()));
    int64_t n = 1;
    for (int64_t d : a.dims) {
      bin::write_u32(os, static_cast<uint32_t>(d));
      n *= d;
    }
    if (n != static_cast<int64_t>(a.data.size()))
      raise(ErrorKind::kShapeMismatch, "checkpoint array size mismatch for " + a.name);
    bin::write_f32_array(os, a.data.data(), a.data.size());
  }
  if (!os) raise(ErrorKind::kIOFailure, "checkpoint write failed: " + path.string());
}

std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(ErrorKind::kMissingFile, "cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCkptMagic, 4) != 0)
    raise(ErrorKind::kMalformedHeader, "not an ASCP file: " + path.string());
  if (bin::read_u32(is) != kCkptVersion)
    raise(ErrorKind::kMalformedHeader, "unsupported ASCP version");
  const uint32_t count = bin::read_u32(is);
  std::vector<NamedArray> arrays(count);
  for (auto& a : arrays) {
    const uint16_t len = bin::read_u16(is);
    a.name.resize(len);
    is.read(a.name.data(), len);
    const uint8_t ndim = bin::read_u8(is);
    int64_t n = 1;
    for (uint8_t d = 0; d < ndim; ++d) {
      a.dims.push_back(bin::read_u32(is));
      n *= a.dims.back();
    }
    a.data.resize(static_cast<size_t>(n));
    bin::read_f32_array(is, a.data.data(), a.data.size());
    if (!is) raise(ErrorKind::kMalformedHeader, "truncated ASCP file: " + path.string());
  }
  return arrays;
}

// ---- explicit instantiations ------------------------------------------------

template class Tensor<float>;
template class Tensor<double>;

#define ASC_INSTANTIATE_OPS(S)                                                                  \
  template Tensor<S> conv2d<S>(const Tensor<S>&, const Tensor<S>&, int64_t, int64_t);          \
  template Tensor<S> batchnorm2d<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,      \
                                    BnStats<S>&, bool, double, double);                        \
  template Tensor<S> relu<S>(const Tensor<S>&);                                                \
  template Tensor<S> avg_pool_2x2<S>(const Tensor<S>&);                                        \
  template Tensor<S> global_avg_pool<S>(const Tensor<S>&);                                     \
  template Tensor<S> concat_channels<S>(const std::vector<Tensor<S>>&);                        \
  template Tensor<S> linear<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);          \
  template Tensor<S> softmax_cross_entropy<S>(const Tensor<S>&, const std::vector<int64_t>&);  \
  template std::vector<S> log_softmax_rows<S>(const Tensor<S>&);                               \
  template Tensor<S> add<S>(const Tensor<S>&, const Tensor<S>&);                               \
  template Tensor<S> mul<S>(const Tensor<S>&, const Tensor<S>&);                               \
  template Tensor<S> sum<S>(const Tensor<S>&);

ASC_INSTANTIATE_OPS(float)
ASC_INSTANTIATE_OPS(double)
#undef ASC_INSTANTIATE_OPS

}  // namespace asc::ag
