#include "comptll/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "comptll/error.hpp"
#include "kernels.hpp"

namespace comptll::ad {
namespace {

using kernels::ConvGeom;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const char* op,
                  const char* what) {
  if (!t.defined() || t.rank() != rank) {
    throw DomainError(std::string(op) + ": " + what + " must have rank " +
                      std::to_string(rank) +
                      (t.defined() ? ", got shape " + to_string(t.shape()) : ""));
  }
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b,
                        const char* op) {
  if (a.shape() != b.shape()) {
    throw DomainError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                      " vs " + to_string(b.shape()));
  }
}

template <typename T>
bool wants_grad(const NodePtr<T>& n) {
  return n && n->requires_grad;
}

template <typename T>
void add_bias(std::vector<T>& out, const BasicTensor<T>& b, int batch, int channels,
              std::size_t plane) {
  if (!b.defined()) return;
  const auto bd = b.data();
  for (int n = 0; n < batch; ++n) {
    for (int c = 0; c < channels; ++c) {
      T* p = out.data() + (static_cast<std::size_t>(n) * channels + c) * plane;
      const T v = bd[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < plane; ++i) p[i] += v;
    }
  }
}

// db[c] += sum over batch and plane of dy.
template <typename T>
void accumulate_bias_grad(Node<T>& bias, std::span<const T> dy, int batch,
                          int channels, std::size_t plane) {
  auto db = bias.ensure_grad();
  for (int c = 0; c < channels; ++c) {
    double acc = 0.0;
    for (int n = 0; n < batch; ++n) {
      const T* p = dy.data() + (static_cast<std::size_t>(n) * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    }
    db[static_cast<std::size_t>(c)] += static_cast<T>(acc);
  }
}

template <typename T>
void check_bias(const BasicTensor<T>& b, int channels, const char* op) {
  if (b.defined() && (b.rank() != 1 || b.dim(0) != channels)) {
    throw DomainError(std::string(op) + ": bias must have shape [" +
                      std::to_string(channels) + "]");
  }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w,
                      const BasicTensor<T>& b, int stride, int padding) {
  require_rank(x, 4, "conv2d", "input");
  require_rank(w, 4, "conv2d", "weight");
  const int batch = x.dim(0);
  const int out_ch = w.dim(0);
  const int k = w.dim(2);
  if (w.dim(1) != x.dim(1)) {
    throw DomainError("conv2d: weight expects " + std::to_string(w.dim(1)) +
                      " input channels, input has " + std::to_string(x.dim(1)));
  }
  if (w.dim(3) != k || k % 2 == 0) {
    throw DomainError("conv2d: kernel must be square with odd size, got " +
                      to_string(w.shape()));
  }
  if (stride < 1 || padding < 0) throw DomainError("conv2d: bad stride/padding");
  check_bias(b, out_ch, "conv2d");

  ConvGeom g;
  g.channels = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.k = k;
  g.stride = stride;
  g.pad = padding;
  if (g.h + 2 * padding < k || g.w + 2 * padding < k) {
    throw DomainError("conv2d: kernel larger than padded input");
  }
  g.oh = (g.h + 2 * padding - k) / stride + 1;
  g.ow = (g.w + 2 * padding - k) / stride + 1;

  const int kc = g.col_rows();
  const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.oh) * g.ow;
  const int chunk = kernels::rows_per_chunk(g);

  std::vector<T> out(static_cast<std::size_t>(batch) * out_ch * out_plane, T(0));
  std::vector<T> col(static_cast<std::size_t>(kc) * chunk * g.ow);
  const T* xd = x.data().data();
  const T* wd = w.data().data();
  for (int n = 0; n < batch; ++n) {
    const T* xn = xd + static_cast<std::size_t>(n) * g.channels * in_plane;
    T* yn = out.data() + static_cast<std::size_t>(n) * out_ch * out_plane;
    for (int r0 = 0; r0 < g.oh; r0 += chunk) {
      const int r1 = std::min(g.oh, r0 + chunk);
      const int cols = (r1 - r0) * g.ow;
      kernels::im2col_rows(xn, g, r0, r1, col.data());
      kernels::gemm_acc(out_ch, cols, kc, wd, kc, 1, col.data(), cols,
                        yn + static_cast<std::size_t>(r0) * g.ow,
                        static_cast<std::ptrdiff_t>(out_plane));
    }
  }
  add_bias(out, b, batch, out_ch, out_plane);

  return make_result<T>(
      {batch, out_ch, g.oh, g.ow}, std::move(out),
      {x.node_ptr(), w.node_ptr(), b.defined() ? b.node_ptr() : nullptr},
      [g, batch, out_ch, chunk](Node<T>& self) {
        auto& xn_ptr = self.parents[0];
        auto& wn_ptr = self.parents[1];
        auto& bn_ptr = self.parents[2];
        const std::span<const T> dy = self.grad;
        const int kc = g.col_rows();
        const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
        const std::size_t out_plane = static_cast<std::size_t>(g.oh) * g.ow;
        std::vector<T> col(static_cast<std::size_t>(kc) * chunk * g.ow);
        std::vector<double> dw;
        if (wants_grad(wn_ptr)) dw.assign(static_cast<std::size_t>(out_ch) * kc, 0.0);
        const T* wd = wn_ptr->data.data();
        for (int n = 0; n < batch; ++n) {
          const T* dyn = dy.data() + static_cast<std::size_t>(n) * out_ch * out_plane;
          for (int r0 = 0; r0 < g.oh; r0 += chunk) {
            const int r1 = std::min(g.oh, r0 + chunk);
            const int cols = (r1 - r0) * g.ow;
            const T* dy_chunk = dyn + static_cast<std::size_t>(r0) * g.ow;
            if (wants_grad(wn_ptr)) {
              const T* xn = xn_ptr->data.data() + static_cast<std::size_t>(n) * g.channels * in_plane;
              kernels::im2col_rows(xn, g, r0, r1, col.data());
              kernels::gemm_nt_acc(out_ch, kc, cols, dy_chunk,
                                   static_cast<std::ptrdiff_t>(out_plane), col.data(),
                                   cols, dw.data(), kc);
            }
            if (wants_grad(xn_ptr)) {
              std::fill(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(kc) * cols, T(0));
              kernels::gemm_acc(kc, cols, out_ch, wd, 1, kc, dy_chunk,
                                static_cast<std::ptrdiff_t>(out_plane), col.data(), cols);
              T* dx = xn_ptr->ensure_grad().data() + static_cast<std::size_t>(n) * g.channels * in_plane;
              kernels::col2im_rows(col.data(), g, r0, r1, dx);
            }
          }
        }
        if (wants_grad(wn_ptr)) {
          auto gw = wn_ptr->ensure_grad();
          for (std::size_t i = 0; i < dw.size(); ++i) gw[i] += static_cast<T>(dw[i]);
        }
        if (wants_grad(bn_ptr)) accumulate_bias_grad(*bn_ptr, dy, batch, out_ch, out_plane);
      });
}

template <typename T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                const BasicTensor<T>& b, int stride, int padding) {
  require_rank(x, 4, "conv_transpose2d", "input");
  require_rank(w, 4, "conv_transpose2d", "weight");
  const int batch = x.dim(0);
  const int in_ch = x.dim(1);
  const int out_ch = w.dim(1);
  const int k = w.dim(2);
  if (w.dim(0) != in_ch) {
    throw DomainError("conv_transpose2d: weight expects " + std::to_string(w.dim(0)) +
                      " input channels, input has " + std::to_string(in_ch));
  }
  if (w.dim(3) != k || k < 1) throw DomainError("conv_transpose2d: kernel must be square");
  if (stride < 1 || padding < 0) throw DomainError("conv_transpose2d: bad stride/padding");
  check_bias(b, out_ch, "conv_transpose2d");

  // Geometry of the adjoint cross-correlation: output-sized input, x-sized output.
  ConvGeom g;
  g.channels = out_ch;
  g.k = k;
  g.stride = stride;
  g.pad = padding;
  g.oh = x.dim(2);
  g.ow = x.dim(3);
  g.h = (g.oh - 1) * stride - 2 * padding + k;
  g.w = (g.ow - 1) * stride - 2 * padding + k;
  if (g.h < 1 || g.w < 1) throw DomainError("conv_transpose2d: empty output");

  const int kc = g.col_rows();
  const std::size_t in_plane = static_cast<std::size_t>(g.oh) * g.ow;   // x plane
  const std::size_t out_plane = static_cast<std::size_t>(g.h) * g.w;    // result plane
  const int chunk = kernels::rows_per_chunk(g);

  std::vector<T> out(static_cast<std::size_t>(batch) * out_ch * out_plane, T(0));
  std::vector<T> col(static_cast<std::size_t>(kc) * chunk * g.ow);
  const T* xd = x.data().data();
  const T* wd = w.data().data();
  for (int n = 0; n < batch; ++n) {
    const T* xn = xd + static_cast<std::size_t>(n) * in_ch * in_plane;
    T* yn = out.data() + static_cast<std::size_t>(n) * out_ch * out_plane;
    for (int r0 = 0; r0 < g.oh; r0 += chunk) {
      const int r1 = std::min(g.oh, r0 + chunk);
      const int cols = (r1 - r0) * g.ow;
      std::fill(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(kc) * cols, T(0));
      kernels::gemm_acc(kc, cols, in_ch, wd, 1, kc,
                        xn + static_cast<std::size_t>(r0) * g.ow,
                        static_cast<std::ptrdiff_t>(in_plane), col.data(), cols);
      kernels::col2im_rows(col.data(), g, r0, r1, yn);
    }
  }
  add_bias(out, b, batch, out_ch, out_plane);

  return make_result<T>(
      {batch, out_ch, g.h, g.w}, std::move(out),
      {x.node_ptr(), w.node_ptr(), b.defined() ? b.node_ptr() : nullptr},
      [g, batch, in_ch, out_ch, chunk](Node<T>& self) {
        auto& xn_ptr = self.parents[0];
        auto& wn_ptr = self.parents[1];
        auto& bn_ptr = self.parents[2];
        const std::span<const T> dy = self.grad;
        const int kc = g.col_rows();
        const std::size_t in_plane = static_cast<std::size_t>(g.oh) * g.ow;
        const std::size_t out_plane = static_cast<std::size_t>(g.h) * g.w;
        std::vector<T> col(static_cast<std::size_t>(kc) * chunk * g.ow);
        std::vector<double> dw;
        if (wants_grad(wn_ptr)) dw.assign(static_cast<std::size_t>(in_ch) * kc, 0.0);
        const T* wd = wn_ptr->data.data();
        for (int n = 0; n < batch; ++n) {
          const T* dyn = dy.data() + static_cast<std::size_t>(n) * out_ch * out_plane;
          for (int r0 = 0; r0 < g.oh; r0 += chunk) {
            const int r1 = std::min(g.oh, r0 + chunk);
            const int cols = (r1 - r0) * g.ow;
            kernels::im2col_rows(dyn, g, r0, r1, col.data());
            if (wants_grad(xn_ptr)) {
              T* dx = xn_ptr->ensure_grad().data() + static_cast<std::size_t>(n) * in_ch * in_plane;
              kernels::gemm_acc(in_ch, cols, kc, wd, kc, 1, col.data(), cols,
                                dx + static_cast<std::size_t>(r0) * g.ow,
                                static_cast<std::ptrdiff_t>(in_plane));
            }
            if (wants_grad(wn_ptr)) {
              const T* xn = xn_ptr->data.data() + static_cast<std::size_t>(n) * in_ch * in_plane;
              kernels::gemm_nt_acc(in_ch, kc, cols, xn + static_cast<std::size_t>(r0) * g.ow,
                                   static_cast<std::ptrdiff_t>(in_plane), col.data(), cols,
                                   dw.data(), kc);
            }
          }
        }
        if (wants_grad(wn_ptr)) {
          auto gw = wn_ptr->ensure_grad();
          for (std::size_t i = 0; i < dw.size(); ++i) gw[i] += static_cast<T>(dw[i]);
        }
        if (wants_grad(bn_ptr)) accumulate_bias_grad(*bn_ptr, dy, batch, out_ch, out_plane);
      });
}

template <typename T>
BasicTensor<T> avg_pool2(const BasicTensor<T>& x) {
  require_rank(x, 4, "avg_pool2", "input");
  const int nc = x.dim(0) * x.dim(1);
  const int h = x.dim(2), w = x.dim(3);
  const int oh = h / 2, ow = w / 2;
  if (oh < 1 || ow < 1) throw DomainError("avg_pool2: input smaller than 2x2");
  std::vector<T> out(static_cast<std::size_t>(nc) * oh * ow);
  const T* xd = x.data().data();
  for (int p = 0; p < nc; ++p) {
    const T* src = xd + static_cast<std::size_t>(p) * h * w;
    T* dst = out.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int i = 0; i < oh; ++i) {
      const T* r0 = src + static_cast<std::size_t>(2 * i) * w;
      const T* r1 = r0 + w;
      for (int j = 0; j < ow; ++j) {
        dst[i * ow + j] = T(0.25) * ((r0[2 * j] + r0[2 * j + 1]) + (r1[2 * j] + r1[2 * j + 1]));
      }
    }
  }
  return make_result<T>({x.dim(0), x.dim(1), oh, ow}, std::move(out), {x.node_ptr()},
                        [nc, h, w, oh, ow](Node<T>& self) {
                          T* dx = self.parents[0]->ensure_grad().data();
                          const T* dy = self.grad.data();
                          for (int p = 0; p < nc; ++p) {
                            T* d = dx + static_cast<std::size_t>(p) * h * w;
                            const T* g = dy + static_cast<std::size_t>(p) * oh * ow;
                            for (int i = 0; i < oh; ++i) {
                              for (int j = 0; j < ow; ++j) {
                                const T v = T(0.25) * g[i * ow + j];
                                d[(2 * i) * w + 2 * j] += v;
                                d[(2 * i) * w + 2 * j + 1] += v;
                                d[(2 * i + 1) * w + 2 * j] += v;
                                d[(2 * i + 1) * w + 2 * j + 1] += v;
                              }
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> max_pool2(const BasicTensor<T>& x) {
  require_rank(x, 4, "max_pool2", "input");
  const int nc = x.dim(0) * x.dim(1);
  const int h = x.dim(2), w = x.dim(3);
  const int oh = h / 2, ow = w / 2;
  if (oh < 1 || ow < 1) throw DomainError("max_pool2: input smaller than 2x2");
  std::vector<T> out(static_cast<std::size_t>(nc) * oh * ow);
  std::vector<std::uint32_t> argmax(out.size());
  const T* xd = x.data().data();
  for (int p = 0; p < nc; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * h * w;
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        std::size_t best = base + static_cast<std::size_t>(2 * i) * w + 2 * j;
        for (std::size_t cand : {best + 1, best + w, best + w + 1}) {
          if (xd[cand] > xd[best]) best = cand;
        }
        const std::size_t o = (static_cast<std::size_t>(p) * oh + i) * ow + j;
        out[o] = xd[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return make_result<T>({x.dim(0), x.dim(1), oh, ow}, std::move(out), {x.node_ptr()},
                        [argmax = std::move(argmax)](Node<T>& self) {
                          auto dx = self.parents[0]->ensure_grad();
                          for (std::size_t o = 0; o < argmax.size(); ++o) {
                            dx[argmax[o]] += self.grad[o];
                          }
                        });
}

template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, BasicTensor<T>& running_mean,
                          BasicTensor<T>& running_var, Mode mode, double momentum,
                          double eps) {
  require_rank(x, 4, "batch_norm", "input");
  const int batch = x.dim(0), channels = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  const BasicTensor<T>* per_channel[] = {&gamma, &beta, &running_mean, &running_var};
  for (const BasicTensor<T>* p : per_channel) {
    if (!p->defined() || p->rank() != 1 || p->dim(0) != channels) {
      throw DomainError("batch_norm: per-channel parameters must have shape [" +
                        std::to_string(channels) + "]");
    }
  }
  const std::size_t count = static_cast<std::size_t>(batch) * plane;
  if (mode == Mode::kTrain && count < 2) {
    throw DomainError("batch_norm: train mode needs more than one value per channel");
  }

  const T* xd = x.data().data();
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<double> inv_std(static_cast<std::size_t>(channels));
  auto rm = running_mean.data();
  auto rv = running_var.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();

  for (int c = 0; c < channels; ++c) {
    double mu, var;
    if (mode == Mode::kTrain) {
      double s = 0.0;
      for (int n = 0; n < batch; ++n) {
        const T* p = xd + (static_cast<std::size_t>(n) * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (int n = 0; n < batch; ++n) {
        const T* p = xd + (static_cast<std::size_t>(n) * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mu;
          ss += d * d;
        }
      }
      var = ss / static_cast<double>(count);
      const double unbiased = ss / static_cast<double>(count - 1);
      rm[c] = static_cast<T>((1.0 - momentum) * rm[c] + momentum * mu);
      rv[c] = static_cast<T>((1.0 - momentum) * rv[c] + momentum * unbiased);
    } else {
      mu = rm[c];
      var = rv[c];
    }
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(c)] = is;
    for (int n = 0; n < batch; ++n) {
      const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T xh = static_cast<T>((xd[off + i] - mu) * is);
        xhat[off + i] = xh;
        out[off + i] = gd[c] * xh + bd[c];
      }
    }
  }

  return make_result<T>(
      x.shape(), std::move(out), {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), batch, channels, plane,
       count, mode](Node<T>& self) {
        auto& xn = self.parents[0];
        auto& gn = self.parents[1];
        auto& bn = self.parents[2];
        const T* dy = self.grad.data();
        for (int c = 0; c < channels; ++c) {
          double sdy = 0.0, sdyx = 0.0;
          for (int n = 0; n < batch; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sdy += dy[off + i];
              sdyx += static_cast<double>(dy[off + i]) * xhat[off + i];
            }
          }
          if (wants_grad(gn)) gn->ensure_grad()[static_cast<std::size_t>(c)] += static_cast<T>(sdyx);
          if (wants_grad(bn)) bn->ensure_grad()[static_cast<std::size_t>(c)] += static_cast<T>(sdy);
          if (!wants_grad(xn)) continue;
          T* dx = xn->ensure_grad().data();
          const double g = gn->data[static_cast<std::size_t>(c)];
          const double k = g * inv_std[static_cast<std::size_t>(c)];
          const double mdy = sdy / static_cast<double>(count);
          const double mdyx = sdyx / static_cast<double>(count);
          for (int n = 0; n < batch; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              if (mode == Mode::kTrain) {
                dx[off + i] += static_cast<T>(k * (dy[off + i] - mdy - xhat[off + i] * mdyx));
              } else {
                dx[off + i] += static_cast<T>(k * dy[off + i]);
              }
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> spatial_dropout(const BasicTensor<T>& x, double rate,
                               std::uint64_t seed, Mode mode) {
  require_rank(x, 4, "spatial_dropout", "input");
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw DomainError("spatial_dropout: rate must be in [0,1), got " + std::to_string(rate));
  }
  if (mode == Mode::kEval || rate == 0.0) return x;
  const int maps = x.dim(0) * x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  std::mt19937_64 rng(seed);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(static_cast<std::size_t>(maps));
  for (auto& m : mask) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m = u < rate ? T(0) : keep_scale;
  }
  std::vector<T> out(x.numel());
  const T* xd = x.data().data();
  for (int p = 0; p < maps; ++p) {
    const T m = mask[static_cast<std::size_t>(p)];
    for (std::size_t i = 0; i < plane; ++i) out[p * plane + i] = xd[p * plane + i] * m;
  }
  return make_result<T>(x.shape(), std::move(out), {x.node_ptr()},
                        [mask = std::move(mask), plane](Node<T>& self) {
                          auto dx = self.parents[0]->ensure_grad();
                          for (std::size_t p = 0; p < mask.size(); ++p) {
                            for (std::size_t i = 0; i < plane; ++i) {
                              dx[p * plane + i] += self.grad[p * plane + i] * mask[p];
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] > T(0) ? xd[i] : T(0);
  return make_result<T>(x.shape(), std::move(out), {x.node_ptr()}, [](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto dx = xn.ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (xn.data[i] > T(0)) dx[i] += self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = xd[i];
    if (v >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T(1) + e);
    }
    // Keep outputs strictly inside (0,1) once exp() saturates.
    out[i] = std::clamp(out[i], std::numeric_limits<T>::min(),
                        std::nextafter(T(1), T(0)));
  }
  return make_result<T>(x.shape(), std::move(out), {x.node_ptr()}, [](Node<T>& self) {
    auto dx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const T y = self.data[i];
      dx[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
BasicTensor<T> concat(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a, 4, "concat", "first input");
  require_rank(b, 4, "concat", "second input");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DomainError("concat: non-channel dimensions differ: " + to_string(a.shape()) +
                      " vs " + to_string(b.shape()));
  }
  const int batch = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t plane = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
  const std::size_t na = ca * plane, nb = cb * plane;
  std::vector<T> out(static_cast<std::size_t>(batch) * (na + nb));
  for (int n = 0; n < batch; ++n) {
    std::copy_n(a.data().data() + n * na, na, out.data() + n * (na + nb));
    std::copy_n(b.data().data() + n * nb, nb, out.data() + n * (na + nb) + na);
  }
  return make_result<T>({batch, ca + cb, a.dim(2), a.dim(3)}, std::move(out),
                        {a.node_ptr(), b.node_ptr()}, [batch, na, nb](Node<T>& self) {
                          for (int side = 0; side < 2; ++side) {
                            auto& p = self.parents[static_cast<std::size_t>(side)];
                            if (!wants_grad(p)) continue;
                            auto d = p->ensure_grad();
                            const std::size_t len = side == 0 ? na : nb;
                            const std::size_t skip = side == 0 ? 0 : na;
                            for (int n = 0; n < batch; ++n) {
                              const T* g = self.grad.data() + n * (na + nb) + skip;
                              T* dst = d.data() + n * len;
                              for (std::size_t i = 0; i < len; ++i) dst[i] += g[i];
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                        [](Node<T>& self) {
                          for (auto& p : self.parents) {
                            if (!wants_grad(p)) continue;
                            auto d = p->ensure_grad();
                            for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
                          }
                        });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                        [](Node<T>& self) {
                          auto& pa = self.parents[0];
                          auto& pb = self.parents[1];
                          if (wants_grad(pa)) {
                            auto d = pa->ensure_grad();
                            for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * pb->data[i];
                          }
                          if (wants_grad(pb)) {
                            auto d = pb->ensure_grad();
                            for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * pa->data[i];
                          }
                        });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  return make_result<T>(a.shape(), std::move(out), {a.node_ptr()}, [s](Node<T>& self) {
    auto d = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * s;
  });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a) {
  double acc = 0.0;
  for (T v : a.data()) acc += v;
  return make_result<T>({}, {static_cast<T>(acc)}, {a.node_ptr()}, [](Node<T>& self) {
    auto d = self.parents[0]->ensure_grad();
    for (auto& v : d) v += self.grad[0];
  });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& a) {
  if (a.numel() == 0) throw DomainError("mean of an empty tensor");
  const double n = static_cast<double>(a.numel());
  double acc = 0.0;
  for (T v : a.data()) acc += v;
  return make_result<T>({}, {static_cast<T>(acc / n)}, {a.node_ptr()}, [n](Node<T>& self) {
    auto d = self.parents[0]->ensure_grad();
    const T g = static_cast<T>(self.grad[0] / n);
    for (auto& v : d) v += g;
  });
}

template <typename T>
BasicTensor<T> binary_cross_entropy(const BasicTensor<T>& pred,
                                    const BasicTensor<T>& target, double eps) {
  require_same_shape(pred, target, "binary_cross_entropy");
  if (pred.numel() == 0) throw DomainError("binary_cross_entropy: empty input");
  const auto p = pred.data();
  const auto t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(static_cast<double>(p[i]), eps, 1.0 - eps);
    acc -= t[i] * std::log(pc) + (1.0 - t[i]) * std::log(1.0 - pc);
  }
  const double n = static_cast<double>(p.size());
  return make_result<T>({}, {static_cast<T>(acc / n)}, {pred.node_ptr()},
                        [target = target.node_ptr(), eps, n](Node<T>& self) {
                          auto& pn = *self.parents[0];
                          auto d = pn.ensure_grad();
                          const double g = self.grad[0] / n;
                          for (std::size_t i = 0; i < d.size(); ++i) {
                            const double pv = pn.data[i];
                            if (pv < eps || pv > 1.0 - eps) continue;
                            const double tv = target->data[i];
                            d[i] += static_cast<T>(g * ((1.0 - tv) / (1.0 - pv) - tv / pv));
                          }
                        });
}

template <typename T>
BasicTensor<T> dice_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  require_same_shape(pred, target, "dice_loss");
  if (pred.rank() < 1 || pred.numel() == 0) throw DomainError("dice_loss: empty input");
  const int batch = pred.dim(0);
  const std::size_t per = pred.numel() / static_cast<std::size_t>(batch);
  const auto p = pred.data();
  const auto t = target.data();
  std::vector<double> num(static_cast<std::size_t>(batch)), den(static_cast<std::size_t>(batch));
  double loss = 0.0;
  for (int n = 0; n < batch; ++n) {
    double spt = 0.0, sp = 0.0, st = 0.0;
    for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
      spt += static_cast<double>(p[i]) * t[i];
      sp += p[i];
      st += t[i];
    }
    num[static_cast<std::size_t>(n)] = 2.0 * spt + 1.0;
    den[static_cast<std::size_t>(n)] = sp + st + 1.0;
    loss += 1.0 - num[static_cast<std::size_t>(n)] / den[static_cast<std::size_t>(n)];
  }
  return make_result<T>(
      {}, {static_cast<T>(loss / batch)}, {pred.node_ptr()},
      [target = target.node_ptr(), num = std::move(num), den = std::move(den), batch,
       per](Node<T>& self) {
        auto d = self.parents[0]->ensure_grad();
        const double g = self.grad[0] / batch;
        for (int n = 0; n < batch; ++n) {
          const double nu = num[static_cast<std::size_t>(n)];
          const double de = den[static_cast<std::size_t>(n)];
          for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
            const double dd = (2.0 * target->data[i] * de - nu) / (de * de);
            d[i] += static_cast<T>(-g * dd);
          }
        }
      });
}

#define COMPTLL_INSTANTIATE_OPS(T)                                                    \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                 const BasicTensor<T>&, int, int);                    \
  template BasicTensor<T> conv_transpose2d(const BasicTensor<T>&,                     \
                                           const BasicTensor<T>&,                     \
                                           const BasicTensor<T>&, int, int);          \
  template BasicTensor<T> avg_pool2(const BasicTensor<T>&);                           \
  template BasicTensor<T> max_pool2(const BasicTensor<T>&);                           \
  template BasicTensor<T> batch_norm(const BasicTensor<T>&, const BasicTensor<T>&,    \
                                     const BasicTensor<T>&, BasicTensor<T>&,          \
                                     BasicTensor<T>&, Mode, double, double);          \
  template BasicTensor<T> spatial_dropout(const BasicTensor<T>&, double,              \
                                          std::uint64_t, Mode);                       \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                             \
  template BasicTensor<T> concat(const BasicTensor<T>&, const BasicTensor<T>&);       \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);          \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);          \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                            \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                 \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                \
  template BasicTensor<T> binary_cross_entropy(const BasicTensor<T>&,                 \
                                               const BasicTensor<T>&, double);        \
  template BasicTensor<T> dice_loss(const BasicTensor<T>&, const BasicTensor<T>&);

COMPTLL_INSTANTIATE_OPS(float)
COMPTLL_INSTANTIATE_OPS(double)

}  // namespace comptll::ad
