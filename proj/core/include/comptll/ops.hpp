#ifndef COMPTLL_OPS_HPP_
#define COMPTLL_OPS_HPP_

// Differentiable layers over NCHW tensors. Each op documents its forward
// contract; gradients are the exact adjoints and are checked against finite
// differences in tests/ops_gradcheck_test.cpp.

#include <cstdint>

#include "comptll/tensor.hpp"

namespace comptll::ad {

// Cross-correlation. x: [N,C,H,W], w: [O,C,k,k] with odd k, b: [O] or
// undefined. Output side is floor((in + 2*padding - k) / stride) + 1.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w,
                      const BasicTensor<T>& b, int stride = 1, int padding = 0);

// Adjoint of conv2d with respect to its input. x: [N,C,H,W], w: [C,O,k,k],
// b: [O] or undefined. Output side is (in - 1) * stride - 2 * padding + k,
// so k == stride with padding 0 (or k == 2*stride, padding stride/2) doubles
// the side exactly at stride 2.
template <typename T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                const BasicTensor<T>& b, int stride,
                                int padding = 0);

// 2x2 windows, stride 2. Odd trailing rows/columns are dropped.
template <typename T>
BasicTensor<T> avg_pool2(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> max_pool2(const BasicTensor<T>& x);

// Per-channel normalization of [N,C,H,W]. Train mode normalizes with the
// batch statistics (biased variance) and folds them into the running stats
// with `momentum` (unbiased variance); eval mode uses the running stats.
template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, BasicTensor<T>& running_mean,
                          BasicTensor<T>& running_var, Mode mode,
                          double momentum = 0.1, double eps = 1e-5);

// Zeroes whole [n, c] feature maps with probability `rate` and scales the
// survivors by 1/(1-rate). Identity in eval mode or at rate 0.
template <typename T>
BasicTensor<T> spatial_dropout(const BasicTensor<T>& x, double rate,
                               std::uint64_t seed, Mode mode);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);  // output clamped into (0,1)

// Concatenates [N,Ca,H,W] and [N,Cb,H,W] along the channel axis.
template <typename T>
BasicTensor<T> concat(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s);
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a);
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& a);

// Mean binary cross-entropy of probabilities against a {0,1} target.
// Probabilities are clipped to [eps, 1-eps]; no gradient flows to the target.
template <typename T>
BasicTensor<T> binary_cross_entropy(const BasicTensor<T>& pred,
                                    const BasicTensor<T>& target,
                                    double eps = 1e-7);

// Mean over the batch of 1 - (2*sum(p*t) + 1) / (sum(p) + sum(t) + 1).
template <typename T>
BasicTensor<T> dice_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

}  // namespace comptll::ad

#endif  // COMPTLL_OPS_HPP_
