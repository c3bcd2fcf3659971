#ifndef PROJCGAN_SPECTRAL_HPP
#define PROJCGAN_SPECTRAL_HPP

#include "projcgan/tape.hpp"
#include "projcgan/tensor.hpp"

namespace projcgan {

// sigma estimates are floored here before dividing so a zero weight matrix
// cannot produce inf
inline constexpr double kSigmaFloor = 1e-12;

/// One power-iteration step on a [rows,cols] matrix: v = normalize(M^T u),
/// u = normalize(M v), both in place on `u` / returned `v`. This is the
/// cheap per-update estimator used during training.
template <typename T>
Tensor<T> sn_power_step(const Tensor<T>& m2d, Tensor<T>& u);

/// Like sn_power_step but leaves `u` untouched (eval passes).
template <typename T>
Tensor<T> sn_right_vector(const Tensor<T>& m2d, const Tensor<T>& u);

/// sigma_hat = u^T M v as a plain number, ignoring gradients.
template <typename T>
T sn_sigma_value(const Tensor<T>& m2d, const Tensor<T>& u, const Tensor<T>& v);

/// sigma_hat as a tape node so W/sigma backpropagates through sigma. u and v
/// enter as constants; the node value equals sn_sigma_value up to rounding.
template <typename T>
NodeId sn_sigma_node(Tape<T>& tape, NodeId w2d, const Tensor<T>& u, const Tensor<T>& v);

/// Converged top-singular-value estimate by block power iteration on M^T M
/// with Rayleigh-Ritz extraction. `max_iters` counts block iterations; the
/// whole block converges like (sigma_{b+1}/sigma_1)^iters, which is what lets
/// matrices with near-ties in the leading values still settle quickly.
double spectral_norm_converged(const TensorD& m2d, int block = 8, int max_iters = 50);

}  // namespace projcgan

#endif
