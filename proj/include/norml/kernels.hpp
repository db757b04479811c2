#pragma once

// Batched network kernels. A batch is a column-major matrix with one sample
// per column. The R-op pair (rop_forward / rop_backward) computes exact
// Hessian-vector products of sums of per-sample losses by propagating
// directional derivatives through the forward and backward passes.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "norml/netcore.hpp"

namespace norml::kernels {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// h[0] is the input batch, h[l] the post-activation output of layer l, and
// h.back() the (linear) network output.
struct MlpTrace {
  std::vector<Matrix> h;
};

void forward(const MlpConfig& cfg, std::span<const double> params,
             const Eigen::Ref<const Matrix>& input, MlpTrace& trace);

// Accumulates sum_j <d_out(:, j), d out(:, j) / d params> into `grad`.
void backward(const MlpConfig& cfg, std::span<const double> params, const MlpTrace& trace,
              const Matrix& d_out, std::span<double> grad);

// r_h[l] = directional derivative of trace.h[l] along parameter direction `dir`.
void rop_forward(const MlpConfig& cfg, std::span<const double> params,
                 std::span<const double> dir, const MlpTrace& trace, std::vector<Matrix>& r_h);

// For a loss whose output adjoint is d_out with directional derivative
// r_d_out, accumulates the gradient into `grad` (may be empty) and its
// directional derivative, the Hessian-vector product, into `r_grad`.
void rop_backward(const MlpConfig& cfg, std::span<const double> params,
                  std::span<const double> dir, const MlpTrace& trace,
                  const std::vector<Matrix>& r_h, const Matrix& d_out, const Matrix& r_d_out,
                  std::span<double> grad, std::span<double> r_grad);

// Per-column diagonal-Gaussian log density of `actions` given means.
void gaussian_log_prob(const Matrix& mean, std::span<const double> log_std,
                       const Eigen::Ref<const Matrix>& actions, Vector& out);

}  // namespace norml::kernels
