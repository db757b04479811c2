#include "norml/kernels.hpp"

#include <cmath>

namespace norml::kernels {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMajor>;
using Weights = Eigen::Map<RowMajor>;
using ConstBias = Eigen::Map<const Vector>;
using Bias = Eigen::Map<Vector>;

struct Layer {
  int in;
  int out;
  std::size_t w;
  std::size_t b;
};

Layer layer(const MlpConfig& cfg, int l) {
  const auto i = static_cast<std::size_t>(l);
  return {cfg.layer_sizes[i], cfg.layer_sizes[i + 1], cfg.weight_offset(l), cfg.bias_offset(l)};
}

ConstWeights weights(std::span<const double> p, const Layer& L) {
  return ConstWeights(p.data() + L.w, L.out, L.in);
}

ConstBias bias(std::span<const double> p, const Layer& L) { return ConstBias(p.data() + L.b, L.out); }

// Derivative of the hidden activation expressed through its output.
Matrix activation_slope(Activation act, const Matrix& h) {
  if (act == Activation::Tanh) return (1.0 - h.array().square()).matrix();
  return (h.array() > 0.0).cast<double>().matrix();
}

}  // namespace

void forward(const MlpConfig& cfg, std::span<const double> params,
             const Eigen::Ref<const Matrix>& input, MlpTrace& trace) {
  if (input.rows() != cfg.input_dim()) throw ContractError("kernels::forward: input dimension mismatch");
  if (params.size() != cfg.param_count()) throw ContractError("kernels::forward: parameter length mismatch");
  const int layers = cfg.num_layers();
  trace.h.resize(static_cast<std::size_t>(layers) + 1);
  trace.h[0] = input;
  for (int l = 0; l < layers; ++l) {
    const Layer L = layer(cfg, l);
    Matrix& out = trace.h[static_cast<std::size_t>(l) + 1];
    out.noalias() = weights(params, L) * trace.h[static_cast<std::size_t>(l)];
    out.colwise() += bias(params, L);
    if (l + 1 < layers) {
      if (cfg.activation == Activation::Tanh) {
        out = out.unaryExpr([](double z) { return std::tanh(z); });
      } else {
        out = out.cwiseMax(0.0);
      }
    }
  }
}

void backward(const MlpConfig& cfg, std::span<const double> params, const MlpTrace& trace,
              const Matrix& d_out, std::span<double> grad) {
  if (grad.size() != cfg.param_count()) throw ContractError("kernels::backward: gradient length mismatch");
  Matrix delta = d_out;
  for (int l = cfg.num_layers() - 1; l >= 0; --l) {
    const Layer L = layer(cfg, l);
    const Matrix& h_in = trace.h[static_cast<std::size_t>(l)];
    Weights(grad.data() + L.w, L.out, L.in).noalias() += delta * h_in.transpose();
    Bias(grad.data() + L.b, L.out) += delta.rowwise().sum();
    if (l > 0) {
      Matrix dh = weights(params, L).transpose() * delta;
      delta = activation_slope(cfg.activation, h_in).cwiseProduct(dh);
    }
  }
}

void rop_forward(const MlpConfig& cfg, std::span<const double> params,
                 std::span<const double> dir, const MlpTrace& trace, std::vector<Matrix>& r_h) {
  if (dir.size() != params.size()) throw ContractError("kernels::rop_forward: direction length mismatch");
  const int layers = cfg.num_layers();
  r_h.resize(static_cast<std::size_t>(layers) + 1);
  const auto batch = trace.h[0].cols();
  r_h[0] = Matrix::Zero(cfg.input_dim(), batch);
  for (int l = 0; l < layers; ++l) {
    const Layer L = layer(cfg, l);
    const auto li = static_cast<std::size_t>(l);
    Matrix rz = weights(dir, L) * trace.h[li];
    if (l > 0) rz.noalias() += weights(params, L) * r_h[li];
    rz.colwise() += bias(dir, L);
    if (l + 1 < layers) {
      r_h[li + 1] = activation_slope(cfg.activation, trace.h[li + 1]).cwiseProduct(rz);
    } else {
      r_h[li + 1] = std::move(rz);
    }
  }
}

void rop_backward(const MlpConfig& cfg, std::span<const double> params,
                  std::span<const double> dir, const MlpTrace& trace,
                  const std::vector<Matrix>& r_h, const Matrix& d_out, const Matrix& r_d_out,
                  std::span<double> grad, std::span<double> r_grad) {
  if (r_grad.size() != cfg.param_count()) throw ContractError("kernels::rop_backward: length mismatch");
  Matrix delta = d_out;
  Matrix r_delta = r_d_out;
  for (int l = cfg.num_layers() - 1; l >= 0; --l) {
    const Layer L = layer(cfg, l);
    const auto li = static_cast<std::size_t>(l);
    const Matrix& h_in = trace.h[li];
    if (!grad.empty()) {
      Weights(grad.data() + L.w, L.out, L.in).noalias() += delta * h_in.transpose();
      Bias(grad.data() + L.b, L.out) += delta.rowwise().sum();
    }
    Weights rw(r_grad.data() + L.w, L.out, L.in);
    rw.noalias() += r_delta * h_in.transpose();
    if (l > 0) rw.noalias() += delta * r_h[li].transpose();
    Bias(r_grad.data() + L.b, L.out) += r_delta.rowwise().sum();
    if (l > 0) {
      const auto W = weights(params, L);
      Matrix dh = W.transpose() * delta;
      Matrix r_dh = weights(dir, L).transpose() * delta;
      r_dh.noalias() += W.transpose() * r_delta;
      const Matrix slope = activation_slope(cfg.activation, h_in);
      Matrix next_r = slope.cwiseProduct(r_dh);
      if (cfg.activation == Activation::Tanh) {
        // d(1 - h^2) = -2 h dh
        next_r.array() -= 2.0 * h_in.array() * r_h[li].array() * dh.array();
      }
      delta = slope.cwiseProduct(dh);
      r_delta = std::move(next_r);
    }
  }
}

void gaussian_log_prob(const Matrix& mean, std::span<const double> log_std,
                       const Eigen::Ref<const Matrix>& actions, Vector& out) {
  if (mean.rows() != actions.rows() || mean.cols() != actions.cols() ||
      static_cast<std::size_t>(mean.rows()) != log_std.size()) {
    throw ContractError("gaussian_log_prob: shape mismatch");
  }
  out.resize(mean.cols());
  for (Eigen::Index j = 0; j < mean.cols(); ++j) {
    double total = 0.0;
    for (Eigen::Index d = 0; d < mean.rows(); ++d) {
      const double sigma = log_std[static_cast<std::size_t>(d)];
      const double diff = actions(d, j) - mean(d, j);
      const double term = -((diff * diff) / (2.0 * std::exp(2.0 * sigma))) - sigma - kHalfLog2Pi;
      total = d == 0 ? term : total + term;
    }
    out(j) = total;
  }
}

}  // namespace norml::kernels
