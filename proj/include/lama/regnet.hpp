#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace lama {

/// One zero-padded "same" convolution layer; kernels[out][in] is a k×k
/// matrix with k odd.
struct ConvLayer {
  std::vector<std::vector<Eigen::MatrixXd>> kernels;

  Eigen::Index out_channels() const {
    return static_cast<Eigen::Index>(kernels.size());
  }
  Eigen::Index in_channels() const {
    return kernels.empty() ? 0 : static_cast<Eigen::Index>(kernels[0].size());
  }
  Eigen::Index kernel_size() const {
    return (kernels.empty() || kernels[0].empty()) ? 0
                                                   : kernels[0][0].rows();
  }
  void validate() const;
};

/// Convolutional feature extractor with a C^1 smoothed-ReLU activation
/// between layers (none after the last). Single-channel input.
struct RegularizerNet {
  std::vector<ConvLayer> layers;
  double activation_knee = 0.01;

  Eigen::Index feature_channels() const {
    return layers.empty() ? 0 : layers.back().out_channels();
  }
  void validate() const;
};

/// Extracted features: one row per spatial position (column-major order
/// over the source grid), one column per channel.
struct FeatureStack {
  Eigen::MatrixXd values;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Index positions() const { return values.rows(); }
  Eigen::Index channels() const { return values.cols(); }
};

// Smoothed ReLU: 0 for t <= -knee, (t+knee)^2/(4 knee) on |t| < knee,
// t for t >= knee. C^1 with derivative in [0, 1].
double smoothed_relu(double t, double knee);
double smoothed_relu_deriv(double t, double knee);

/// g(y): chained same-padded convolutions with activation between layers.
FeatureStack feature_forward(const RegularizerNet& net,
                             const Eigen::MatrixXd& y);

/// Applies the transposed Jacobian of feature_forward at y to a feature
/// stack w: transposed convolutions interleaved with diagonal scaling by
/// the activation derivative at the forward pre-activations.
Eigen::MatrixXd jacobian_transpose_apply(const RegularizerNet& net,
                                         const Eigen::MatrixXd& y,
                                         const FeatureStack& w);

/// Sum over spatial positions of the Euclidean norm across channels.
double l21_norm(const FeatureStack& fs);

/// Smoothed L2,1 regularizer value: positions with feature norm <= eps
/// contribute ||g_i||^2/(2 eps), the rest ||g_i|| - eps/2.
double smoothed_value(const RegularizerNet& net, const Eigen::MatrixXd& y,
                      double eps);

/// Exact gradient of smoothed_value: one forward pass, per-position branch
/// weights, one transposed-Jacobian pass.
Eigen::MatrixXd smoothed_gradient(const RegularizerNet& net,
                                  const Eigen::MatrixXd& y, double eps);

/// Empirical Lipschitz estimate sqrt(m)*Lg + M^2/eps for the gradient of
/// the smoothed regularizer on rows×cols inputs: M from power iteration on
/// J^T J at sampled points, Lg from sampled secant quotients of the
/// Jacobian. Deterministic for fixed arguments.
double estimate_lipschitz(const RegularizerNet& net, Eigen::Index rows,
                          Eigen::Index cols, double eps, int probes);

// Presets and weight files.
RegularizerNet identity_net();
RegularizerNet zero_net();
/// Single layer of horizontal/vertical forward-difference kernels; the
/// smoothed L2,1 of its features is a Huberized isotropic total variation.
RegularizerNet tv_net(double knee = 0.01);
/// Seeded Gaussian initialization, rescaled so the estimated Jacobian
/// spectral norm is about 1.
RegularizerNet random_net(std::uint64_t seed, int n_layers = 3,
                          Eigen::Index channels = 16, Eigen::Index ksize = 3,
                          double knee = 0.01);

void save_net(const RegularizerNet& net, const std::string& path);
RegularizerNet load_net(const std::string& path);

}  // namespace lama
