#include "lama/regnet.hpp"

#include "lama/container_io.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace lama {

namespace {

using ChannelStack = std::vector<Eigen::MatrixXd>;

/// Cross-correlation with zero padding, implemented as shifted block adds
/// so the hot loop stays inside Eigen.
ChannelStack conv_forward(const ConvLayer& layer, const ChannelStack& in) {
  const Eigen::Index rows = in[0].rows();
  const Eigen::Index cols = in[0].cols();
  const Eigen::Index k = layer.kernel_size();
  const Eigen::Index c = (k - 1) / 2;
  ChannelStack out(static_cast<std::size_t>(layer.out_channels()),
                   Eigen::MatrixXd::Zero(rows, cols));
  for (std::size_t o = 0; o < layer.kernels.size(); ++o) {
    for (std::size_t ic = 0; ic < layer.kernels[o].size(); ++ic) {
      const Eigen::MatrixXd& K = layer.kernels[o][ic];
      const Eigen::MatrixXd& y = in[ic];
      for (Eigen::Index u = 0; u < k; ++u) {
        for (Eigen::Index v = 0; v < k; ++v) {
          const double w = K(u, v);
          if (w == 0.0) continue;
          const Eigen::Index di = u - c;
          const Eigen::Index dj = v - c;
          const Eigen::Index i0 = std::max<Eigen::Index>(0, -di);
          const Eigen::Index i1 = std::min(rows, rows - di);
          const Eigen::Index j0 = std::max<Eigen::Index>(0, -dj);
          const Eigen::Index j1 = std::min(cols, cols - dj);
          if (i1 <= i0 || j1 <= j0) continue;
          out[o].block(i0, j0, i1 - i0, j1 - j0) +=
              w * y.block(i0 + di, j0 + dj, i1 - i0, j1 - j0);
        }
      }
    }
  }
  return out;
}

/// Adjoint of conv_forward: same kernels, shifts negated, channel roles
/// swapped. out[in](p,q) += K[o][in](u,v) * w[o](p+c-u, q+c-v).
ChannelStack conv_transpose(const ConvLayer& layer, const ChannelStack& w) {
  const Eigen::Index rows = w[0].rows();
  const Eigen::Index cols = w[0].cols();
  const Eigen::Index k = layer.kernel_size();
  const Eigen::Index c = (k - 1) / 2;
  ChannelStack out(static_cast<std::size_t>(layer.in_channels()),
                   Eigen::MatrixXd::Zero(rows, cols));
  for (std::size_t o = 0; o < layer.kernels.size(); ++o) {
    for (std::size_t ic = 0; ic < layer.kernels[o].size(); ++ic) {
      const Eigen::MatrixXd& K = layer.kernels[o][ic];
      for (Eigen::Index u = 0; u < k; ++u) {
        for (Eigen::Index v = 0; v < k; ++v) {
          const double weight = K(u, v);
          if (weight == 0.0) continue;
          const Eigen::Index di = c - u;
          const Eigen::Index dj = c - v;
          const Eigen::Index i0 = std::max<Eigen::Index>(0, -di);
          const Eigen::Index i1 = std::min(rows, rows - di);
          const Eigen::Index j0 = std::max<Eigen::Index>(0, -dj);
          const Eigen::Index j1 = std::min(cols, cols - dj);
          if (i1 <= i0 || j1 <= j0) continue;
          out[ic].block(i0, j0, i1 - i0, j1 - j0) +=
              weight * w[o].block(i0 + di, j0 + dj, i1 - i0, j1 - j0);
        }
      }
    }
  }
  return out;
}

/// Pre-activation outputs of every layer; pre.back() is the feature map.
struct ForwardTrace {
  std::vector<ChannelStack> pre;
};

ForwardTrace run_forward(const RegularizerNet& net, const Eigen::MatrixXd& y) {
  ForwardTrace trace;
  trace.pre.reserve(net.layers.size());
  ChannelStack a{y};
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    trace.pre.push_back(conv_forward(net.layers[l], a));
    if (l + 1 < net.layers.size()) {
      a = trace.pre.back();
      for (auto& ch : a)
        ch = ch.unaryExpr([&](double t) {
          return smoothed_relu(t, net.activation_knee);
        });
    }
  }
  return trace;
}

FeatureStack stack_features(const ChannelStack& ch) {
  FeatureStack fs;
  fs.rows = ch[0].rows();
  fs.cols = ch[0].cols();
  const Eigen::Index m = fs.rows * fs.cols;
  fs.values.resize(m, static_cast<Eigen::Index>(ch.size()));
  for (std::size_t d = 0; d < ch.size(); ++d)
    fs.values.col(static_cast<Eigen::Index>(d)) =
        Eigen::Map<const Eigen::VectorXd>(ch[d].data(), m);
  return fs;
}

ChannelStack unstack_features(const FeatureStack& fs) {
  ChannelStack ch(static_cast<std::size_t>(fs.channels()));
  for (std::size_t d = 0; d < ch.size(); ++d) {
    ch[d].resize(fs.rows, fs.cols);
    Eigen::Map<Eigen::VectorXd>(ch[d].data(), fs.rows * fs.cols) =
        fs.values.col(static_cast<Eigen::Index>(d));
  }
  return ch;
}

ChannelStack jt_apply(const RegularizerNet& net, const ForwardTrace& trace,
                      ChannelStack w) {
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    w = conv_transpose(net.layers[l], w);
    if (l > 0) {
      // scale by the activation derivative at the previous pre-activation
      const ChannelStack& pre = trace.pre[l - 1];
      for (std::size_t d = 0; d < w.size(); ++d)
        w[d].array() *= pre[d]
                            .unaryExpr([&](double t) {
                              return smoothed_relu_deriv(t,
                                                         net.activation_knee);
                            })
                            .array();
    }
  }
  return w;
}

/// Forward-mode directional derivative of the feature map at the traced
/// point: d_pre = conv(d_a), d_a = act'(pre) .* d_pre between layers.
ChannelStack j_apply(const RegularizerNet& net, const ForwardTrace& trace,
                     const Eigen::MatrixXd& v) {
  ChannelStack dv{v};
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    dv = conv_forward(net.layers[l], dv);
    if (l + 1 < net.layers.size()) {
      const ChannelStack& pre = trace.pre[l];
      for (std::size_t d = 0; d < dv.size(); ++d)
        dv[d].array() *= pre[d]
                             .unaryExpr([&](double t) {
                               return smoothed_relu_deriv(t,
                                                          net.activation_knee);
                             })
                             .array();
    }
  }
  return dv;
}

double stack_norm(const ChannelStack& ch) {
  double s = 0.0;
  for (const auto& m : ch) s += m.squaredNorm();
  return std::sqrt(s);
}

/// Largest singular value of the feature Jacobian at y, by power iteration
/// on J^T J.
double spectral_norm_at(const RegularizerNet& net, const Eigen::MatrixXd& y,
                        std::mt19937_64& rng) {
  const ForwardTrace trace = run_forward(net, y);
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd v(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) v(i, j) = gauss(rng);
  double nv = v.norm();
  if (nv == 0.0) return 0.0;
  v /= nv;
  double lambda = 0.0;
  for (int it = 0; it < 50; ++it) {
    ChannelStack jv = j_apply(net, trace, v);
    ChannelStack w = jt_apply(net, trace, jv);
    lambda = w[0].norm();
    if (lambda == 0.0) return 0.0;
    v = w[0] / lambda;
  }
  return std::sqrt(lambda);
}

/// Largest singular value of J(y1) - J(y2), same scheme on the difference
/// operator.
double spectral_norm_diff(const RegularizerNet& net, const Eigen::MatrixXd& y1,
                          const Eigen::MatrixXd& y2, std::mt19937_64& rng) {
  const ForwardTrace t1 = run_forward(net, y1);
  const ForwardTrace t2 = run_forward(net, y2);
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd v(y1.rows(), y1.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) v(i, j) = gauss(rng);
  double nv = v.norm();
  if (nv == 0.0) return 0.0;
  v /= nv;
  double lambda = 0.0;
  for (int it = 0; it < 50; ++it) {
    ChannelStack d1 = j_apply(net, t1, v);
    ChannelStack d2 = j_apply(net, t2, v);
    for (std::size_t c = 0; c < d1.size(); ++c) d1[c] -= d2[c];
    ChannelStack w1 = jt_apply(net, t1, d1);
    ChannelStack w2 = jt_apply(net, t2, d1);
    Eigen::MatrixXd w = w1[0] - w2[0];
    lambda = w.norm();
    if (lambda == 0.0) return 0.0;
    v = w / lambda;
  }
  return std::sqrt(lambda);
}

Eigen::MatrixXd gaussian_image(Eigen::Index rows, Eigen::Index cols,
                               std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd y(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) y(i, j) = gauss(rng);
  return y;
}

}  // namespace

void ConvLayer::validate() const {
  if (kernels.empty() || kernels[0].empty())
    throw std::invalid_argument("conv layer has no kernels");
  const std::size_t cin = kernels[0].size();
  const Eigen::Index k = kernels[0][0].rows();
  if (k < 1 || k % 2 == 0)
    throw std::invalid_argument("kernel size must be odd and positive");
  for (const auto& row : kernels) {
    if (row.size() != cin)
      throw std::invalid_argument("ragged input-channel count in conv layer");
    for (const auto& K : row)
      if (K.rows() != k || K.cols() != k)
        throw std::invalid_argument("mixed kernel sizes in conv layer");
  }
}

void RegularizerNet::validate() const {
  if (layers.empty())
    throw std::invalid_argument("network needs at least one layer");
  if (!(activation_knee > 0.0))
    throw std::invalid_argument("activation knee must be positive");
  for (const auto& layer : layers) layer.validate();
  if (layers.front().in_channels() != 1)
    throw std::invalid_argument("first layer must take one channel");
  for (std::size_t l = 1; l < layers.size(); ++l)
    if (layers[l].in_channels() != layers[l - 1].out_channels())
      throw std::invalid_argument("channel mismatch between layers");
}

double smoothed_relu(double t, double knee) {
  if (t <= -knee) return 0.0;
  if (t >= knee) return t;
  const double s = t + knee;
  return s * s / (4.0 * knee);
}

double smoothed_relu_deriv(double t, double knee) {
  if (t <= -knee) return 0.0;
  if (t >= knee) return 1.0;
  return (t + knee) / (2.0 * knee);
}

FeatureStack feature_forward(const RegularizerNet& net,
                             const Eigen::MatrixXd& y) {
  net.validate();
  if (y.size() == 0) throw std::invalid_argument("empty input image");
  return stack_features(run_forward(net, y).pre.back());
}

Eigen::MatrixXd jacobian_transpose_apply(const RegularizerNet& net,
                                         const Eigen::MatrixXd& y,
                                         const FeatureStack& w) {
  net.validate();
  if (w.rows != y.rows() || w.cols != y.cols() ||
      w.values.rows() != y.size() || w.channels() != net.feature_channels())
    throw std::invalid_argument("feature stack shape does not match");
  const ForwardTrace trace = run_forward(net, y);
  return jt_apply(net, trace, unstack_features(w))[0];
}

double l21_norm(const FeatureStack& fs) {
  double s = 0.0;
  for (Eigen::Index p = 0; p < fs.positions(); ++p)
    s += fs.values.row(p).norm();
  return s;
}

double smoothed_value(const RegularizerNet& net, const Eigen::MatrixXd& y,
                      double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  const FeatureStack g = feature_forward(net, y);
  double s = 0.0;
  for (Eigen::Index p = 0; p < g.positions(); ++p) {
    const double n = g.values.row(p).norm();
    s += (n <= eps) ? n * n / (2.0 * eps) : n - eps / 2.0;
  }
  return s;
}

Eigen::MatrixXd smoothed_gradient(const RegularizerNet& net,
                                  const Eigen::MatrixXd& y, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  net.validate();
  const ForwardTrace trace = run_forward(net, y);
  FeatureStack g = stack_features(trace.pre.back());
  // dual certificate h: g/eps inside the ball, g/||g|| outside
  for (Eigen::Index p = 0; p < g.positions(); ++p) {
    const double n = g.values.row(p).norm();
    g.values.row(p) /= (n <= eps) ? eps : n;
  }
  return jt_apply(net, trace, unstack_features(g))[0];
}

double estimate_lipschitz(const RegularizerNet& net, Eigen::Index rows,
                          Eigen::Index cols, double eps, int probes) {
  net.validate();
  if (rows < 1 || cols < 1)
    throw std::invalid_argument("estimate needs a positive input shape");
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (probes < 1) throw std::invalid_argument("need at least one probe");
  // fixed internal seed keeps the estimate reproducible across runs
  std::mt19937_64 rng(0x4c414d41u);
  double big_m = 0.0;
  double lip_j = 0.0;
  for (int p = 0; p < probes; ++p) {
    const Eigen::MatrixXd y1 = gaussian_image(rows, cols, rng);
    big_m = std::max(big_m, spectral_norm_at(net, y1, rng));
    const Eigen::MatrixXd y2 = gaussian_image(rows, cols, rng);
    const double dist = (y1 - y2).norm();
    if (dist > 0.0)
      lip_j = std::max(lip_j, spectral_norm_diff(net, y1, y2, rng) / dist);
  }
  const double m = static_cast<double>(rows * cols);
  return std::sqrt(m) * lip_j + big_m * big_m / eps;
}

RegularizerNet identity_net() {
  ConvLayer layer;
  layer.kernels = {{Eigen::MatrixXd::Ones(1, 1)}};
  RegularizerNet net;
  net.layers.push_back(layer);
  return net;
}

RegularizerNet zero_net() {
  ConvLayer layer;
  layer.kernels = {{Eigen::MatrixXd::Zero(1, 1)}};
  RegularizerNet net;
  net.layers.push_back(layer);
  return net;
}

RegularizerNet tv_net(double knee) {
  Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(3, 3);
  dh(1, 1) = -1.0;
  dh(1, 2) = 1.0;
  Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(3, 3);
  dv(1, 1) = -1.0;
  dv(2, 1) = 1.0;
  ConvLayer layer;
  layer.kernels = {{dh}, {dv}};
  RegularizerNet net;
  net.layers.push_back(layer);
  net.activation_knee = knee;
  return net;
}

RegularizerNet random_net(std::uint64_t seed, int n_layers,
                          Eigen::Index channels, Eigen::Index ksize,
                          double knee) {
  if (n_layers < 1) throw std::invalid_argument("need at least one layer");
  if (channels < 1) throw std::invalid_argument("need at least one channel");
  if (ksize < 1 || ksize % 2 == 0)
    throw std::invalid_argument("kernel size must be odd and positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  RegularizerNet net;
  net.activation_knee = knee;
  for (int l = 0; l < n_layers; ++l) {
    const Eigen::Index cin = (l == 0) ? 1 : channels;
    ConvLayer layer;
    const double s =
        1.0 / std::sqrt(static_cast<double>(cin) *
                        static_cast<double>(ksize) *
                        static_cast<double>(ksize));
    layer.kernels.assign(
        static_cast<std::size_t>(channels),
        std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(cin)));
    for (auto& row : layer.kernels)
      for (auto& K : row) {
        K.resize(ksize, ksize);
        for (Eigen::Index u = 0; u < ksize; ++u)
          for (Eigen::Index v = 0; v < ksize; ++v) K(u, v) = s * gauss(rng);
      }
    net.layers.push_back(std::move(layer));
  }
  // Two rescaling passes pull the Jacobian spectral norm to about 1; the
  // activation is not homogeneous, so one pass is only approximate.
  std::mt19937_64 probe_rng(seed ^ 0x9e3779b97f4a7c15ull);
  for (int pass = 0; pass < 2; ++pass) {
    const Eigen::MatrixXd y = gaussian_image(16, 16, probe_rng);
    const double mhat = spectral_norm_at(net, y, probe_rng);
    if (mhat <= 0.0) break;
    const double c = std::pow(1.0 / mhat, 1.0 / n_layers);
    for (auto& layer : net.layers)
      for (auto& row : layer.kernels)
        for (auto& K : row) K *= c;
  }
  return net;
}

void save_net(const RegularizerNet& net, const std::string& path) {
  net.validate();
  Container c;
  c.add_scalar("activation_knee", net.activation_knee);
  c.add_scalar("n_layers", static_cast<double>(net.layers.size()));
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const ConvLayer& layer = net.layers[l];
    const Eigen::Index k = layer.kernel_size();
    TensorEntry e;
    e.dims = {static_cast<std::uint32_t>(layer.out_channels()),
              static_cast<std::uint32_t>(layer.in_channels()),
              static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k)};
    e.data.reserve(e.element_count());
    for (const auto& row : layer.kernels)
      for (const auto& K : row)
        for (Eigen::Index u = 0; u < k; ++u)
          for (Eigen::Index v = 0; v < k; ++v) e.data.push_back(K(u, v));
    c.add("layer" + std::to_string(l), std::move(e));
  }
  save_container(c, path);
}

RegularizerNet load_net(const std::string& path) {
  const Container c = load_container(path);
  RegularizerNet net;
  net.activation_knee = c.scalar("activation_knee");
  const auto n_layers = static_cast<std::size_t>(
      std::llround(c.scalar("n_layers")));
  for (std::size_t l = 0; l < n_layers; ++l) {
    const TensorEntry& e = c.at("layer" + std::to_string(l));
    if (e.dims.size() != 4 || e.dims[2] != e.dims[3])
      throw ContainerError("layer entry is not [out, in, k, k]");
    const Eigen::Index cout = e.dims[0];
    const Eigen::Index cin = e.dims[1];
    const Eigen::Index k = e.dims[2];
    ConvLayer layer;
    layer.kernels.assign(
        static_cast<std::size_t>(cout),
        std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(cin)));
    std::size_t idx = 0;
    for (auto& row : layer.kernels)
      for (auto& K : row) {
        K.resize(k, k);
        for (Eigen::Index u = 0; u < k; ++u)
          for (Eigen::Index v = 0; v < k; ++v) K(u, v) = e.data[idx++];
      }
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

}  // namespace lama
