#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lama/container_io.hpp"
#include "lama/regnet.hpp"
#include "oracles.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace lama;

namespace {

ConvLayer layer_from(std::vector<std::vector<Eigen::MatrixXd>> kernels) {
  ConvLayer l;
  l.kernels = std::move(kernels);
  return l;
}

RegularizerNet random_two_layer(std::uint64_t seed, Eigen::Index channels) {
  return random_net(seed, 2, channels, 3, 0.01);
}

std::vector<Eigen::MatrixXd> channels_of(const FeatureStack& fs) {
  std::vector<Eigen::MatrixXd> out;
  for (Eigen::Index c = 0; c < fs.channels(); ++c) {
    Eigen::MatrixXd m(fs.rows, fs.cols);
    for (Eigen::Index p = 0; p < fs.positions(); ++p)
      m(p % fs.rows, p / fs.rows) = fs.values(p, c);
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

TEST_CASE("smoothed relu interpolates between zero and identity") {
  const double k = 0.3;
  CHECK(smoothed_relu(-k, k) == 0.0);
  CHECK(smoothed_relu(-5.0, k) == 0.0);
  CHECK(smoothed_relu(k, k) == k);
  CHECK(smoothed_relu(7.5, k) == 7.5);
  CHECK(smoothed_relu(0.0, k) == doctest::Approx(k / 4.0).epsilon(1e-15));

  // value and derivative are continuous across both knees
  CHECK(smoothed_relu(-k + 1e-12, k) == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(smoothed_relu(k - 1e-12, k) == doctest::Approx(k).epsilon(1e-10));
  CHECK(smoothed_relu_deriv(-k, k) == doctest::Approx(0.0));
  CHECK(smoothed_relu_deriv(k, k) == doctest::Approx(1.0));

  // derivative matches finite differences away from machine-precision kinks
  for (double t = -1.0; t <= 1.0; t += 0.013) {
    const double fd =
        (smoothed_relu(t + 1e-7, k) - smoothed_relu(t - 1e-7, k)) / 2e-7;
    CHECK(smoothed_relu_deriv(t, k) == doctest::Approx(fd).epsilon(1e-5));
  }

  // monotone nondecreasing
  double prev = smoothed_relu(-2.0, k);
  for (double t = -2.0; t <= 2.0; t += 0.05) {
    CHECK(smoothed_relu(t, k) >= prev - 1e-15);
    prev = smoothed_relu(t, k);
  }
}

TEST_CASE("single-layer forward pass equals the quadruple-loop convolution") {
  std::mt19937_64 rng(21);
  std::vector<std::vector<Eigen::MatrixXd>> kernels(5);
  for (auto& per_out : kernels)
    per_out.push_back(oracle::random_matrix(3, 3, rng));
  RegularizerNet net;
  net.layers.push_back(layer_from(kernels));
  net.activation_knee = 0.01;
  net.validate();

  const Eigen::MatrixXd y = oracle::random_matrix(7, 9, rng);
  const FeatureStack fs = feature_forward(net, y);
  REQUIRE(fs.rows == 7);
  REQUIRE(fs.cols == 9);
  REQUIRE(fs.channels() == 5);

  const auto expect = oracle::conv_same({y}, kernels);
  const auto got = channels_of(fs);
  for (std::size_t c = 0; c < 5; ++c)
    CHECK((got[c] - expect[c]).lpNorm<Eigen::Infinity>() < 1e-13);
}

TEST_CASE("two-layer forward pass activates between layers only") {
  std::mt19937_64 rng(22);
  const double knee = 0.2;
  std::vector<std::vector<Eigen::MatrixXd>> k1(3), k2(2);
  for (auto& per_out : k1) per_out.push_back(oracle::random_matrix(3, 3, rng));
  for (auto& per_out : k2)
    for (int c = 0; c < 3; ++c)
      per_out.push_back(oracle::random_matrix(3, 3, rng));
  RegularizerNet net;
  net.layers = {layer_from(k1), layer_from(k2)};
  net.activation_knee = knee;
  net.validate();

  const Eigen::MatrixXd y = oracle::random_matrix(8, 8, rng);
  auto mid = oracle::conv_same({y}, k1);
  for (auto& m : mid)
    m = m.unaryExpr([&](double t) { return smoothed_relu(t, knee); });
  const auto expect = oracle::conv_same(mid, k2);
  const auto got = channels_of(feature_forward(net, y));
  for (std::size_t c = 0; c < 2; ++c)
    CHECK((got[c] - expect[c]).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("transposed-jacobian apply matches a finite-difference jacobian") {
  std::mt19937_64 rng(23);
  const RegularizerNet net = random_two_layer(99, 3);
  const Eigen::MatrixXd y = oracle::random_matrix(6, 6, rng);
  const Eigen::Index n = 36;
  const FeatureStack base = feature_forward(net, y);
  const Eigen::Index mc = base.values.size();

  // dense J by differentiating each input coordinate
  Eigen::MatrixXd J(mc, n);
  Eigen::MatrixXd pt = y;
  const double h = 1e-6;
  for (Eigen::Index p = 0; p < n; ++p) {
    const double orig = pt(p % 6, p / 6);
    pt(p % 6, p / 6) = orig + h;
    const Eigen::MatrixXd fp = feature_forward(net, pt).values;
    pt(p % 6, p / 6) = orig - h;
    const Eigen::MatrixXd fm = feature_forward(net, pt).values;
    pt(p % 6, p / 6) = orig;
    const Eigen::MatrixXd diff = (fp - fm) / (2.0 * h);
    J.col(p) = Eigen::Map<const Eigen::VectorXd>(diff.data(), mc);
  }

  for (int t = 0; t < 4; ++t) {
    FeatureStack w = base;
    w.values = oracle::random_matrix(base.values.rows(), base.values.cols(),
                                     rng);
    const Eigen::MatrixXd got = jacobian_transpose_apply(net, y, w);
    const Eigen::VectorXd expect =
        J.transpose() *
        Eigen::Map<const Eigen::VectorXd>(w.values.data(), mc);
    CHECK((oracle::vec(got) - expect).norm() / expect.norm() < 1e-6);
  }
}

TEST_CASE("l21 norm sums channelwise euclidean norms over positions") {
  FeatureStack fs;
  fs.rows = 2;
  fs.cols = 2;
  fs.values.resize(4, 2);
  fs.values << 3.0, 4.0, 0.0, 0.0, -1.0, 0.0, 0.5, -0.5;
  CHECK(l21_norm(fs) ==
        doctest::Approx(5.0 + 0.0 + 1.0 + std::sqrt(0.5)).epsilon(1e-15));
}

TEST_CASE("smoothing sandwiches the exact l21 value") {
  std::mt19937_64 rng(24);
  const RegularizerNet net = random_two_layer(5, 4);
  const Eigen::MatrixXd y = oracle::random_matrix(9, 7, rng);
  const double exact = l21_norm(feature_forward(net, y));
  const double m = 9.0 * 7.0;
  for (double eps : {2.0, 0.5, 0.01, 1e-9}) {
    const double r = smoothed_value(net, y, eps);
    CHECK(r <= exact + 1e-12);
    CHECK(exact <= r + m * eps / 2.0 + 1e-12);
  }
}

TEST_CASE("smoothed gradient matches finite differences across eps") {
  std::mt19937_64 rng(25);
  const RegularizerNet net = random_two_layer(31, 3);
  for (double eps : {1.0, 0.1, 0.01}) {
    const double h = eps >= 0.1 ? 1e-5 : 1e-6;
    for (int t = 0; t < 3; ++t) {
      const Eigen::MatrixXd y = oracle::random_matrix(8, 8, rng);
      const Eigen::MatrixXd fd = oracle::fd_gradient(
          [&](const Eigen::MatrixXd& yy) {
            return smoothed_value(net, yy, eps);
          },
          y, h);
      const Eigen::MatrixXd g = smoothed_gradient(net, y, eps);
      CHECK((fd - g).norm() / std::max(g.norm(), 1e-12) < 1e-6);
    }
  }
}

TEST_CASE("identity net reduces the smoothed value to a huber sum") {
  const RegularizerNet id = identity_net();
  REQUIRE(id.layers.size() == 1);
  REQUIRE(id.layers[0].kernel_size() == 1);
  std::mt19937_64 rng(26);
  const Eigen::MatrixXd y = oracle::random_matrix(11, 5, rng);
  for (double eps : {1.5, 0.7, 0.05}) {
    double expect = 0.0;
    for (Eigen::Index i = 0; i < y.rows(); ++i)
      for (Eigen::Index j = 0; j < y.cols(); ++j)
        expect += oracle::huber(y(i, j), eps);
    const double got = smoothed_value(id, y, eps);
    CHECK(std::abs(got - expect) <= 1e-12 * std::max(1.0, expect));
  }
}

TEST_CASE("identity net curvature estimate is exactly one over eps") {
  const RegularizerNet id = identity_net();
  for (double eps : {1.0, 0.25, 1e-3})
    CHECK(estimate_lipschitz(id, 8, 8, eps, 3) == 1.0 / eps);
}

TEST_CASE("zero net contributes nothing") {
  const RegularizerNet z = zero_net();
  std::mt19937_64 rng(27);
  const Eigen::MatrixXd y = oracle::random_matrix(6, 6, rng);
  CHECK(smoothed_value(z, y, 0.5) == 0.0);
  CHECK(smoothed_gradient(z, y, 0.5).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(estimate_lipschitz(z, 8, 8, 0.5, 3) == 0.0);
}

TEST_CASE("tv net features are forward differences") {
  const RegularizerNet tv = tv_net();
  std::mt19937_64 rng(28);
  const Eigen::MatrixXd y = oracle::random_matrix(7, 7, rng);
  const auto chans = channels_of(feature_forward(tv, y));
  REQUIRE(chans.size() == 2);
  // interior: one channel is the horizontal difference, the other vertical
  // (zero padding clips the far edge)
  double worst = 0.0;
  for (Eigen::Index i = 0; i + 1 < 7; ++i)
    for (Eigen::Index j = 0; j + 1 < 7; ++j) {
      const double dh = y(i, j + 1) - y(i, j);
      const double dv = y(i + 1, j) - y(i, j);
      const double a =
          std::abs(chans[0](i, j) - dh) + std::abs(chans[1](i, j) - dv);
      const double b =
          std::abs(chans[0](i, j) - dv) + std::abs(chans[1](i, j) - dh);
      worst = std::max(worst, std::min(a, b));
    }
  CHECK(worst < 1e-14);

  // tiny smoothing makes the value the isotropic total variation
  const FeatureStack fs = feature_forward(tv, y);
  CHECK(smoothed_value(tv, y, 1e-12) ==
        doctest::Approx(l21_norm(fs)).epsilon(1e-9));
}

TEST_CASE("curvature estimate bounds sampled gradient differences") {
  const RegularizerNet net = random_two_layer(77, 4);
  std::mt19937_64 rng(29);
  for (double eps : {1.0, 0.1}) {
    const double L = estimate_lipschitz(net, 8, 8, eps, 3);
    REQUIRE(L > 0.0);
    for (int t = 0; t < 8; ++t) {
      const Eigen::MatrixXd y1 = oracle::random_matrix(8, 8, rng);
      const Eigen::MatrixXd y2 =
          y1 + 0.01 * oracle::random_matrix(8, 8, rng);
      const double lhs =
          (smoothed_gradient(net, y1, eps) - smoothed_gradient(net, y2, eps))
              .norm();
      CHECK(lhs <= L * (y1 - y2).norm() * 1.05 + 1e-12);
    }
  }
}

TEST_CASE("random net is normalized to near-unit jacobian scale") {
  const RegularizerNet net = random_net(4242, 3, 6, 3, 0.01);
  CHECK_NOTHROW(net.validate());
  CHECK(net.feature_channels() == 6);
  std::mt19937_64 rng(30);
  // the jacobian spectral norm at random points should sit near one
  for (int t = 0; t < 3; ++t) {
    const Eigen::MatrixXd y = oracle::random_matrix(16, 16, rng);
    const Eigen::MatrixXd y2 = y + 1e-4 * oracle::random_matrix(16, 16, rng);
    const double q = (feature_forward(net, y).values -
                      feature_forward(net, y2).values)
                         .norm() /
                     (y - y2).norm();
    CHECK(q < 1.5);
  }
  // deterministic for a fixed seed
  const RegularizerNet again = random_net(4242, 3, 6, 3, 0.01);
  CHECK(again.layers.size() == net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l)
    CHECK((net.layers[l].kernels[0][0] - again.layers[l].kernels[0][0])
              .lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("net validation rejects inconsistent stacks") {
  RegularizerNet net;
  CHECK_THROWS_AS(net.validate(), std::invalid_argument);  // no layers

  std::mt19937_64 rng(31);
  std::vector<std::vector<Eigen::MatrixXd>> k1(2), k2(2);
  for (auto& per_out : k1) per_out.push_back(oracle::random_matrix(3, 3, rng));
  for (auto& per_out : k2)
    for (int c = 0; c < 3; ++c)  // expects 3 inputs, previous produced 2
      per_out.push_back(oracle::random_matrix(3, 3, rng));
  net.layers = {layer_from(k1), layer_from(k2)};
  CHECK_THROWS_AS(net.validate(), std::invalid_argument);

  std::vector<std::vector<Eigen::MatrixXd>> even(1);
  even[0].push_back(oracle::random_matrix(2, 2, rng));
  RegularizerNet bad;
  bad.layers = {layer_from(even)};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  RegularizerNet negknee = identity_net();
  negknee.activation_knee = -1.0;
  CHECK_THROWS_AS(negknee.validate(), std::invalid_argument);
}

TEST_CASE("weight files round-trip bit for bit") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "lama_regnet_test";
  fs::create_directories(dir);
  const std::string path = (dir / "weights.lama").string();

  const RegularizerNet net = random_net(17, 3, 4, 3, 0.125);
  save_net(net, path);
  const RegularizerNet loaded = load_net(path);
  CHECK(loaded.activation_knee == net.activation_knee);
  REQUIRE(loaded.layers.size() == net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    REQUIRE(loaded.layers[l].out_channels() == net.layers[l].out_channels());
    REQUIRE(loaded.layers[l].in_channels() == net.layers[l].in_channels());
    for (Eigen::Index o = 0; o < net.layers[l].out_channels(); ++o)
      for (Eigen::Index c = 0; c < net.layers[l].in_channels(); ++c)
        CHECK((loaded.layers[l].kernels[o][c] - net.layers[l].kernels[o][c])
                  .lpNorm<Eigen::Infinity>() == 0.0);
  }

  // truncated file surfaces as a container error
  std::ifstream in(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  in.close();
  const std::string cut = (dir / "cut.lama").string();
  std::ofstream out(cut, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  out.close();
  CHECK_THROWS_AS(load_net(cut), ContainerError);

  fs::remove_all(dir);
}
