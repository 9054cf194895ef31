#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lama/metrics.hpp"
#include "oracles.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

using namespace lama;

TEST_CASE("psnr on known mean squared errors") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(8, 8);
  Eigen::MatrixXd b = Eigen::MatrixXd::Constant(8, 8, 0.1);
  // mse = 0.01, range 1 -> 10 log10(1/0.01) = 20 dB
  CHECK(psnr(a, b, 1.0) == doctest::Approx(20.0).epsilon(1e-12));
  // doubling the range adds 20 log10(2) ~ 6.02 dB
  CHECK(psnr(a, b, 2.0) ==
        doctest::Approx(20.0 + 20.0 * std::log10(2.0)).epsilon(1e-12));
  CHECK(psnr(a, a, 1.0) == std::numeric_limits<double>::infinity());
  CHECK(psnr(a, b, 1.0) == psnr(b, a, 1.0));
}

TEST_CASE("ssim basics") {
  std::mt19937_64 rng(70);
  const Eigen::MatrixXd a = oracle::random_matrix(16, 16, rng);
  CHECK(ssim(a, a, 1.0) == doctest::Approx(1.0).epsilon(1e-12));

  // constant images agree perfectly (the stabilizers carry the ratio)
  const Eigen::MatrixXd c = Eigen::MatrixXd::Constant(16, 16, 0.5);
  CHECK(ssim(c, c, 1.0) == doctest::Approx(1.0).epsilon(1e-12));

  // symmetric in its arguments
  const Eigen::MatrixXd b = a + 0.1 * oracle::random_matrix(16, 16, rng);
  CHECK(ssim(a, b, 1.0) == doctest::Approx(ssim(b, a, 1.0)).epsilon(1e-14));

  // bounded and degrading with noise
  const Eigen::MatrixXd worse = a + 0.5 * oracle::random_matrix(16, 16, rng);
  const double s_small = ssim(a, b, 1.0);
  const double s_large = ssim(a, worse, 1.0);
  CHECK(s_small <= 1.0);
  CHECK(s_small > s_large);
  CHECK(s_large >= -1.0);

  // images smaller than the window are rejected
  CHECK_THROWS_AS(ssim(Eigen::MatrixXd::Zero(4, 4),
                       Eigen::MatrixXd::Zero(4, 4), 1.0),
                  std::invalid_argument);
}

TEST_CASE("ssim matches a direct sliding-window evaluation") {
  std::mt19937_64 rng(71);
  const Eigen::MatrixXd a = oracle::random_matrix(12, 14, rng);
  const Eigen::MatrixXd b = a + 0.2 * oracle::random_matrix(12, 14, rng);
  const double range = 1.0;
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);
  const int w = 8;

  double acc = 0.0;
  int windows = 0;
  for (int i = 0; i + w <= 12; ++i)
    for (int j = 0; j + w <= 14; ++j) {
      double ma = 0.0, mb = 0.0;
      for (int u = 0; u < w; ++u)
        for (int v = 0; v < w; ++v) {
          ma += a(i + u, j + v);
          mb += b(i + u, j + v);
        }
      ma /= w * w;
      mb /= w * w;
      double va = 0.0, vb = 0.0, cov = 0.0;
      for (int u = 0; u < w; ++u)
        for (int v = 0; v < w; ++v) {
          va += (a(i + u, j + v) - ma) * (a(i + u, j + v) - ma);
          vb += (b(i + u, j + v) - mb) * (b(i + u, j + v) - mb);
          cov += (a(i + u, j + v) - ma) * (b(i + u, j + v) - mb);
        }
      va /= w * w - 1;
      vb /= w * w - 1;
      cov /= w * w - 1;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++windows;
    }
  CHECK(ssim(a, b, range) ==
        doctest::Approx(acc / windows).epsilon(1e-12));
}

TEST_CASE("sinogram rmse") {
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(4, 6);
  Eigen::MatrixXd ref = Eigen::MatrixXd::Constant(4, 6, 3.0);
  CHECK(rmse_sinogram(z, ref) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(rmse_sinogram(ref, ref) == 0.0);
}

TEST_CASE("evaluate derives the data range from the reference image") {
  std::mt19937_64 rng(72);
  Eigen::MatrixXd x_ref = oracle::random_matrix(16, 16, rng);
  x_ref = (x_ref.array() - x_ref.minCoeff()).matrix();  // range = max
  const Eigen::MatrixXd x = x_ref + 0.05 * oracle::random_matrix(16, 16, rng);
  const Eigen::MatrixXd z = oracle::random_matrix(10, 12, rng);
  const Eigen::MatrixXd z_ref = oracle::random_matrix(10, 12, rng);

  const MetricReport auto_range = evaluate(x, x_ref, z, z_ref);
  const MetricReport manual =
      evaluate(x, x_ref, z, z_ref, x_ref.maxCoeff() - x_ref.minCoeff());
  CHECK(auto_range.psnr == manual.psnr);
  CHECK(auto_range.ssim == manual.ssim);
  CHECK(auto_range.sino_rmse == doctest::Approx(rmse_sinogram(z, z_ref)));

  // a flat reference falls back to unit range instead of dividing by zero
  const Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(16, 16, 0.3);
  const MetricReport fb = evaluate(x, flat, z, z_ref);
  CHECK(std::isfinite(fb.psnr));
}

TEST_CASE("csv row carries full precision") {
  MetricReport r;
  r.psnr = 23.456789012345678;
  r.ssim = 0.87654321098765432;
  r.sino_rmse = 1.234567890123456e-7;
  CHECK(metric_csv_header() == "psnr,ssim,sino_rmse");
  std::stringstream ss(metric_csv_row(r));
  std::string field;
  std::getline(ss, field, ',');
  CHECK(std::stod(field) == r.psnr);
  std::getline(ss, field, ',');
  CHECK(std::stod(field) == r.ssim);
  std::getline(ss, field, ',');
  CHECK(std::stod(field) == r.sino_rmse);
}
