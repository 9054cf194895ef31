#include "lama/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace lama {

namespace {

void check_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("metric inputs differ in shape");
}

constexpr Eigen::Index kWindow = 8;

}  // namespace

double psnr(const Image& a, const Image& b, double data_range) {
  check_same_shape(a, b);
  if (!(data_range > 0.0))
    throw std::invalid_argument("data_range must be positive");
  const double mse =
      (a - b).squaredNorm() / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

double ssim(const Image& a, const Image& b, double data_range) {
  check_same_shape(a, b);
  if (!(data_range > 0.0))
    throw std::invalid_argument("data_range must be positive");
  if (a.rows() < kWindow || a.cols() < kWindow)
    throw std::invalid_argument("images smaller than the SSIM window");
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  const double n = static_cast<double>(kWindow * kWindow);
  double total = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i + kWindow <= a.rows(); ++i) {
    for (Eigen::Index j = 0; j + kWindow <= a.cols(); ++j) {
      const auto wa = a.block(i, j, kWindow, kWindow).array();
      const auto wb = b.block(i, j, kWindow, kWindow).array();
      const double ma = wa.mean();
      const double mb = wb.mean();
      const double va = (wa - ma).square().sum() / (n - 1.0);
      const double vb = (wb - mb).square().sum() / (n - 1.0);
      const double cov = ((wa - ma) * (wb - mb)).sum() / (n - 1.0);
      total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double rmse_sinogram(const Sinogram& z, const Sinogram& z_ref) {
  check_same_shape(z, z_ref);
  return std::sqrt((z - z_ref).squaredNorm() /
                   static_cast<double>(z.size()));
}

MetricReport evaluate(const Image& x, const Image& x_ref, const Sinogram& z,
                      const Sinogram& z_ref, double data_range) {
  MetricReport r;
  r.psnr = psnr(x, x_ref, data_range);
  r.ssim = ssim(x, x_ref, data_range);
  r.sino_rmse = rmse_sinogram(z, z_ref);
  return r;
}

MetricReport evaluate(const Image& x, const Image& x_ref, const Sinogram& z,
                      const Sinogram& z_ref) {
  double range = x_ref.maxCoeff() - x_ref.minCoeff();
  if (!(range > 0.0)) range = 1.0;
  return evaluate(x, x_ref, z, z_ref, range);
}

std::string metric_csv_header() { return "psnr,ssim,sino_rmse"; }

std::string metric_csv_row(const MetricReport& r) {
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << r.psnr << ',' << r.ssim << ',' << r.sino_rmse;
  return out.str();
}

}  // namespace lama
