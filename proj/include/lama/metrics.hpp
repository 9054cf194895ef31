#pragma once

#include "lama/tomo.hpp"

#include <string>

namespace lama {

/// Image and sinogram quality summary for one reconstruction.
struct MetricReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double sino_rmse = 0.0;
};

/// 10·log10(data_range² / MSE); +infinity when the images are identical.
double psnr(const Image& a, const Image& b, double data_range);

/// Mean local structural similarity over 8×8 sliding windows with uniform
/// weights, C1 = (0.01·range)², C2 = (0.03·range)², sample (N−1) moments.
/// Not invariant under pixel permutations: windows are spatial.
double ssim(const Image& a, const Image& b, double data_range);

/// sqrt(mean squared difference).
double rmse_sinogram(const Sinogram& z, const Sinogram& z_ref);

/// Bundles all three metrics; data_range applies to the image pair.
MetricReport evaluate(const Image& x, const Image& x_ref, const Sinogram& z,
                      const Sinogram& z_ref, double data_range);

/// Same, with data_range taken as max(x_ref) − min(x_ref) (1 if constant).
MetricReport evaluate(const Image& x, const Image& x_ref, const Sinogram& z,
                      const Sinogram& z_ref);

// One-row CSV serialization of a report.
std::string metric_csv_header();
std::string metric_csv_row(const MetricReport& r);

}  // namespace lama
