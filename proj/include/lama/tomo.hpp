#pragma once

#include <Eigen/Dense>

namespace lama {

/// Reconstruction variable: n×n attenuation map, row i / column j.
using Image = Eigen::MatrixXd;

/// Measurement-domain variable: one row per view angle, one column per
/// detector bin.
using Sinogram = Eigen::MatrixXd;

/// Parallel-beam scan description. View j is at angle j*pi/n_views_full;
/// detector bin d sits at signed offset (d - (D-1)/2) * detector_spacing
/// from the rotation axis, pixel centers at (k - (n-1)/2) * pixel_spacing.
struct Geometry {
  Eigen::Index image_size = 0;
  Eigen::Index n_detectors = 0;
  Eigen::Index n_views_full = 0;
  double detector_spacing = 1.0;
  double pixel_spacing = 1.0;

  double view_angle(Eigen::Index j) const;
  void validate() const;  // throws std::invalid_argument
};

/// Evenly strided view subset {offset, offset+rate, ...} of a full scan.
struct ViewSelector {
  Eigen::Index rate = 1;  // keep every rate-th view
  Eigen::Index offset = 0;
  Eigen::Index full_view_count = 0;

  Eigen::Index sparse_view_count() const { return full_view_count / rate; }
  void validate() const;
};

enum class FbpFilter { RamLak, Hann };

/// Discrete Radon transform by Joseph-style ray tracing: each ray gathers
/// linearly interpolated pixel values along its dominant axis, weighted by
/// the per-slab path length.
Sinogram project(const Image& img, const Geometry& geo);

/// Exact adjoint of project(): scatters with the identical ray weights.
Image backproject(const Sinogram& sino, const Geometry& geo);

/// Filtered back-projection. Rows are ramp-filtered in the frequency
/// domain (zero-padded to the next power of two >= 2D, optional Hann
/// apodization), back-projected with linear detector interpolation and
/// scaled by pi/(2V).
Image fbp(const Sinogram& sino, const Geometry& geo,
          FbpFilter filter = FbpFilter::RamLak);

/// Keep rows {offset, offset+rate, ...} of a full sinogram.
Sinogram select_views(const Sinogram& full, const ViewSelector& sel);

/// Adjoint of select_views: copy sparse rows into a zero full sinogram.
Sinogram embed_views(const Sinogram& sparse, const ViewSelector& sel);

/// Spectral-norm estimate of the projector (largest singular value) by
/// power iteration on AᵀA. Deterministic.
double projector_norm(const Geometry& geo, int iters = 60);

/// Ten-ellipse Shepp-Logan head phantom on [-1,1]^2, contrast-enhanced
/// intensities, clamped to [0, 1].
Image shepp_logan(Eigen::Index n);

}  // namespace lama
