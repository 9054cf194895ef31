#include "lama/tomo.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace lama {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Visits every (pixel, weight) pair of one ray. Joseph tracing: step along
// the axis most aligned with the ray, linearly interpolating between the
// two straddled pixels; weight is the slab path length times the
// interpolation coefficient. Gather and scatter share this traversal so
// project/backproject are exact transposes of each other.
template <typename Visit>
void trace_ray(const Geometry& geo, double cos_a, double sin_a, double t,
               Visit&& visit) {
  const Eigen::Index n = geo.image_size;
  const double dp = geo.pixel_spacing;
  const double half = static_cast<double>(n - 1) / 2.0;

  if (std::abs(sin_a) <= std::abs(cos_a)) {
    const double slab = dp / std::abs(cos_a);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double y = (static_cast<double>(i) - half) * dp;
      const double x = (t - y * sin_a) / cos_a;
      const double pos = x / dp + half;
      const double fl = std::floor(pos);
      const Eigen::Index j0 = static_cast<Eigen::Index>(fl);
      const double w = pos - fl;
      if (j0 >= 0 && j0 < n) visit(i, j0, (1.0 - w) * slab);
      if (w != 0.0 && j0 + 1 >= 0 && j0 + 1 < n) visit(i, j0 + 1, w * slab);
    }
  } else {
    const double slab = dp / std::abs(sin_a);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double x = (static_cast<double>(j) - half) * dp;
      const double y = (t - x * cos_a) / sin_a;
      const double pos = y / dp + half;
      const double fl = std::floor(pos);
      const Eigen::Index i0 = static_cast<Eigen::Index>(fl);
      const double w = pos - fl;
      if (i0 >= 0 && i0 < n) visit(i0, j, (1.0 - w) * slab);
      if (w != 0.0 && i0 + 1 >= 0 && i0 + 1 < n) visit(i0 + 1, j, w * slab);
    }
  }
}

double detector_offset(const Geometry& geo, Eigen::Index d) {
  return (static_cast<double>(d) -
          static_cast<double>(geo.n_detectors - 1) / 2.0) *
         geo.detector_spacing;
}

void check_image(const Image& img, const Geometry& geo) {
  if (img.rows() != geo.image_size || img.cols() != geo.image_size)
    throw std::invalid_argument("image dimensions do not match geometry");
}

void check_sinogram(const Sinogram& sino, const Geometry& geo) {
  if (sino.rows() != geo.n_views_full || sino.cols() != geo.n_detectors)
    throw std::invalid_argument("sinogram dimensions do not match geometry");
}

// Frequency response of the band-limited ramp (Ram-Lak) kernel of length m:
// real part of the DFT of the sampled spatial kernel h[0]=1/4,
// h[k]=-1/(pi*k)^2 for odd |k| (periodically wrapped), 0 otherwise.
Eigen::VectorXd ramp_filter(Eigen::Index m, FbpFilter filter) {
  Eigen::VectorXd kernel = Eigen::VectorXd::Zero(m);
  kernel[0] = 0.25;
  for (Eigen::Index k = 1; k < m; k += 2) {
    const double dist = static_cast<double>(std::min(k, m - k));
    kernel[k] = -1.0 / (kPi * kPi * dist * dist);
  }
  Eigen::FFT<double> fft;
  Eigen::VectorXcd spectrum;
  fft.fwd(spectrum, kernel);
  Eigen::VectorXd response = 2.0 * spectrum.real();
  if (filter == FbpFilter::Hann) {
    for (Eigen::Index k = 0; k < m; ++k) {
      const Eigen::Index shifted = (k + m / 2) % m;
      const double w =
          0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(shifted) /
                               static_cast<double>(m - 1));
      response[k] *= w;
    }
  }
  return response;
}

}  // namespace

double Geometry::view_angle(Eigen::Index j) const {
  return static_cast<double>(j) * kPi / static_cast<double>(n_views_full);
}

void Geometry::validate() const {
  if (image_size < 2) throw std::invalid_argument("image_size must be >= 2");
  if (n_detectors < image_size)
    throw std::invalid_argument("n_detectors must cover the image width");
  if (n_views_full < 2)
    throw std::invalid_argument("n_views_full must be >= 2");
  if (!(detector_spacing > 0.0) || !(pixel_spacing > 0.0))
    throw std::invalid_argument("spacings must be positive");
}

void ViewSelector::validate() const {
  if (rate < 1) throw std::invalid_argument("downsample rate must be >= 1");
  if (offset < 0 || offset >= rate)
    throw std::invalid_argument("view offset must lie in [0, rate)");
  if (full_view_count < 1 || full_view_count % rate != 0)
    throw std::invalid_argument(
        "downsample rate must divide the full view count");
}

Sinogram project(const Image& img, const Geometry& geo) {
  geo.validate();
  check_image(img, geo);
  Sinogram sino = Sinogram::Zero(geo.n_views_full, geo.n_detectors);
  for (Eigen::Index v = 0; v < geo.n_views_full; ++v) {
    const double angle = geo.view_angle(v);
    const double cos_a = std::cos(angle);
    const double sin_a = std::sin(angle);
    for (Eigen::Index d = 0; d < geo.n_detectors; ++d) {
      double sum = 0.0;
      trace_ray(geo, cos_a, sin_a, detector_offset(geo, d),
                [&](Eigen::Index i, Eigen::Index j, double w) {
                  sum += w * img(i, j);
                });
      sino(v, d) = sum;
    }
  }
  return sino;
}

Image backproject(const Sinogram& sino, const Geometry& geo) {
  geo.validate();
  check_sinogram(sino, geo);
  Image img = Image::Zero(geo.image_size, geo.image_size);
  for (Eigen::Index v = 0; v < geo.n_views_full; ++v) {
    const double angle = geo.view_angle(v);
    const double cos_a = std::cos(angle);
    const double sin_a = std::sin(angle);
    for (Eigen::Index d = 0; d < geo.n_detectors; ++d) {
      const double value = sino(v, d);
      trace_ray(geo, cos_a, sin_a, detector_offset(geo, d),
                [&](Eigen::Index i, Eigen::Index j, double w) {
                  img(i, j) += w * value;
                });
    }
  }
  return img;
}

Image fbp(const Sinogram& sino, const Geometry& geo, FbpFilter filter) {
  geo.validate();
  check_sinogram(sino, geo);
  const Eigen::Index n = geo.image_size;
  const Eigen::Index n_det = geo.n_detectors;
  const Eigen::Index n_views = geo.n_views_full;

  Eigen::Index padded = 1;
  while (padded < 2 * n_det) padded *= 2;
  const Eigen::VectorXd response = ramp_filter(padded, filter);

  // Filter every view row; the 1/detector_spacing factor converts the
  // index-space convolution back to physical units.
  Sinogram filtered(n_views, n_det);
  Eigen::FFT<double> fft;
  Eigen::VectorXd row = Eigen::VectorXd::Zero(padded);
  for (Eigen::Index v = 0; v < n_views; ++v) {
    row.setZero();
    row.head(n_det) = sino.row(v).transpose();
    Eigen::VectorXcd spectrum;
    fft.fwd(spectrum, row);
    spectrum.array() *= response.array();
    Eigen::VectorXd back;
    fft.inv(back, spectrum);
    filtered.row(v) = back.head(n_det).transpose() / geo.detector_spacing;
  }

  // Pixel-driven back-projection with linear detector interpolation.
  const double half_pix = static_cast<double>(n - 1) / 2.0;
  const double half_det = static_cast<double>(n_det - 1) / 2.0;
  Image img = Image::Zero(n, n);
  for (Eigen::Index v = 0; v < n_views; ++v) {
    const double angle = geo.view_angle(v);
    const double cos_a = std::cos(angle);
    const double sin_a = std::sin(angle);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double y = (static_cast<double>(i) - half_pix) * geo.pixel_spacing;
      for (Eigen::Index j = 0; j < n; ++j) {
        const double x =
            (static_cast<double>(j) - half_pix) * geo.pixel_spacing;
        const double t = x * cos_a + y * sin_a;
        const double pos = t / geo.detector_spacing + half_det;
        const double fl = std::floor(pos);
        const Eigen::Index d0 = static_cast<Eigen::Index>(fl);
        const double w = pos - fl;
        double q = 0.0;
        if (d0 >= 0 && d0 < n_det) q += (1.0 - w) * filtered(v, d0);
        if (d0 + 1 >= 0 && d0 + 1 < n_det) q += w * filtered(v, d0 + 1);
        img(i, j) += q;
      }
    }
  }
  img *= kPi / (2.0 * static_cast<double>(n_views));
  return img;
}

Sinogram select_views(const Sinogram& full, const ViewSelector& sel) {
  sel.validate();
  if (full.rows() != sel.full_view_count)
    throw std::invalid_argument("sinogram view count does not match selector");
  Sinogram sparse(sel.sparse_view_count(), full.cols());
  for (Eigen::Index j = 0; j < sparse.rows(); ++j)
    sparse.row(j) = full.row(sel.offset + j * sel.rate);
  return sparse;
}

Sinogram embed_views(const Sinogram& sparse, const ViewSelector& sel) {
  sel.validate();
  if (sparse.rows() * sel.rate != sel.full_view_count)
    throw std::invalid_argument(
        "sparse view count does not match selector partition");
  Sinogram full = Sinogram::Zero(sel.full_view_count, sparse.cols());
  for (Eigen::Index j = 0; j < sparse.rows(); ++j)
    full.row(sel.offset + j * sel.rate) = sparse.row(j);
  return full;
}

double projector_norm(const Geometry& geo, int iters) {
  geo.validate();
  if (iters < 1) throw std::invalid_argument("need at least one iteration");
  std::mt19937_64 rng(0x72616469u);
  std::normal_distribution<double> gauss;
  Image v(geo.image_size, geo.image_size);
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) v(i, j) = gauss(rng);
  double nrm = v.norm();
  if (nrm == 0.0) return 0.0;
  v /= nrm;
  double lambda_max = 0.0;
  for (int it = 0; it < iters; ++it) {
    const Image w = backproject(project(v, geo), geo);
    lambda_max = w.norm();
    if (lambda_max == 0.0) return 0.0;
    v = w / lambda_max;
  }
  return std::sqrt(lambda_max);
}

Image shepp_logan(Eigen::Index n) {
  if (n < 2) throw std::invalid_argument("phantom size must be >= 2");
  // (semi-axis a, semi-axis b, center x, center y, rotation deg, intensity)
  static constexpr double ellipses[10][6] = {
      {0.6900, 0.9200, 0.00, 0.0000, 0.0, 1.00},
      {0.6624, 0.8740, 0.00, -0.0184, 0.0, -0.80},
      {0.1100, 0.3100, 0.22, 0.0000, -18.0, -0.20},
      {0.1600, 0.4100, -0.22, 0.0000, 18.0, -0.20},
      {0.2100, 0.2500, 0.00, 0.3500, 0.0, 0.10},
      {0.0460, 0.0460, 0.00, 0.1000, 0.0, 0.10},
      {0.0460, 0.0460, 0.00, -0.1000, 0.0, 0.10},
      {0.0460, 0.0230, -0.08, -0.6050, 0.0, 0.10},
      {0.0230, 0.0230, 0.00, -0.6060, 0.0, 0.10},
      {0.0230, 0.0460, 0.06, -0.6050, 0.0, 0.10},
  };
  Image img(n, n);
  const double step = 2.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = 1.0 - (static_cast<double>(i) + 0.5) * step;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double x = (static_cast<double>(j) + 0.5) * step - 1.0;
      double value = 0.0;
      for (const auto& e : ellipses) {
        const double phi = e[4] * kPi / 180.0;
        const double dx = x - e[2];
        const double dy = y - e[3];
        const double u = dx * std::cos(phi) + dy * std::sin(phi);
        const double v = -dx * std::sin(phi) + dy * std::cos(phi);
        if ((u / e[0]) * (u / e[0]) + (v / e[1]) * (v / e[1]) <= 1.0)
          value += e[5];
      }
      img(i, j) = std::clamp(value, 0.0, 1.0);
    }
  }
  return img;
}

}  // namespace lama
