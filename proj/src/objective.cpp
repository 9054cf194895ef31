#include "lama/objective.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace lama {

namespace {

void check_image(const Problem& p, const Image& x) {
  if (x.rows() != p.geometry.image_size || x.cols() != p.geometry.image_size)
    throw std::invalid_argument("image does not match the geometry");
}

void check_sino(const Problem& p, const Sinogram& z, const char* what) {
  if (z.rows() != p.geometry.n_views_full ||
      z.cols() != p.geometry.n_detectors)
    throw std::invalid_argument(std::string(what) +
                                " does not match the geometry");
}

}  // namespace

void Problem::validate() const {
  geometry.validate();
  selector.validate();
  if (selector.full_view_count != geometry.n_views_full)
    throw std::invalid_argument("selector does not cover the full view count");
  if (measured.rows() != selector.sparse_view_count() ||
      measured.cols() != geometry.n_detectors)
    throw std::invalid_argument("measured sinogram has the wrong shape");
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  reg_x.validate();
  reg_z.validate();
}

double f_value_with(const Problem& p, const Sinogram& ax, const Sinogram& z) {
  check_sino(p, ax, "projected image");
  check_sino(p, z, "sinogram");
  const Sinogram r = ax - z;
  const Sinogram d = select_views(z, p.selector) - p.measured;
  return 0.5 * r.squaredNorm() + 0.5 * p.lambda * d.squaredNorm();
}

Image grad_f_x_with(const Problem& p, const Sinogram& ax, const Sinogram& z) {
  check_sino(p, ax, "projected image");
  check_sino(p, z, "sinogram");
  return backproject(ax - z, p.geometry);
}

Sinogram grad_f_z_with(const Problem& p, const Sinogram& ax,
                       const Sinogram& z) {
  check_sino(p, ax, "projected image");
  check_sino(p, z, "sinogram");
  Sinogram g = -(ax - z);
  g += p.lambda *
       embed_views(select_views(z, p.selector) - p.measured, p.selector);
  return g;
}

double phi_eps_value_with(const Problem& p, const Sinogram& ax,
                          const Image& x, const Sinogram& z, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  check_image(p, x);
  return f_value_with(p, ax, z) + smoothed_value(p.reg_x, x, eps) +
         smoothed_value(p.reg_z, z, eps);
}

PhiGradient grad_phi_eps_with(const Problem& p, const Sinogram& ax,
                              const Image& x, const Sinogram& z, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  check_image(p, x);
  PhiGradient g;
  g.x = grad_f_x_with(p, ax, z) + smoothed_gradient(p.reg_x, x, eps);
  g.z = grad_f_z_with(p, ax, z) + smoothed_gradient(p.reg_z, z, eps);
  return g;
}

double f_value(const Problem& p, const Image& x, const Sinogram& z) {
  check_image(p, x);
  return f_value_with(p, project(x, p.geometry), z);
}

Image grad_f_x(const Problem& p, const Image& x, const Sinogram& z) {
  check_image(p, x);
  return grad_f_x_with(p, project(x, p.geometry), z);
}

Sinogram grad_f_z(const Problem& p, const Image& x, const Sinogram& z) {
  check_image(p, x);
  return grad_f_z_with(p, project(x, p.geometry), z);
}

double phi_value(const Problem& p, const Image& x, const Sinogram& z) {
  return f_value(p, x, z) + l21_norm(feature_forward(p.reg_x, x)) +
         l21_norm(feature_forward(p.reg_z, z));
}

double phi_eps_value(const Problem& p, const Iterate& it) {
  return phi_eps_value_with(p, project(it.x, p.geometry), it.x, it.z, it.eps);
}

PhiGradient grad_phi_eps(const Problem& p, const Iterate& it) {
  return grad_phi_eps_with(p, project(it.x, p.geometry), it.x, it.z, it.eps);
}

double estimate_data_lipschitz(const Problem& p, int iters) {
  p.validate();
  if (iters < 1) throw std::invalid_argument("need at least one iteration");
  std::mt19937_64 rng(0x68657373u);
  std::normal_distribution<double> gauss;
  Image vx(p.geometry.image_size, p.geometry.image_size);
  Sinogram vz(p.geometry.n_views_full, p.geometry.n_detectors);
  for (Eigen::Index i = 0; i < vx.rows(); ++i)
    for (Eigen::Index j = 0; j < vx.cols(); ++j) vx(i, j) = gauss(rng);
  for (Eigen::Index i = 0; i < vz.rows(); ++i)
    for (Eigen::Index j = 0; j < vz.cols(); ++j) vz(i, j) = gauss(rng);
  double nrm = std::sqrt(vx.squaredNorm() + vz.squaredNorm());
  if (nrm == 0.0) return 0.0;
  vx /= nrm;
  vz /= nrm;
  double lambda_max = 0.0;
  for (int it = 0; it < iters; ++it) {
    // Hessian-vector product of the quadratic data term
    const Sinogram r = project(vx, p.geometry) - vz;
    Image hx = backproject(r, p.geometry);
    Sinogram hz =
        -r + p.lambda * embed_views(select_views(vz, p.selector), p.selector);
    lambda_max = std::sqrt(hx.squaredNorm() + hz.squaredNorm());
    if (lambda_max == 0.0) return 0.0;
    vx = hx / lambda_max;
    vz = hz / lambda_max;
  }
  return lambda_max;
}

}  // namespace lama
