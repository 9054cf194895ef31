#pragma once

#include "lama/regnet.hpp"
#include "lama/tomo.hpp"

namespace lama {

/// Everything a reconstruction run minimizes over: scan geometry, the view
/// subsampling pattern, the measured sparse sinogram, the data-consistency
/// weight, and the two feature networks regularizing image and sinogram.
struct Problem {
  Geometry geometry;
  ViewSelector selector;
  Sinogram measured;
  double lambda = 1.0;
  RegularizerNet reg_x;
  RegularizerNet reg_z;

  void validate() const;
};

/// A point in the joint search space plus the active smoothing level.
struct Iterate {
  Image x;
  Sinogram z;
  double eps = 1.0;
};

/// Stacked gradient of the smoothed objective; norm() is the Euclidean
/// norm of the concatenated blocks.
struct PhiGradient {
  Image x;
  Sinogram z;

  double norm() const {
    return std::sqrt(x.squaredNorm() + z.squaredNorm());
  }
};

/// ½‖Ax − z‖² + (λ/2)‖P₀z − s‖²: squared projector inconsistency plus
/// squared mismatch with the measured views.
double f_value(const Problem& p, const Image& x, const Sinogram& z);

/// ∇_x of f_value: Aᵀ(Ax − z).
Image grad_f_x(const Problem& p, const Image& x, const Sinogram& z);

/// ∇_z of f_value: −(Ax − z) + λ·embed(select(z) − s).
Sinogram grad_f_z(const Problem& p, const Image& x, const Sinogram& z);

/// Nonsmooth composite: f plus the exact L2,1 feature norms of both
/// regularizers.
double phi_value(const Problem& p, const Image& x, const Sinogram& z);

/// Smoothed composite at the iterate's eps.
double phi_eps_value(const Problem& p, const Iterate& it);

/// Gradient of the smoothed composite, both blocks.
PhiGradient grad_phi_eps(const Problem& p, const Iterate& it);

/// Largest-eigenvalue estimate of the (constant) Hessian of f by power
/// iteration on (v_x, v_z) ↦ (Aᵀ(Av_x − v_z), −(Av_x − v_z) + λPᵀPv_z).
/// Deterministic; used to pick candidate step sizes.
double estimate_data_lipschitz(const Problem& p, int iters = 80);

// Variants taking ax = project(x) precomputed. The plain functions above
// delegate to these, so cached and fresh evaluations produce bit-identical
// results; the solver leans on that to keep its trace re-checkable.
double f_value_with(const Problem& p, const Sinogram& ax, const Sinogram& z);
Image grad_f_x_with(const Problem& p, const Sinogram& ax, const Sinogram& z);
Sinogram grad_f_z_with(const Problem& p, const Sinogram& ax,
                       const Sinogram& z);
double phi_eps_value_with(const Problem& p, const Sinogram& ax,
                          const Image& x, const Sinogram& z, double eps);
PhiGradient grad_phi_eps_with(const Problem& p, const Sinogram& ax,
                              const Image& x, const Sinogram& z, double eps);

}  // namespace lama
