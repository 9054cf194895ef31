#pragma once

#include "lama/regnet.hpp"
#include "lama/tomo.hpp"

#include <utility>

namespace lama {

/// Predicts a sinogram rotated by one full-scan view step. Nearest copies
/// the input; linear-interp blends each view with its cyclic successor;
/// learned runs a single-channel conv stack loaded from a weight file.
struct ViewShiftOperator {
  enum class Kind { Nearest, LinearInterp, Learned };

  Kind kind = Kind::Nearest;
  double shift_fraction = 0.0;  // LinearInterp blend toward the next view
  RegularizerNet weights;       // Learned only

  void validate() const;
};

ViewShiftOperator nearest_operator();
/// Blend weight 1/rate: one full-scan step covers 1/rate of the gap
/// between adjacent measured views.
ViewShiftOperator linear_interp_operator(Eigen::Index rate);
/// net must map one channel to one channel (same spatial shape).
ViewShiftOperator learned_operator(RegularizerNet net);

/// One application of the shift operator to a sparse-view sinogram.
Sinogram interp_step(const ViewShiftOperator& op, const Sinogram& s);

/// Interleaves [s0, op(s0), op²(s0), ...] into full view order: the i-th
/// repeated application lands on rows {i, i+rate, i+2·rate, ...}. Rows
/// at offset 0 are the measured views, copied untouched.
Sinogram assemble_full(const ViewShiftOperator& op, const Sinogram& s0,
                       const ViewSelector& sel);

/// Initial point for the solver: z0 = assemble_full(...), x0 = fbp(z0).
std::pair<Image, Sinogram> init_reconstruct(const ViewShiftOperator& op,
                                            const Sinogram& s0,
                                            const ViewSelector& sel,
                                            const Geometry& geo);

}  // namespace lama
