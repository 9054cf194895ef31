#include "lama/initnet.hpp"

#include <stdexcept>

namespace lama {

void ViewShiftOperator::validate() const {
  switch (kind) {
    case Kind::Nearest:
      return;
    case Kind::LinearInterp:
      if (!(shift_fraction >= 0.0 && shift_fraction <= 1.0))
        throw std::invalid_argument("shift fraction must lie in [0, 1]");
      return;
    case Kind::Learned:
      weights.validate();
      if (weights.feature_channels() != 1)
        throw std::invalid_argument(
            "learned shift operator must produce one channel");
      return;
  }
  throw std::invalid_argument("unknown shift operator kind");
}

ViewShiftOperator nearest_operator() {
  ViewShiftOperator op;
  op.kind = ViewShiftOperator::Kind::Nearest;
  return op;
}

ViewShiftOperator linear_interp_operator(Eigen::Index rate) {
  if (rate < 1) throw std::invalid_argument("rate must be >= 1");
  ViewShiftOperator op;
  op.kind = ViewShiftOperator::Kind::LinearInterp;
  op.shift_fraction = 1.0 / static_cast<double>(rate);
  return op;
}

ViewShiftOperator learned_operator(RegularizerNet net) {
  ViewShiftOperator op;
  op.kind = ViewShiftOperator::Kind::Learned;
  op.weights = std::move(net);
  op.validate();
  return op;
}

Sinogram interp_step(const ViewShiftOperator& op, const Sinogram& s) {
  op.validate();
  if (s.size() == 0) throw std::invalid_argument("empty sinogram");
  switch (op.kind) {
    case ViewShiftOperator::Kind::Nearest:
      return s;
    case ViewShiftOperator::Kind::LinearInterp: {
      const Eigen::Index v = s.rows();
      const double w = op.shift_fraction;
      Sinogram out(v, s.cols());
      for (Eigen::Index j = 0; j < v; ++j)
        out.row(j) = (1.0 - w) * s.row(j) + w * s.row((j + 1) % v);
      return out;
    }
    case ViewShiftOperator::Kind::Learned: {
      const FeatureStack f = feature_forward(op.weights, s);
      Sinogram out(s.rows(), s.cols());
      Eigen::Map<Eigen::VectorXd>(out.data(), out.size()) = f.values.col(0);
      return out;
    }
  }
  throw std::invalid_argument("unknown shift operator kind");
}

Sinogram assemble_full(const ViewShiftOperator& op, const Sinogram& s0,
                       const ViewSelector& sel) {
  sel.validate();
  if (sel.offset != 0)
    throw std::invalid_argument(
        "assembly assumes the measured views sit at offset 0");
  if (s0.rows() != sel.sparse_view_count())
    throw std::invalid_argument("sparse sinogram does not match the selector");
  Sinogram full(sel.full_view_count, s0.cols());
  Sinogram shifted = s0;
  for (Eigen::Index i = 0; i < sel.rate; ++i) {
    if (i > 0) shifted = interp_step(op, shifted);
    for (Eigen::Index j = 0; j < s0.rows(); ++j)
      full.row(i + j * sel.rate) = shifted.row(j);
  }
  return full;
}

std::pair<Image, Sinogram> init_reconstruct(const ViewShiftOperator& op,
                                            const Sinogram& s0,
                                            const ViewSelector& sel,
                                            const Geometry& geo) {
  Sinogram z0 = assemble_full(op, s0, sel);
  Image x0 = fbp(z0, geo);
  return {std::move(x0), std::move(z0)};
}

}  // namespace lama
