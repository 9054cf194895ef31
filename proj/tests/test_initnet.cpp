#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lama/initnet.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace lama;

namespace {

double binom(int n, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i)
    r = r * static_cast<double>(n - i) / static_cast<double>(i + 1);
  return r;
}

}  // namespace

TEST_CASE("operator validation") {
  CHECK_NOTHROW(nearest_operator().validate());
  CHECK_NOTHROW(linear_interp_operator(4).validate());
  CHECK_THROWS_AS(linear_interp_operator(0), std::invalid_argument);

  ViewShiftOperator bad = linear_interp_operator(4);
  bad.shift_fraction = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  // a learned operator must map one channel back to one channel
  CHECK_NOTHROW(learned_operator(identity_net()).validate());
  CHECK_THROWS_AS(learned_operator(tv_net()).validate(),
                  std::invalid_argument);
}

TEST_CASE("nearest step is the identity") {
  std::mt19937_64 rng(60);
  const Sinogram s = oracle::random_matrix(5, 7, rng);
  CHECK((interp_step(nearest_operator(), s) - s).lpNorm<Eigen::Infinity>() ==
        0.0);
}

TEST_CASE("linear step blends each view with its cyclic successor") {
  std::mt19937_64 rng(61);
  const Sinogram s = oracle::random_matrix(6, 4, rng);
  const ViewShiftOperator op = linear_interp_operator(4);
  const double w = 0.25;
  const Sinogram out = interp_step(op, s);
  for (Eigen::Index j = 0; j < 6; ++j) {
    const Eigen::RowVectorXd expect =
        (1.0 - w) * s.row(j) + w * s.row((j + 1) % 6);
    CHECK((out.row(j) - expect).lpNorm<Eigen::Infinity>() < 1e-15);
  }
}

TEST_CASE("repeated linear steps follow the binomial composition") {
  std::mt19937_64 rng(62);
  const Sinogram s = oracle::random_matrix(5, 3, rng);
  const ViewShiftOperator op = linear_interp_operator(3);
  const double w = 1.0 / 3.0;

  Sinogram twice = interp_step(op, interp_step(op, s));
  for (Eigen::Index j = 0; j < 5; ++j) {
    Eigen::RowVectorXd expect = Eigen::RowVectorXd::Zero(3);
    for (int m = 0; m <= 2; ++m)
      expect += binom(2, m) * std::pow(1.0 - w, 2 - m) * std::pow(w, m) *
                s.row((j + m) % 5);
    CHECK((twice.row(j) - expect).lpNorm<Eigen::Infinity>() < 1e-14);
  }
}

TEST_CASE("identity-net learned step equals the nearest step") {
  std::mt19937_64 rng(63);
  const Sinogram s = oracle::random_matrix(6, 8, rng);
  const Sinogram out = interp_step(learned_operator(identity_net()), s);
  CHECK((out - s).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("assembled sinogram keeps measured rows untouched") {
  ViewSelector sel;
  sel.rate = 4;
  sel.offset = 0;
  sel.full_view_count = 24;
  std::mt19937_64 rng(64);
  const Sinogram s0 = oracle::random_matrix(6, 10, rng);

  for (const auto& op : {nearest_operator(), linear_interp_operator(4)}) {
    const Sinogram full = assemble_full(op, s0, sel);
    REQUIRE(full.rows() == 24);
    const Sinogram back = select_views(full, sel);
    CHECK((back - s0).lpNorm<Eigen::Infinity>() == 0.0);
  }

  // interleaving assumes the measured rows sit at offset zero
  ViewSelector shifted = sel;
  shifted.offset = 1;
  CHECK_THROWS_AS(assemble_full(nearest_operator(), s0, shifted),
                  std::invalid_argument);
  // and the sparse stack must have the expected row count
  CHECK_THROWS_AS(
      assemble_full(nearest_operator(),
                    Eigen::MatrixXd::Zero(5, 10).eval(), sel),
      std::invalid_argument);
}

TEST_CASE("nearest assembly replicates each measured view p times") {
  ViewSelector sel;
  sel.rate = 3;
  sel.full_view_count = 9;
  std::mt19937_64 rng(65);
  const Sinogram s0 = oracle::random_matrix(3, 4, rng);
  const Sinogram full = assemble_full(nearest_operator(), s0, sel);
  for (Eigen::Index j = 0; j < 3; ++j)
    for (Eigen::Index i = 0; i < 3; ++i)
      CHECK((full.row(i + 3 * j) - s0.row(j)).lpNorm<Eigen::Infinity>() ==
            0.0);
}

TEST_CASE("assembly is exact for a rotation-invariant object") {
  // a centered disk projects to (nearly) the same profile at every angle, so
  // view interpolation cannot lose anything
  const Eigen::Index n = 64;
  const double spacing = 2.0 / static_cast<double>(n);
  Geometry geo;
  geo.image_size = n;
  geo.n_detectors = n;
  geo.n_views_full = 24;
  geo.detector_spacing = spacing;
  geo.pixel_spacing = spacing;
  Image disk(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double y = (i - (n - 1) / 2.0) * spacing;
      const double x = (j - (n - 1) / 2.0) * spacing;
      disk(i, j) = x * x + y * y <= 0.25 ? 1.0 : 0.0;
    }
  ViewSelector sel;
  sel.rate = 4;
  sel.full_view_count = 24;
  const Sinogram full = project(disk, geo);
  const Sinogram assembled =
      assemble_full(linear_interp_operator(4), select_views(full, sel), sel);
  // discretization leaves small view-to-view wiggle; interpolation must not
  // add more than that
  const double scale = full.lpNorm<Eigen::Infinity>();
  CHECK((assembled - full).lpNorm<Eigen::Infinity>() / scale < 0.05);
}

TEST_CASE("rate one passes the measured sinogram straight through") {
  ViewSelector sel;
  sel.rate = 1;
  sel.full_view_count = 6;
  std::mt19937_64 rng(66);
  const Sinogram s0 = oracle::random_matrix(6, 5, rng);
  const Sinogram full = assemble_full(linear_interp_operator(1), s0, sel);
  CHECK((full - s0).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("init pairs the assembled sinogram with its fbp image") {
  Geometry geo;
  geo.image_size = 32;
  geo.n_detectors = 32;
  geo.n_views_full = 36;
  ViewSelector sel;
  sel.rate = 6;
  sel.full_view_count = 36;
  const Image phantom = shepp_logan(32);
  const Sinogram sparse = select_views(project(phantom, geo), sel);

  const auto op = linear_interp_operator(6);
  const auto [x0, z0] = init_reconstruct(op, sparse, sel, geo);
  CHECK((z0 - assemble_full(op, sparse, sel)).lpNorm<Eigen::Infinity>() ==
        0.0);
  CHECK((x0 - fbp(z0, geo)).lpNorm<Eigen::Infinity>() == 0.0);

  // the interpolated start must beat a zero-filled one
  const Image zero_fill = fbp(embed_views(sparse, sel), geo);
  const double mse_interp = (x0 - phantom).squaredNorm();
  const double mse_zero = (zero_fill - phantom).squaredNorm();
  CHECK(mse_interp < mse_zero);
}
