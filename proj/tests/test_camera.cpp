#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "resdepth/camera.hpp"
#include "resdepth/stereo.hpp"

using namespace resdepth;

namespace {
constexpr double kPi = 3.14159265358979323846;
double rad(double d) { return d * kPi / 180.0; }
}  // namespace

TEST_CASE("nadir camera maps cell centers to pixel centers") {
  const auto cam = make_affine_camera(0.0, 0.0, 0.5, {10.0, 20.0}, 64, 64);
  const auto p = cam.project({10.25, 20.25, 0.0});
  CHECK(p.x() == doctest::Approx(0.0));
  CHECK(p.y() == doctest::Approx(0.0));
  const auto q = cam.project({13.75, 21.25, 50.0});
  CHECK(q.x() == doctest::Approx(7.0));
  CHECK(q.y() == doctest::Approx(2.0));
  CHECK(cam.geometric_off_nadir_deg() == doctest::Approx(0.0));
  CHECK_NOTHROW(cam.validate());
}

TEST_CASE("ray direction follows azimuth and off-nadir") {
  for (double az : {0.0, 37.0, 135.0, 290.0})
    for (double on : {0.0, 12.0, 31.0}) {
      const auto cam = make_affine_camera(az, on, 0.5, {0.0, 0.0}, 10, 10, 23.0);
      const Eigen::Vector3d oracle =
          Eigen::Vector3d(std::tan(rad(on)) * std::sin(rad(az)), std::tan(rad(on)) * std::cos(rad(az)), 1.0)
              .normalized();
      CHECK((cam.ray_direction() - oracle).norm() < 1e-12);
      CHECK((cam.A * cam.ray_direction()).norm() < 1e-12);
      CHECK(cam.geometric_off_nadir_deg() == doctest::Approx(on).epsilon(1e-9));
      const Eigen::Vector3d p(3.0, -7.0, 12.0);
      const Eigen::Vector2d g = p.head<2>() - p.z() * cam.lean();
      CHECK((cam.project(p) - cam.project({g.x(), g.y(), 0.0})).norm() < 1e-9);
      const auto px = cam.project({g.x(), g.y(), 0.0});
      CHECK((cam.ground_point(px.x(), px.y()) - g).norm() < 1e-9);
    }
}

TEST_CASE("camera validation") {
  auto cam = make_affine_camera(10.0, 20.0, 0.5, {0.0, 0.0}, 10, 10);
  CHECK_NOTHROW(cam.validate());
  cam.off_nadir_deg = 25.0;
  CHECK_THROWS(cam.validate());
  cam.off_nadir_deg = 20.0;
  cam.sun_direction = {0.0, 0.0, 2.0};
  CHECK_THROWS(cam.validate());
  cam.sun_direction = sun_vector(180.0, 45.0);
  CHECK(cam.sun_direction.norm() == doctest::Approx(1.0));
  CHECK(cam.sun_direction.y() < 0.0);
  cam.width = 0;
  CHECK_THROWS(cam.validate());
  CHECK_THROWS(make_affine_camera(0.0, 10.0, 0.0, {0.0, 0.0}, 4, 4));
}

TEST_CASE("intersection angle equals the angle between rays") {
  const auto a = make_affine_camera(0.0, 20.0, 0.5, {0.0, 0.0}, 4, 4);
  const auto b = make_affine_camera(180.0, 10.0, 0.5, {0.0, 0.0}, 4, 4);
  CHECK(intersection_angle_deg(a, b) == doctest::Approx(30.0).epsilon(1e-9));
  const auto c = make_affine_camera(90.0, 20.0, 0.5, {0.0, 0.0}, 4, 4);
  const double oracle = std::acos(a.ray_direction().dot(c.ray_direction())) * 180.0 / kPi;
  CHECK(intersection_angle_deg(a, c) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(intersection_angle_deg(a, a) == doctest::Approx(0.0));
}

TEST_CASE("rectified pair shares rows and has height-linear disparity") {
  const auto g = testutil::grid(200, 160, 0.25, 5.0, 7.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ux(5.0, 55.0), uy(7.0, 47.0), uz(-3.0, 30.0);
  for (auto [az_a, on_a, az_b, on_b] : {std::array<double, 4>{10, 15, 200, 12}, {80, 25, 120, 8},
                                        {300, 5, 300, 30}, {0, 0, 45, 20}}) {
    const auto a = make_affine_camera(az_a, on_a, 0.5, {0.0, 0.0}, 10, 10);
    const auto b = make_affine_camera(az_b, on_b, 0.5, {0.0, 0.0}, 10, 10);
    const double zref = 4.0;
    const auto [ra, rb] = rectify_pair(a, b, g, -3.0, 30.0, 0.5, zref);
    CHECK((ra.ray_direction() - a.ray_direction()).norm() < 1e-12);
    CHECK((rb.ray_direction() - b.ray_direction()).norm() < 1e-12);
    CHECK(ra.azimuth_deg == a.azimuth_deg);
    CHECK(rb.off_nadir_deg == b.off_nadir_deg);
    const auto coeffs = pair_coefficients(ra, rb, zref);
    for (int k = 0; k < 50; ++k) {
      const Eigen::Vector3d p(ux(rng), uy(rng), uz(rng));
      const auto pa = ra.project(p), pb = rb.project(p);
      CHECK(pa.y() == doctest::Approx(pb.y()).epsilon(1e-9));
      CHECK(pa.x() >= -0.5);
      CHECK(pa.x() <= ra.width - 0.5);
      CHECK(pa.y() <= ra.height - 0.5);
      const double d = pa.x() - pb.x();
      CHECK(coeffs.height(d) == doctest::Approx(p.z()).epsilon(1e-9));
      CHECK(coeffs.disparity(p.z()) == doctest::Approx(d).epsilon(1e-9));
    }
    const double c = (ra.A(0, 2) - rb.A(0, 2));
    CHECK(std::abs(c) == doctest::Approx((a.lean() - b.lean()).norm() / 0.5).epsilon(1e-9));
  }
}

TEST_CASE("identical rays give zero parallax") {
  const auto g = testutil::grid(40, 40);
  const auto a = make_affine_camera(30.0, 10.0, 0.5, {0.0, 0.0}, 10, 10);
  const auto [ra, rb] = rectify_pair(a, a, g, 0.0, 5.0, 0.5, 2.0);
  const auto c = pair_coefficients(ra, rb, 2.0);
  CHECK(c.alpha == 0.0);
  CHECK(c.beta == 2.0);
}

TEST_CASE("pair_coefficients rejects cameras in different frames") {
  const auto a = make_affine_camera(0.0, 10.0, 0.5, {0.0, 0.0}, 10, 10, 0.0);
  const auto b = make_affine_camera(90.0, 10.0, 0.5, {0.0, 0.0}, 10, 10, 30.0);
  CHECK_THROWS(pair_coefficients(a, b));
}

TEST_CASE("camera json round trip") {
  std::vector<AffineCamera> cams{make_affine_camera(12.0, 20.0, 0.5, {1.0, 2.0}, 30, 40, 15.0),
                                 make_affine_camera(200.0, 3.0, 0.25, {0.0, 0.0}, 8, 9)};
  cams[0].sun_direction = sun_vector(150.0, 40.0);
  cams[1].timestamp_days = 412.5;
  const auto back = cameras_from_json(cameras_to_json(cams));
  REQUIRE(back.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(back[i].A == cams[i].A);
    CHECK(back[i].b == cams[i].b);
    CHECK(back[i].sun_direction == cams[i].sun_direction);
    CHECK(back[i].timestamp_days == cams[i].timestamp_days);
    CHECK(back[i].width == cams[i].width);
  }
}
