#include <doctest.h>

#include "gradient_check.hpp"
#include "gramdyn/geometry.hpp"
#include "gramdyn/point_cloud.hpp"
#include "gramdyn/random.hpp"
#include "gramdyn/synth.hpp"

using namespace gramdyn;

namespace {

Camera simple_camera() {
  Camera cam;
  cam.fx = cam.fy = 100;
  cam.cx = cam.cy = 50;
  return cam;
}

Camera random_camera(SequentialRng& rng) {
  const Eigen::Vector3d eye(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(2, 4));
  const Eigen::Vector3d target(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 0);
  return look_at<double>(eye, target, {0, 0, 1}, rng.uniform(60, 140), rng.uniform(60, 140),
                         rng.uniform(30, 50), rng.uniform(25, 45));
}

ColorImage gray(Eigen::Index H, Eigen::Index W) { return ColorImage::Constant(H * W, 3, 0.5f); }

}  // namespace

TEST_CASE("unproject the principal ray and empty depth") {
  const DepthMap depth = DepthMap::Ones(101, 101);
  const PointCloud pc = unproject(depth, simple_camera(), gray(101, 101), 3);
  REQUIRE(pc.size() == 101 * 101);
  const auto at = static_cast<Eigen::Index>(50 * 101 + 50);
  CHECK(pc.positions.row(at).isApprox(Eigen::RowVector3d(0, 0, 1)));
  CHECK(pc.source[static_cast<std::size_t>(at)].frame == 3);
  CHECK(pc.source[static_cast<std::size_t>(at)].row == 50);
  CHECK(pc.source[static_cast<std::size_t>(at)].col == 50);
  CHECK(pc.colors(at, 1) == 0.5f);

  CHECK(unproject(DepthMap::Zero(7, 9), simple_camera(), gray(7, 9)).size() == 0);
  CHECK_THROWS_AS(unproject(DepthMap::Ones(7, 9), simple_camera(), gray(7, 8)), SchemaError);
}

TEST_CASE("project then unproject returns every source pixel") {
  SequentialRng rng(5, 0);
  const Eigen::Index H = 40, W = 56;
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Camera cam = random_camera(rng);
    REQUIRE(cam.valid());
    DepthMap depth(H, W);
    for (Eigen::Index i = 0; i < depth.size(); ++i) {
      depth.data()[i] = rng.uniform() < 0.1 ? 0.0f : static_cast<float>(rng.uniform(0.5, 6));
    }
    const PointCloud pc = unproject(depth, cam, gray(H, W));
    CHECK(pc.size() == static_cast<std::size_t>((depth.array() > 0).count()));
    for (std::size_t i = 0; i < pc.size(); ++i) {
      const Eigen::Vector3d X = pc.positions.row(static_cast<Eigen::Index>(i)).transpose();
      const Eigen::Vector3d xc = cam.to_camera(X);
      const double u = cam.fx * xc.x() / xc.z() + cam.cx;
      const double v = cam.fy * xc.y() / xc.z() + cam.cy;
      worst = std::max({worst, std::abs(u - pc.source[i].col), std::abs(v - pc.source[i].row)});
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("project examples") {
  const DepthMap flat = DepthMap::Ones(101, 101);
  const Camera cam = simple_camera();
  const auto s = project<double>({0, 0, 1}, cam, flat);
  CHECK(s.visible);
  CHECK(s.u == 50.0);
  CHECK(s.v == 50.0);
  CHECK(s.d == 1.0);
  CHECK(s.r_d == 0.0);

  CHECK_FALSE(project<double>({0, 0, -1}, cam, flat).visible);
  CHECK_FALSE(project<double>({0.6, 0, 1}, cam, flat).visible);  // u = 110
  // Behind the observed surface by more than the margin: occluded.
  CHECK(project<double>({0, 0, 1.5}, cam, flat).visible);
  CHECK_FALSE(project<double>({0, 0, 1.5}, cam, flat, 0.1).visible);
  CHECK(project<double>({0, 0, 0.5}, cam, flat, 0.1).visible);

  DepthMap holed = flat;
  holed(50, 51) = 0;
  CHECK_FALSE(project<double>({0.001, 0, 1}, cam, holed).visible);
}

TEST_CASE("a plane seen from a second camera has zero residual") {
  // Camera B looks straight down at the plane z = 0, so its depth map is
  // constant and bilinear sampling is exact.
  const Camera b = look_at<double>({0.2, -0.1, 4}, {0.2, -0.1, 0}, {0, 1, 0}, 90, 90, 40, 30);
  const DepthMap depth = DepthMap::Constant(61, 81, 4.0f);
  SequentialRng rng(8, 0);
  int visible = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Camera a = random_camera(rng);
    const Eigen::Vector3d ray = a.rotation.transpose() *
                                Eigen::Vector3d((rng.uniform(0, 60) - a.cx) / a.fx,
                                                (rng.uniform(0, 50) - a.cy) / a.fy, 1);
    const Eigen::Vector3d center = a.center();
    const Eigen::Vector3d X = center - (center.z() / ray.z()) * ray;
    const auto s = project(X, b, depth);
    if (!s.visible) continue;
    ++visible;
    CHECK(std::abs(s.r_d) < 1e-5);
  }
  CHECK(visible > 20);
}

TEST_CASE("bilinear sampling") {
  // D = 1 + 0.5 u - 0.25 v + 0.125 u v is reproduced exactly.
  DepthMap surface(6, 7);
  for (Eigen::Index r = 0; r < 6; ++r) {
    for (Eigen::Index c = 0; c < 7; ++c) surface(r, c) = float(1 + 0.5 * c - 0.25 * r + 0.125 * c * r);
  }
  SequentialRng rng(2, 0);
  for (int i = 0; i < 200; ++i) {
    const double u = rng.uniform(0, 6), v = rng.uniform(0, 5);
    CHECK(*bilinear(surface, u, v) == doctest::Approx(1 + 0.5 * u - 0.25 * v + 0.125 * u * v).epsilon(1e-12));
  }
  CHECK(*bilinear(surface, 6, 5) == doctest::Approx(surface(5, 6)));
  CHECK_FALSE(bilinear(surface, -0.01, 1).has_value());
  CHECK_FALSE(bilinear(surface, 1, 5.01).has_value());
  surface(2, 3) = 0;
  CHECK_FALSE(bilinear_depth(surface, 2.5, 1.5).has_value());
  CHECK(bilinear_depth(surface, 4.5, 1.5).has_value());
}

TEST_CASE("depth gradient examples") {
  CHECK(depth_gradient(DepthMap::Constant(5, 6, 2.0f)).du.isZero(0.0));
  CHECK(depth_gradient(DepthMap::Constant(5, 6, 2.0f)).dv.isZero(0.0));

  DepthMap ramp(5, 8);
  for (Eigen::Index c = 0; c < 8; ++c) ramp.col(c).setConstant(float(1 + 0.01 * c));
  const auto g = depth_gradient(ramp);
  for (Eigen::Index r = 0; r < 5; ++r) {
    for (Eigen::Index c = 0; c < 8; ++c) {
      CHECK(g.du(r, c) == doctest::Approx(0.01).epsilon(1e-4));
      CHECK(g.dv(r, c) == 0.0f);
    }
  }

  ramp(2, 4) = 0;
  const auto holed = depth_gradient(ramp);
  for (auto [r, c] : {std::pair{2, 4}, {2, 3}, {2, 5}, {1, 4}, {3, 4}}) {
    CHECK(holed.du(r, c) == 0.0f);
    CHECK(holed.dv(r, c) == 0.0f);
  }
  CHECK(holed.du(2, 2) != 0.0f);
}

TEST_CASE("depth gradient matches differences of the bilinear surface") {
  DepthMap smooth(30, 40);
  for (Eigen::Index r = 0; r < 30; ++r) {
    for (Eigen::Index c = 0; c < 40; ++c) {
      smooth(r, c) = float(2 + 0.02 * c - 0.015 * r + 0.0004 * c * r);
    }
  }
  const auto g = depth_gradient(smooth.cast<double>().eval());
  const DepthGradient<float> gf = depth_gradient(smooth);
  const RowMatrix<double> surface = smooth.cast<double>();
  const double h = 1e-3;
  for (Eigen::Index r = 1; r < 29; ++r) {
    for (Eigen::Index c = 1; c < 39; ++c) {
      const double u = double(c), v = double(r);
      const double du = (*bilinear(surface, u + h, v) - *bilinear(surface, u - h, v)) / (2 * h);
      const double dv = (*bilinear(surface, u, v + h) - *bilinear(surface, u, v - h)) / (2 * h);
      CHECK(std::abs(g.du(r, c) - du) < 1e-6);
      CHECK(std::abs(g.dv(r, c) - dv) < 1e-6);
      CHECK(std::abs(double(gf.du(r, c)) - du) < 1e-5);
    }
  }
}

TEST_CASE("residual gradient closed forms") {
  const Camera cam = simple_camera();
  const DepthMap flat = DepthMap::Constant(101, 101, 2.0f);
  const auto g = residual_gradient<double>({0.1, -0.2, 1.5}, cam, flat, depth_gradient(flat));
  CHECK(g.isApprox(Eigen::Vector3d(0, 0, 1)));

  DepthMap ramp(101, 101);
  for (Eigen::Index c = 0; c < 101; ++c) ramp.col(c).setConstant(float(1 + 0.01 * c));
  const double z = 2.0;
  const auto r = residual_gradient<double>({0, 0, z}, cam, ramp, depth_gradient(ramp));
  const Eigen::Vector3d expected = Eigen::Vector3d(0, 0, 1) - 0.01 * Eigen::Vector3d(cam.fx / z, 0, 0);
  CHECK((r - expected).norm() < 1e-6);

  CHECK_THROWS_AS(residual_gradient<double>({0, 0, -1}, cam, flat, depth_gradient(flat)),
                  ContractViolation);
}

TEST_CASE("residual gradient agrees with finite differences on the fixture") {
  const RenderedScene scene = render_scene(SceneSpec::default_fixture());
  const auto check = gramdyn::testing::check_residual_gradient(scene, 2000, 3);
  CHECK(check.samples == 2000);
  CHECK(check.fraction() >= 0.95);
}

TEST_CASE("median valid depth") {
  CHECK(median_valid_depth(std::vector<float>{0, 3, 1, 0, 2}) == 2.0);
  CHECK(median_valid_depth(std::vector<float>{4, 0, 1, 2, 3}) == 2.5);
  CHECK(median_valid_depth(std::vector<float>{0, 0}) == 0.0);
}
