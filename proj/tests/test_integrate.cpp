#include <cmath>

#include "nfps/integrate.hpp"
#include "nfps/pipeline.hpp"
#include "nfps/scenes.hpp"
#include "support.hpp"

using namespace nfps;

namespace {

IntegratorConfig mode(IntegrationMode m) {
  IntegratorConfig c;
  c.mode = m;
  return c;
}

const IntegrationMode kModes[] = {IntegrationMode::least_squares, IntegrationMode::l1_admm};

LogGradients constant_gradients(int w, int h, double p, double q) {
  LogGradients g;
  g.p = Grid<double>(w, h, p);
  g.q = Grid<double>(w, h, q);
  g.mask = Mask(w, h, 1);
  return g;
}

double max_relative_error(const DepthMap& a, const DepthMap& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (!a.mask[i]) continue;
    worst = std::max(worst, std::abs(a.values[i] / b.values[i] - 1.0));
  }
  return worst;
}

SyntheticScene scene(SceneShape shape) {
  SceneSpec spec;
  spec.shape = shape;
  return make_scene(spec);
}

double mean_masked(const DepthMap& d) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    if (d.mask[i]) {
      sum += d.values[i];
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

}  // namespace

TEST_CASE("zero gradients give the prior depth") {
  const LogGradients g = constant_gradients(32, 24, 0.0, 0.0);
  const DepthMap prior = DepthMap::constant(g.mask, 0.15);
  for (IntegrationMode m : kModes) {
    const IntegrationResult r = integrate(g, prior, mode(m));
    for (std::size_t i = 0; i < r.depth.values.size(); ++i) {
      CHECK(r.depth.mask[i] == 1);
      CHECK(std::abs(r.depth.values[i] - 0.15) < 1e-12);
    }
  }
}

TEST_CASE("a log-linear ramp is recovered exactly and the prior fixes the scale") {
  const int w = 40, h = 30;
  const double b = 0.004, c = -0.0025;
  const LogGradients g = constant_gradients(w, h, b, c);
  DepthMap truth(w, h);
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      truth.values(row, col) = 0.12 * std::exp(b * col + c * row);
      truth.mask(row, col) = 1;
    }
  }
  DepthMap scaled = truth;
  for (double& v : scaled.values.values()) v *= 1.1;
  for (IntegrationMode m : kModes) {
    CHECK(max_relative_error(integrate(g, truth, mode(m)).depth, truth) < 1e-8);
    CHECK(max_relative_error(integrate(g, scaled, mode(m)).depth, scaled) < 1e-8);
  }
}

TEST_CASE("paraboloid normals integrate back to the surface") {
  const SyntheticScene s = scene(SceneShape::paraboloid);
  const LogGradients g = normals_to_log_gradients(s.normals, s.intrinsics);
  const DepthMap prior = DepthMap::constant(g.mask, mean_masked(s.depth));
  for (IntegrationMode m : kModes) {
    const IntegrationResult r = integrate(g, prior, mode(m));
    CHECK(mean_depth_error_mm(r.depth, s.depth) < 0.5);
    const NormalMap n = depth_to_normals(r.depth, s.intrinsics);
    const Mask interior = erode(s.normals.mask, 3);
    CHECK(mae_degrees(n, s.normals, &interior) < 1.5);
    for (std::size_t i = 0; i < r.depth.values.size(); ++i) {
      if (r.depth.mask[i]) CHECK(r.depth.values[i] > 0.0);
    }
  }
}

TEST_CASE("normals_to_log_gradients examples") {
  const CameraIntrinsics k = CameraIntrinsics::centered(5, 5, 100.0);
  NormalMap n(5, 5);
  for (std::size_t i = 0; i < n.vectors.size(); ++i) {
    n.vectors[i] = Vec3(0, 0, -1);
    n.mask[i] = 1;
  }
  n.vectors(2, 2) = Vec3(1, 0, 0);  // d = 0 at the principal point
  n.vectors(0, 0) = Vec3(0.6, 0, -0.8);
  const LogGradients g = normals_to_log_gradients(n, k);
  CHECK(g.mask(2, 2) == 0);
  CHECK(g.mask(1, 1) == 1);
  CHECK(g.p(1, 1) == 0.0);
  CHECK(g.q(1, 1) == 0.0);
  // d = (0 - 2) 0.6 + f (-0.8)
  const double d = -2.0 * 0.6 - 80.0;
  CHECK(g.p(0, 0) == doctest::Approx(-0.6 / d).epsilon(1e-14));
  CHECK(g.q(0, 0) == 0.0);

  NormalMap empty(5, 5);
  CHECK(count(normals_to_log_gradients(empty, k).mask) == 0);
}

TEST_CASE("sphere log gradients match finite differences of log depth") {
  const SyntheticScene s = scene(SceneShape::sphere);
  const LogGradients g = normals_to_log_gradients(s.normals, s.intrinsics);
  const Mask inner = erode(s.depth.mask, 6);
  double worst = 0.0;
  int n = 0;
  for (int row = 1; row + 1 < s.depth.height(); ++row) {
    for (int col = 1; col + 1 < s.depth.width(); ++col) {
      if (!inner(row, col)) continue;
      const auto lz = [&](int r, int c) { return std::log(s.depth.values(r, c)); };
      const double fp = 0.5 * (lz(row, col + 1) - lz(row, col - 1));
      const double fq = 0.5 * (lz(row + 1, col) - lz(row - 1, col));
      worst = std::max({worst, std::abs(fp - g.p(row, col)), std::abs(fq - g.q(row, col))});
      ++n;
    }
  }
  CHECK(n > 1000);
  CHECK(worst < 2e-4);
}

TEST_CASE("l1 integration resists gross gradient outliers") {
  const SyntheticScene s = scene(SceneShape::plane);
  const LogGradients g = normals_to_log_gradients(s.normals, s.intrinsics);
  const DepthMap prior = DepthMap::constant(g.mask, 0.15);
  const RobustnessComparison r = outlier_robustness_demo(g, s.depth, prior, 0.05, {}, 1);
  CHECK(r.corrupted > 0);
  CHECK(r.l1_mm < 0.5 * r.least_squares_mm);
  CHECK(r.l1_mm < 0.2);

  const RobustnessComparison clean = outlier_robustness_demo(g, s.depth, prior, 0.0, {}, 1);
  CHECK(clean.corrupted == 0);
  CHECK(std::abs(clean.l1_mm - clean.least_squares_mm) < 0.02);
  CHECK_THROWS_KIND(outlier_robustness_demo(g, s.depth, prior, 1.5, {}, 1),
                    ErrorKind::invalid_config);
}

TEST_CASE("ADMM reduces the primal residual") {
  const SyntheticScene s = scene(SceneShape::paraboloid);
  LogGradients g = normals_to_log_gradients(s.normals, s.intrinsics);
  Rng rng = make_rng(2, 0);
  for (std::size_t i = 0; i < g.mask.size(); ++i) {
    if (g.mask[i] && bernoulli(rng, 0.05)) g.p[i] += 0.03;
  }
  const IntegrationResult r =
      integrate(g, DepthMap::constant(g.mask, 0.15), mode(IntegrationMode::l1_admm));
  REQUIRE(r.primal_residuals.size() >= 2);
  CHECK(r.primal_residuals.back() < r.primal_residuals.front());
}

TEST_CASE("the solution does not depend on the starting iterate") {
  const SyntheticScene s = scene(SceneShape::paraboloid);
  const LogGradients g = normals_to_log_gradients(s.normals, s.intrinsics);
  const DepthMap prior = DepthMap::constant(g.mask, 0.15);
  Grid<double> start(g.mask.width(), g.mask.height(), std::log(0.15));
  Rng rng = make_rng(6, 0);
  for (double& v : start.values()) v += uniform(rng, -0.05, 0.05);
  const IntegrationResult a = integrate(g, prior, mode(IntegrationMode::least_squares));
  const IntegrationResult b = integrate(g, prior, mode(IntegrationMode::least_squares), &start);
  CHECK(max_relative_error(a.depth, b.depth) < 1e-6);
  const IntegrationResult c = integrate(g, prior, mode(IntegrationMode::l1_admm));
  const IntegrationResult d = integrate(g, prior, mode(IntegrationMode::l1_admm), &start);
  CHECK(mean_depth_error_mm(c.depth, d.depth) < 0.05);
}

TEST_CASE("parallel and serial normal operators agree") {
  const SyntheticScene s = scene(SceneShape::bumps);
  const detail::IntegrationDomain d(s.depth.mask);
  std::vector<double> x(d.nodes());
  Rng rng = make_rng(1, 0);
  for (double& v : x) v = uniform(rng, -1.0, 1.0);
  std::vector<double> a, b;
  detail::apply_normal_operator(d, 1.0, 0.25, x, a);
  detail::reference::apply_normal_operator(d, 1.0, 0.25, x, b);
  CHECK(a == b);

  // 1^T L 1 = 0 and the operator is symmetric.
  std::vector<double> ones(d.nodes(), 1.0), l1;
  detail::apply_normal_operator(d, 1.0, 0.0, ones, l1);
  double sum = 0.0;
  for (double v : l1) sum += std::abs(v);
  CHECK(sum < 1e-12);
  std::vector<double> y(d.nodes()), ly;
  for (double& v : y) v = uniform(rng, -1.0, 1.0);
  detail::apply_normal_operator(d, 1.0, 0.0, y, ly);
  detail::apply_normal_operator(d, 1.0, 0.0, x, a);
  CHECK(detail::dot(a, y) == doctest::Approx(detail::dot(x, ly)).epsilon(1e-12));
}

TEST_CASE("integration input validation") {
  LogGradients g = constant_gradients(8, 8, 0.0, 0.0);
  DepthMap prior = DepthMap::constant(g.mask, 0.15);
  g.mask = Mask(8, 8, 0);
  CHECK_THROWS_KIND(integrate(g, prior, {}), ErrorKind::empty_mask);
  g.mask = Mask(8, 8, 1);
  prior.values(3, 3) = -1.0;
  CHECK_THROWS_KIND(integrate(g, prior, {}), ErrorKind::invalid_depth);
  CHECK_THROWS_KIND(integrate(g, DepthMap::constant(Mask(9, 8, 1), 0.1), {}),
                    ErrorKind::dimension);
  IntegratorConfig c;
  c.lambda = -1.0;
  CHECK_THROWS_KIND(c.validate(), ErrorKind::invalid_config);
}
