#include <doctest.h>

#include <cmath>
#include <random>

#include "dragplan/errors.hpp"
#include "dragplan/rollout.hpp"
#include "dragplan/spline.hpp"
#include "oracles.hpp"

using namespace dragplan;

namespace {

WaypointSet line(double length) {
  WaypointSet w;
  w.keyframes = {{Eigen::Vector3d::Zero(), 0.0}, {Eigen::Vector3d(length, 0.0, 0.0), 0.0}};
  return w;
}

Eigen::MatrixXd nullspace(const Eigen::MatrixXd& A) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  return lu.kernel();
}

double snap_integral(const PolySpline& s) {
  double total = 0.0;
  for (int seg = 0; seg < s.segments(); ++seg) {
    for (int ch = 0; ch < 3; ++ch) {
      const std::span<const double> c(s.coefficients.data() + s.index(seg, ch, 0), s.order + 1);
      total += oracle::simpson([&](double t) { return std::pow(polynomial_derivative(c, 4, t), 2); }, 0.0,
                               s.durations[seg], 10000);
    }
  }
  return total;
}

}  // namespace

TEST_CASE("time allocation") {
  CHECK(allocate_times(line(2.0), 2.0) == std::vector<double>{1.0});
  CHECK(allocate_times(line(0.0), 2.0) == std::vector<double>{kMinSegmentDuration});
  WaypointSet w;
  w.keyframes = {{Eigen::Vector3d::Zero(), 0.0}, {Eigen::Vector3d(0, 1, 0), 0.0}, {Eigen::Vector3d(0, 1, 3), 0.0}};
  const std::vector<double> d = allocate_times(w, 2.0);
  REQUIRE(d.size() == 2);
  CHECK(d[0] == doctest::Approx(0.5));
  CHECK(d[1] == doctest::Approx(1.5));

  w.times = std::vector<double>{0.0, 2.0, 2.5};
  CHECK(segment_durations(w, 2.0) == std::vector<double>{2.0, 0.5});
}

TEST_CASE("snap cost entries") {
  const std::vector<double> T{1.0};
  const Eigen::MatrixXd H = build_snap_cost(7, T, 1.0);
  REQUIRE(H.rows() == 32);
  CHECK(H(4, 4) == doctest::Approx(576.0));
  CHECK(H(4, 5) == doctest::Approx(1440.0));
  CHECK(H(3, 3) == 0.0);
  CHECK(H.isApprox(H.transpose()));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-9);

  // Closed form for k, l >= 4 at a non-unit duration.
  const std::vector<double> T2{1.7};
  const Eigen::MatrixXd H2 = build_snap_cost(7, T2, 1.0);
  auto falling = [](int k) { return double(k * (k - 1) * (k - 2) * (k - 3)); };
  for (int k = 4; k <= 7; ++k)
    for (int l = 4; l <= 7; ++l)
      CHECK(H2(8 + k, 8 + l) == doctest::Approx(falling(k) * falling(l) * std::pow(1.7, k + l - 7) / (k + l - 7)));
}

TEST_CASE("snap quadratic form matches quadrature") {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    PolySpline s;
    s.durations = {0.8, 1.3, 0.6};
    s.coefficients = Eigen::VectorXd::NullaryExpr(s.size(), [&] { return n(gen); });
    const Eigen::MatrixXd H = build_snap_cost(7, s.durations, 0.0);
    const double quad = s.coefficients.dot(H * s.coefficients);
    CHECK(std::abs(quad - snap_integral(s)) <= 1e-6 * quad);
  }
}

TEST_CASE("rest-to-rest single segment") {
  const PolySpline s = plan_minsnap(line(1.0), SplineSettings{7, 1.0, 1.0});
  REQUIRE(s.segments() == 1);
  REQUIRE(s.size() == 32);
  const double expected[8] = {0, 0, 0, 0, 35, -84, 70, -20};
  for (int k = 0; k < 8; ++k) CHECK(std::abs(s.coefficients[s.index(0, 0, k)] - expected[k]) <= 1e-7);
  for (int k = 0; k < 8; ++k) CHECK(std::abs(s.coefficients[s.index(0, 1, k)]) <= 1e-7);

  const FlatState start = s.evaluate(0.0);
  CHECK(start.velocity.norm() == 0.0);
  CHECK(start.acceleration.norm() == 0.0);
  CHECK(start.jerk.norm() == 0.0);
  CHECK(s.evaluate(0.5).position.x() == doctest::Approx(0.5).epsilon(1e-9));

  const QpSystem qp = build_qp(line(1.0), s.durations, 7, 1.0);
  CHECK((qp.A * s.coefficients - qp.b).cwiseAbs().maxCoeff() <= 1e-8);
  // One segment: the position channels are fully pinned by 8 rows each.
  Eigen::FullPivLU<Eigen::MatrixXd> lu(qp.A);
  CHECK(lu.rank() == qp.A.rows());
  const Eigen::MatrixXd N = nullspace(qp.A);
  for (int ch = 0; ch < 3; ++ch)
    for (int k = 0; k < 8; ++k) CHECK(N.row(s.index(0, ch, k)).norm() <= 1e-12);
}

TEST_CASE("zero constraints give the zero spline") {
  WaypointSet w;
  w.keyframes = {{Eigen::Vector3d::Zero(), 0.0}, {Eigen::Vector3d::Zero(), 0.0}, {Eigen::Vector3d::Zero(), 0.0}};
  w.times = std::vector<double>{0.0, 1.0, 2.0};
  const PolySpline s = plan_minsnap(w, SplineSettings{});
  CHECK(s.coefficients.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("minsnap solutions on sampled waypoints") {
  const SplineSettings settings;
  std::mt19937_64 gen(8);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const WaypointSet w = sample_waypoints(seed);
    const PolySpline s = plan_minsnap(w, settings);
    REQUIRE(s.size() == 96);
    const QpSystem qp = build_qp(w, s.durations, 7, settings.yaw_rate_weight);
    CHECK((qp.A * s.coefficients - qp.b).cwiseAbs().maxCoeff() <= 1e-8);

    // Optimality against feasible perturbations.
    const Eigen::MatrixXd N = nullspace(qp.A);
    const double best = s.coefficients.dot(qp.H * s.coefficients);
    for (int k = 0; k < 100; ++k) {
      const Eigen::VectorXd xi = Eigen::VectorXd::NullaryExpr(N.cols(), [&] { return n(gen); });
      const Eigen::VectorXd other = s.coefficients + N * xi * 1e-2;
      CHECK(best <= other.dot(qp.H * other) * (1.0 + 1e-12));
    }

    // Keyframes are interpolated.
    double t = 0.0;
    for (std::size_t i = 0; i < w.keyframes.size(); ++i) {
      const FlatState f = s.evaluate(t);
      CHECK((f.position - w.keyframes[i].position).norm() <= 1e-7);
      CHECK(std::abs(f.yaw - w.keyframes[i].yaw) <= 1e-7);
      if (i < s.durations.size()) t += s.durations[i];
    }

    // Junction continuity up to jerk.
    for (int seg = 0; seg + 1 < s.segments(); ++seg) {
      for (int ch = 0; ch < 4; ++ch) {
        const std::span<const double> a(s.coefficients.data() + s.index(seg, ch, 0), 8);
        const std::span<const double> b(s.coefficients.data() + s.index(seg + 1, ch, 0), 8);
        const int top = ch == PolySpline::kYaw ? 1 : 3;
        for (int d = 0; d <= top; ++d) {
          const double left = polynomial_derivative(a, d, s.durations[seg]);
          const double right = polynomial_derivative(b, d, 0.0);
          CHECK(std::abs(left - right) <= 1e-8 * (1.0 + std::abs(left)));
        }
      }
    }
  }
}

TEST_CASE("minsnap is translation invariant") {
  const SplineSettings settings;
  const WaypointSet w = sample_waypoints(21);
  WaypointSet moved = w;
  const Eigen::Vector3d shift(3.0, -1.5, 0.25);
  for (auto& k : moved.keyframes) k.position += shift;
  const PolySpline a = plan_minsnap(w, settings);
  const PolySpline b = plan_minsnap(moved, settings);
  for (int seg = 0; seg < a.segments(); ++seg) {
    for (int ch = 0; ch < 4; ++ch) {
      for (int k = 0; k <= 7; ++k) {
        const double offset = (k == 0 && ch < 3) ? shift[ch] : 0.0;
        CHECK(std::abs(b.coefficients[a.index(seg, ch, k)] - a.coefficients[a.index(seg, ch, k)] - offset) <= 1e-7);
      }
    }
  }
}

TEST_CASE("evaluation derivatives agree with central differences") {
  const PolySpline s = plan_minsnap(sample_waypoints(3), SplineSettings{});
  const double h = 1e-5;
  for (double t : {0.3, 0.9, 1.7, 2.2}) {
    if (t + h >= s.total_duration()) continue;
    const FlatState f = s.evaluate(t);
    const FlatState fp = s.evaluate(t + h), fm = s.evaluate(t - h);
    CHECK(((fp.position - fm.position) / (2 * h) - f.velocity).norm() <= 1e-6 * (1.0 + f.velocity.norm()));
    CHECK(((fp.velocity - fm.velocity) / (2 * h) - f.acceleration).norm() <= 1e-5 * (1.0 + f.acceleration.norm()));
    CHECK(((fp.jerk - fm.jerk) / (2 * h) - f.snap).norm() <= 1e-4 * (1.0 + f.snap.norm()));
    CHECK((fp.yaw - fm.yaw) / (2 * h) == doctest::Approx(f.yaw_rate).epsilon(1e-6));
  }
}

TEST_CASE("out-of-range times clamp and flag") {
  const PolySpline s = plan_minsnap(line(1.0), SplineSettings{7, 1.0, 1.0});
  CHECK(s.sample(-0.5).clamped);
  CHECK(s.sample(2.0).clamped);
  CHECK_FALSE(s.sample(0.5).clamped);
  CHECK(s.sample(2.0).flat.position.x() == doctest::Approx(1.0));
}

TEST_CASE("snap cost is nonnegative and vanishes on low-order motion") {
  std::mt19937_64 gen(12);
  std::normal_distribution<double> n(0.0, 1.0);
  const std::vector<double> T{0.7, 1.1};
  const Eigen::MatrixXd H = build_snap_cost(7, T, 2.0);
  for (int k = 0; k < 50; ++k) {
    const Eigen::VectorXd c = Eigen::VectorXd::NullaryExpr(H.rows(), [&] { return n(gen); });
    CHECK(c.dot(H * c) >= 0.0);
  }
  PolySpline cubic;
  cubic.durations = T;
  cubic.coefficients = Eigen::VectorXd::Zero(cubic.size());
  for (int seg = 0; seg < 2; ++seg) {
    for (int ch = 0; ch < 3; ++ch)
      for (int k = 0; k <= 3; ++k) cubic.coefficients[cubic.index(seg, ch, k)] = n(gen);
    cubic.coefficients[cubic.index(seg, PolySpline::kYaw, 0)] = n(gen);
  }
  CHECK(std::abs(cubic.coefficients.dot(H * cubic.coefficients)) <= 1e-12);
}

TEST_CASE("json round trips") {
  const PolySpline s = plan_minsnap(sample_waypoints(5), SplineSettings{});
  const PolySpline back = spline_from_json(spline_to_json(s));
  CHECK(back.order == s.order);
  CHECK(back.durations == s.durations);
  CHECK(back.coefficients == s.coefficients);

  const WaypointSet w = sample_waypoints(6);
  const WaypointSet wb = waypoints_from_json(waypoints_to_json(w));
  REQUIRE(wb.keyframes.size() == w.keyframes.size());
  for (std::size_t i = 0; i < w.keyframes.size(); ++i) {
    CHECK(wb.keyframes[i].position == w.keyframes[i].position);
    CHECK(wb.keyframes[i].yaw == w.keyframes[i].yaw);
  }
  CHECK_THROWS(spline_from_json("{\"order\": 7}"));
  CHECK_THROWS(waypoints_from_json("{\"keyframes\": [[0, 0, 0, 0]]}"));
}

TEST_CASE("spline validation") {
  PolySpline s;
  s.durations = {1.0};
  s.coefficients = Eigen::VectorXd::Zero(31);
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.coefficients = Eigen::VectorXd::Zero(32);
  CHECK_NOTHROW(s.validate());
  s.durations = {0.0};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}
